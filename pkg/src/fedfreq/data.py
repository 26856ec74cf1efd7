"""Synthetic heterogeneous clients for federated experiments.

Each client draws class-conditional Gaussian features and passes them
through a client-specific affine transform (plane rotation, per-dimension
scale, mean shift).  The default profiles copy the size and class-ratio
structure of a 4-site, 3-class benchmark (totals 2987 / 3868 / 1635 / 2000,
scaled down) so one site is heavily imbalanced and sites differ in volume.

Feature layout (``FEATURE_DIM = 32``):

- dims 0..1: one strong signal plane that the client rotation acts on, so
  this part of the class structure is *client-specific*;
- dims 2..29: fourteen weak signal planes outside the rotation, *shared*
  across clients.  No client has enough samples to estimate this thin
  structure well on its own, which is the channel along which federation
  can actually help;
- dims 30..31: zero-mean noise where the client mean shift lives.

Class means sit 120 degrees apart in every signal plane, so a rotation by
120 degrees would alias one class onto the next; training clients span
0..75 degrees and the out-of-distribution client sits at 110 degrees.
Client gains and shifts spread widely (0.7x..1.7x, offsets up to 6), which
is what makes element-wise parameter averaging miscalibrated per client.

Splits are 7:1:2 (largest-remainder on the totals) and stratified so that
every per-split class count is within one sample of exact proportionality.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from itertools import combinations, product
from pathlib import Path

import numpy as np

FEATURE_DIM = 32
CLASSES = 3

SIGNAL_ROT = 0.8  # class-mean radius in the rotated plane (dims 0..1)
SIGNAL_SHARED = 0.25  # class-mean radius in each shared plane
N_SHARED_PLANES = 14  # shared planes occupy dims 2 .. 2*(N+1)-1
NOISE_SIGMA = 1.0

SPLIT_RATIOS = (0.7, 0.1, 0.2)
SPLIT_NAMES = ("train", "val", "test")

# per-class totals of the reference 4-site benchmark
TABLE_COUNTS = (
    (1832, 475, 680),
    (3720, 124, 24),
    (803, 490, 342),
    (1372, 254, 374),
)

# client transforms: (rotation deg, global gain, shift magnitude, shift angle);
# the shift vector lives in the trailing noise dims
DEFAULT_TRANSFORMS = (
    (0.0, 1.00, 0.0, 0.0),
    (25.0, 1.40, 2.0, 90.0),
    (50.0, 0.70, 4.0, 180.0),
    (75.0, 1.70, 6.0, 270.0),
)
OOD_TRANSFORM = (110.0, 1.05, 2.0, 45.0)
OOD_REFERENCE_COUNT = 427  # unseen-cohort size at scale 1.0


class DataError(ValueError):
    """Invalid dataset file or generation profile."""


@dataclass(frozen=True)
class ClientProfile:
    """Generator settings for one client's data."""

    n_samples: int
    class_proportions: tuple[float, float, float]
    rotation_deg: float
    scale: tuple[float, ...]  # per-dimension gain, length FEATURE_DIM
    shift: tuple[float, ...]  # additive offset, length FEATURE_DIM
    seed: int

    def __post_init__(self) -> None:
        if self.n_samples < 30:
            raise DataError(f"client needs >= 30 samples, got {self.n_samples}")
        if abs(sum(self.class_proportions) - 1.0) > 1e-9:
            raise DataError("class proportions must sum to 1")
        if any(p < 0 for p in self.class_proportions):
            raise DataError("class proportions must be non-negative")
        if len(self.scale) != FEATURE_DIM or len(self.shift) != FEATURE_DIM:
            raise DataError(f"scale/shift must have length {FEATURE_DIM}")


@dataclass
class ClientData:
    features: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    profile: ClientProfile | None = None

    def split_xy(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        idx = {"train": self.train_idx, "val": self.val_idx, "test": self.test_idx}[split]
        return self.features[idx], self.labels[idx]

    def train_xy(self):
        return self.split_xy("train")

    def val_xy(self):
        return self.split_xy("val")

    def test_xy(self):
        return self.split_xy("test")


@dataclass
class FederatedDataset:
    clients: list[ClientData]


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _largest_remainder(total: int, weights: tuple[float, ...]) -> list[int]:
    """Integer allocation of ``total`` by weights; ties go to earlier entries."""
    ideal = [total * w for w in weights]
    alloc = [int(np.floor(v)) for v in ideal]
    order = sorted(range(len(weights)), key=lambda i: (-(ideal[i] - alloc[i]), i))
    for i in order[: total - sum(alloc)]:
        alloc[i] += 1
    return alloc


def _transform_vectors(gain: float, shift_mag: float, shift_deg: float):
    scale = tuple(float(gain) for _ in range(FEATURE_DIM))
    shift = [0.0] * FEATURE_DIM
    theta = np.deg2rad(shift_deg)
    shift[FEATURE_DIM - 2] = shift_mag * float(np.cos(theta))  # offsets live in noise dims
    shift[FEATURE_DIM - 1] = shift_mag * float(np.sin(theta))
    return scale, tuple(shift)


def default_profiles(scale: float) -> list[ClientProfile]:
    """Four clients mirroring the reference benchmark, scaled by ``scale``.

    Sample counts are round-half-up of ``scale`` times the reference totals;
    class proportions keep the reference ratios.  Raises DataError when the
    scale is outside (0, 1] or any scaled count drops below 30.
    """
    if not 0.0 < scale <= 1.0:
        raise DataError(f"scale must lie in (0, 1], got {scale}")
    profiles = []
    for i, counts in enumerate(TABLE_COUNTS):
        total = sum(counts)
        n = _round_half_up(scale * total)
        if n < 30:
            raise DataError(f"scale {scale} gives client {i} only {n} samples (< 30)")
        rotation, gain, shift_mag, shift_deg = DEFAULT_TRANSFORMS[i]
        scale_vec, shift_vec = _transform_vectors(gain, shift_mag, shift_deg)
        profiles.append(
            ClientProfile(
                n_samples=n,
                class_proportions=tuple(c / total for c in counts),
                rotation_deg=rotation,
                scale=scale_vec,
                shift=shift_vec,
                seed=i,
            )
        )
    return profiles


def class_means() -> np.ndarray:
    """Pre-transform class means: 120-degree layout in each signal plane."""
    means = np.zeros((CLASSES, FEATURE_DIM))
    planes = [(0, SIGNAL_ROT)] + [
        (2 * (i + 1), SIGNAL_SHARED) for i in range(N_SHARED_PLANES)
    ]
    for c in range(CLASSES):
        angle = 2.0 * np.pi * c / CLASSES
        for plane, radius in planes:
            means[c, plane] = radius * np.cos(angle)
            means[c, plane + 1] = radius * np.sin(angle)
    return means


def _rotation_matrix(deg: float) -> np.ndarray:
    rot = np.eye(FEATURE_DIM)
    t = np.deg2rad(deg)
    block = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    rot[0:2, 0:2] = block  # only the client-specific plane rotates
    return rot


def _stratified_split(class_counts: list[int], total: int) -> list[list[int]]:
    """Allocation matrix [class][split] with exact 7:1:2 split totals.

    Every cell is floor(ideal) or floor(ideal)+1 and both margins are met
    exactly; among valid roundings the one keeping the most fractional mass
    is chosen (deterministic tie-break by enumeration order).
    """
    quotas = _largest_remainder(total, SPLIT_RATIOS)
    ideal = [[c * r for r in SPLIT_RATIOS] for c in class_counts]
    base = [[int(np.floor(v)) for v in row] for row in ideal]
    row_def = [class_counts[c] - sum(base[c]) for c in range(len(class_counts))]
    col_def = [quotas[s] - sum(base[c][s] for c in range(len(class_counts))) for s in range(3)]
    # enumerate the +1 cells per class; margins are small so this is tiny
    options = [list(combinations(range(3), row_def[c])) for c in range(len(class_counts))]
    best, best_mass = None, -1.0
    for choice in product(*options):
        fill = [0, 0, 0]
        for cells in choice:
            for s in cells:
                fill[s] += 1
        if fill != col_def:
            continue
        mass = sum(ideal[c][s] - base[c][s] for c, cells in enumerate(choice) for s in cells)
        if mass > best_mass + 1e-12:
            best, best_mass = choice, mass
    if best is None:
        raise DataError("infeasible stratified split")  # cannot happen with consistent margins
    return [
        [base[c][s] + (1 if s in best[c] else 0) for s in range(3)]
        for c in range(len(class_counts))
    ]


def _generate_client(profile: ClientProfile, global_seed: int) -> ClientData:
    rng = np.random.default_rng([int(global_seed), int(profile.seed)])
    counts = _largest_remainder(profile.n_samples, profile.class_proportions)
    labels = np.repeat(np.arange(CLASSES), counts)
    means = class_means()
    z = means[labels] + NOISE_SIGMA * rng.standard_normal((profile.n_samples, FEATURE_DIM))
    x = z @ _rotation_matrix(profile.rotation_deg).T
    x = x * np.asarray(profile.scale) + np.asarray(profile.shift)
    perm = rng.permutation(profile.n_samples)
    x, labels = x[perm], labels[perm]

    alloc = _stratified_split(counts, profile.n_samples)
    split_idx: dict[str, list[np.ndarray]] = {name: [] for name in SPLIT_NAMES}
    for c in range(CLASSES):
        members = np.flatnonzero(labels == c)
        start = 0
        for s, name in enumerate(SPLIT_NAMES):
            split_idx[name].append(members[start : start + alloc[c][s]])
            start += alloc[c][s]
    return ClientData(
        features=x,
        labels=labels,
        train_idx=np.sort(np.concatenate(split_idx["train"])),
        val_idx=np.sort(np.concatenate(split_idx["val"])),
        test_idx=np.sort(np.concatenate(split_idx["test"])),
        profile=profile,
    )


def synth(profiles: list[ClientProfile], global_seed: int) -> FederatedDataset:
    """Generate all client datasets; deterministic in (profiles, seed).

    Each client uses its own RNG stream keyed by (global_seed, profile.seed),
    so one client's data never depends on another's profile.
    """
    return FederatedDataset(clients=[_generate_client(p, global_seed) for p in profiles])


def ood_profile(profiles: list[ClientProfile]) -> ClientProfile:
    """Held-out evaluation profile with a rotation outside the training range."""
    scale = sum(p.n_samples for p in profiles) / sum(sum(c) for c in TABLE_COUNTS[: len(profiles)])
    pooled = np.sum(TABLE_COUNTS, axis=0)
    rotation, gain, shift_mag, shift_deg = OOD_TRANSFORM
    scale_vec, shift_vec = _transform_vectors(gain, shift_mag, shift_deg)
    return ClientProfile(
        n_samples=max(30, _round_half_up(scale * OOD_REFERENCE_COUNT)),
        class_proportions=tuple(float(c) / float(pooled.sum()) for c in pooled),
        rotation_deg=rotation,
        scale=scale_vec,
        shift=shift_vec,
        seed=9999,
    )


def ood_client(profiles: list[ClientProfile], seed: int) -> ClientData:
    """Out-of-distribution client used only for evaluation (everything is test)."""
    client = _generate_client(ood_profile(profiles), seed)
    n = len(client.labels)
    client.train_idx = np.empty(0, dtype=np.int64)
    client.val_idx = np.empty(0, dtype=np.int64)
    client.test_idx = np.arange(n)
    return client


# --- flat binary dataset files (FSD1) ---------------------------------------
#
# header: magic "FSD1", then uint32 feature_dim, classes, n_train, n_val,
# n_test (little-endian); body: all features as little-endian float64 rows
# (train block, then val, then test), then all labels as little-endian int32.

_MAGIC = b"FSD1"
_HEADER = struct.Struct("<4sIIIII")


def save_client(client: ClientData, path) -> None:
    order = np.concatenate([client.train_idx, client.val_idx, client.test_idx])
    feats = np.ascontiguousarray(client.features[order], dtype="<f8")
    labels = np.ascontiguousarray(client.labels[order], dtype="<i4")
    header = _HEADER.pack(
        _MAGIC,
        client.features.shape[1],
        CLASSES,
        len(client.train_idx),
        len(client.val_idx),
        len(client.test_idx),
    )
    Path(path).write_bytes(header + feats.tobytes() + labels.tobytes())


def load_client(path) -> ClientData:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated dataset file")
    magic, dim, classes, n_train, n_val, n_test = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if classes != CLASSES:
        raise DataError(f"{path}: expected {CLASSES} classes, got {classes}")
    n = n_train + n_val + n_test
    expect = _HEADER.size + n * dim * 8 + n * 4
    if len(raw) != expect:
        raise DataError(f"{path}: expected {expect} bytes, got {len(raw)}")
    feats = np.frombuffer(raw, dtype="<f8", count=n * dim, offset=_HEADER.size)
    labels = np.frombuffer(raw, dtype="<i4", count=n, offset=_HEADER.size + n * dim * 8)
    return ClientData(
        features=feats.reshape(n, dim).astype(np.float64),
        labels=labels.astype(np.int64),
        train_idx=np.arange(0, n_train),
        val_idx=np.arange(n_train, n_train + n_val),
        test_idx=np.arange(n_train + n_val, n),
    )
