import numpy as np
import pytest

from fedfreq.data import (
    CLASSES,
    FEATURE_DIM,
    ClientProfile,
    DataError,
    _transform_vectors,
    default_profiles,
    load_client,
    ood_client,
    ood_profile,
    save_client,
    synth,
)


def test_default_profiles_full_scale_totals():
    totals = [p.n_samples for p in default_profiles(1.0)]
    assert totals == [2987, 3868, 1635, 2000]


def test_default_profiles_desk_scale_totals():
    totals = [p.n_samples for p in default_profiles(0.1)]
    assert totals == [299, 387, 164, 200]  # round-half-up


def test_default_profiles_class_ratios():
    b = default_profiles(1.0)[1]
    assert abs(b.class_proportions[0] - 0.9617) < 1e-4
    assert abs(b.class_proportions[1] - 0.0321) < 1e-4
    assert abs(b.class_proportions[2] - 0.0062) < 1e-4
    for p in default_profiles(0.3):
        assert abs(sum(p.class_proportions) - 1.0) < 1e-9


def test_default_profiles_distinct_transforms():
    rotations = [p.rotation_deg for p in default_profiles(0.1)]
    assert rotations == [0.0, 25.0, 50.0, 75.0]


def test_default_profiles_scale_validation():
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(DataError):
            default_profiles(bad)
    with pytest.raises(DataError):
        default_profiles(0.01)  # client C would get 16 samples


def test_profile_validation():
    scale, shift = _transform_vectors(1.0, 0.0, 0.0)
    with pytest.raises(DataError):
        ClientProfile(20, (0.5, 0.3, 0.2), 0.0, scale, shift, 0)
    with pytest.raises(DataError):
        ClientProfile(100, (0.6, 0.3, 0.2), 0.0, scale, shift, 0)


def test_synth_deterministic():
    profiles = default_profiles(0.1)
    a = synth(profiles, 7)
    b = synth(profiles, 7)
    for ca, cb in zip(a.clients, b.clients):
        assert np.array_equal(ca.features, cb.features)
        assert np.array_equal(ca.labels, cb.labels)
        assert np.array_equal(ca.train_idx, cb.train_idx)


def test_split_sizes_for_200_samples():
    client = synth(default_profiles(0.1), 0).clients[3]  # 200 samples
    assert len(client.train_idx) == 140
    assert len(client.val_idx) == 20
    assert len(client.test_idx) == 40


def test_splits_disjoint_and_exhaustive():
    for client in synth(default_profiles(0.1), 3).clients:
        n = len(client.labels)
        combined = np.concatenate([client.train_idx, client.val_idx, client.test_idx])
        assert len(combined) == n
        assert len(np.unique(combined)) == n


def test_stratification_within_one_of_ideal():
    rng = np.random.default_rng(0)
    scale, shift = _transform_vectors(1.0, 0.0, 0.0)
    for trial in range(30):
        props = rng.dirichlet(np.ones(3) * rng.uniform(0.5, 4.0))
        props = props / props.sum()
        profile = ClientProfile(
            int(rng.integers(40, 500)), tuple(props), 0.0, scale, shift, trial
        )
        client = synth([profile], 11).clients[0]
        for idx, ratio in ((client.train_idx, 0.7), (client.val_idx, 0.1), (client.test_idx, 0.2)):
            got = np.bincount(client.labels[idx], minlength=3)
            for c in range(3):
                ideal = np.count_nonzero(client.labels == c) * ratio
                assert abs(got[c] - ideal) <= 1.0


def test_split_ratio_totals_largest_remainder():
    rng = np.random.default_rng(1)
    scale, shift = _transform_vectors(1.0, 0.0, 0.0)
    for trial in range(20):
        n = int(rng.integers(40, 400))
        profile = ClientProfile(n, (0.5, 0.3, 0.2), 0.0, scale, shift, trial)
        client = synth([profile], 5).clients[0]
        ideal = [0.7 * n, 0.1 * n, 0.2 * n]
        sizes = [len(client.train_idx), len(client.val_idx), len(client.test_idx)]
        assert sum(sizes) == n
        for size, want in zip(sizes, ideal):
            assert abs(size - want) < 1.0


def test_seed_isolation():
    profiles = default_profiles(0.1)
    base = synth(profiles, 9)
    tweaked_profiles = default_profiles(0.1)
    object.__setattr__(tweaked_profiles[2], "seed", 77)
    tweaked = synth(tweaked_profiles, 9)
    for i in (0, 1, 3):
        assert np.array_equal(base.clients[i].features, tweaked.clients[i].features)
    assert not np.array_equal(base.clients[2].features, tweaked.clients[2].features)


def test_heterogeneity_hurts_cross_client_transfer():
    # nearest-centroid is a linear classifier; train on one client, test on
    # a client with a different transform
    wins = 0
    for seed in range(5):
        base = default_profiles(0.2)
        src, dst = base[0], base[2]  # rotations 0 vs 50, gains 1.0 vs 0.7
        object.__setattr__(dst, "seed", src.seed)
        ds = synth([src, dst], seed)
        a, b = ds.clients

        x, y = a.train_xy()
        centroids = np.stack([x[y == c].mean(axis=0) for c in range(CLASSES)])

        def predict(features):
            d = ((features[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
            return d.argmin(axis=1)

        ax, ay = a.test_xy()
        bx, by = b.test_xy()
        own = np.mean(predict(ax) == ay)
        cross = np.mean(predict(bx) == by)
        wins += own > cross
    assert wins >= 4


def test_ood_profile_outside_training_range():
    profiles = default_profiles(0.1)
    ood = ood_profile(profiles)
    assert ood.rotation_deg == 110.0
    assert all(ood.rotation_deg > p.rotation_deg for p in profiles)
    assert ood.n_samples == 43  # round-half-up of 0.1 * 427


def test_ood_client_is_evaluation_only():
    profiles = default_profiles(0.1)
    client = ood_client(profiles, 4)
    assert len(client.train_idx) == 0
    assert len(client.val_idx) == 0
    assert len(client.test_idx) == len(client.labels)


def test_ood_client_deterministic():
    profiles = default_profiles(0.1)
    a = ood_client(profiles, 4)
    b = ood_client(profiles, 4)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)


# --- dataset files ---------------------------------------------------------------


def test_dataset_file_roundtrip(tmp_path):
    client = synth(default_profiles(0.1), 2).clients[1]
    path = tmp_path / "client.fsd"
    save_client(client, path)
    loaded = load_client(path)
    assert loaded.features.shape == (len(client.labels), FEATURE_DIM)
    for split in ("train", "val", "test"):
        ox, oy = client.split_xy(split)
        lx, ly = loaded.split_xy(split)
        assert np.array_equal(ox, lx)
        assert np.array_equal(oy, ly)


def test_dataset_file_bad_magic(tmp_path):
    path = tmp_path / "bad.fsd"
    path.write_bytes(b"NOPE" + b"\x00" * 40)
    with pytest.raises(DataError):
        load_client(path)


def test_dataset_file_truncated(tmp_path):
    client = synth(default_profiles(0.1), 2).clients[0]
    path = tmp_path / "client.fsd"
    save_client(client, path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(DataError):
        load_client(path)
