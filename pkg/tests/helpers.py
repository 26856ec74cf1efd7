"""Independent oracles used across the test suite.

Everything here is deliberately written from first principles (explicit
double sums, literal loops, pairwise counting) so it shares no code path
with the package implementation it checks.
"""

from __future__ import annotations

import numpy as np


def direct_dft2(m: np.ndarray) -> np.ndarray:
    """Unnormalized 2-D DFT by direct evaluation of the double sum."""
    m = np.asarray(m, dtype=np.float64)
    rows, cols = m.shape
    x = np.arange(rows)
    y = np.arange(cols)
    w_rows = np.exp(-2j * np.pi * np.outer(x, x) / rows)
    w_cols = np.exp(-2j * np.pi * np.outer(y, y) / cols)
    return w_rows @ m.astype(complex) @ w_cols


def direct_idft2(f: np.ndarray) -> np.ndarray:
    """Inverse of :func:`direct_dft2` including the 1/(rows*cols) factor."""
    f = np.asarray(f, dtype=np.complex128)
    rows, cols = f.shape
    x = np.arange(rows)
    y = np.arange(cols)
    w_rows = np.exp(2j * np.pi * np.outer(x, x) / rows)
    w_cols = np.exp(2j * np.pi * np.outer(y, y) / cols)
    return (w_rows @ f @ w_cols) / (rows * cols)


def signed_index(k: int, n: int) -> int:
    """Signed frequency index of DFT bin k for axis length n."""
    return k - n if k > n // 2 else k


def oracle_mask(rows: int, cols: int, r: float) -> np.ndarray:
    """Low-frequency indicator in standard DFT coordinates, by literal loops."""
    half_r = int(np.floor(r * rows))
    half_c = int(np.floor(r * cols))
    mask = np.zeros((rows, cols), dtype=bool)
    for i in range(rows):
        for j in range(cols):
            if abs(signed_index(i, rows)) <= half_r and abs(signed_index(j, cols)) <= half_c:
                mask[i, j] = True
    return mask


def fd_gradient(loss_fn, params: dict, step: float = 1e-5) -> dict:
    """Central finite-difference gradient of loss_fn w.r.t. every entry."""
    grads = {}
    for name, tensor in params.items():
        g = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn(params)
            flat[i] = orig - step
            lo = loss_fn(params)
            flat[i] = orig
            gf[i] = (hi - lo) / (2.0 * step)
        grads[name] = g
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a-b| / max(1e-8, |a|, |b|), the usual gradient-check ratio."""
    scale = np.maximum(1e-8, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / scale))


def brute_force_f1(predictions, labels, classes: int) -> float:
    """Macro F1 via literal per-class counting loops."""
    f1_sum = 0.0
    for c in range(classes):
        tp = fp = fn = 0
        for p, t in zip(predictions, labels):
            if p == c and t == c:
                tp += 1
            elif p == c:
                fp += 1
            elif t == c:
                fn += 1
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1_sum += 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return f1_sum / classes


def brute_force_auc(scores, labels, classes: int) -> float:
    """Macro one-vs-rest AUC by exhaustive pairwise comparison."""
    labels = np.asarray(labels)
    aucs = []
    for c in range(classes):
        pos = [s[c] for s, t in zip(scores, labels) if t == c]
        neg = [s[c] for s, t in zip(scores, labels) if t != c]
        if not pos or not neg:
            continue
        wins = 0.0
        for sp in pos:
            for sn in neg:
                if sp > sn:
                    wins += 1.0
                elif sp == sn:
                    wins += 0.5
        aucs.append(wins / (len(pos) * len(neg)))
    if not aucs:
        raise ValueError("undefined")
    return sum(aucs) / len(aucs)
