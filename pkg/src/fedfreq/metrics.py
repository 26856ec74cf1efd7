"""Macro-averaged F1 and one-vs-rest AUC for multiclass classification.

Both metrics average per-class values without class weighting so that rare
classes count as much as common ones.  Degenerate cases follow fixed
conventions: a class with zero precision+recall contributes F1 = 0, and AUC
skips classes that have no positives or no negatives (ties count 0.5 via
the Mann-Whitney rank statistic).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EvalResult:
    macro_f1: float
    macro_auc: float
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    confusion: np.ndarray


def confusion_matrix(predictions: np.ndarray, labels: np.ndarray, classes: int) -> np.ndarray:
    """``classes x classes`` counts; rows are true classes, columns predicted."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape or predictions.size < 1:
        raise ValueError("predictions and labels must be equal-length and non-empty")
    if predictions.min() < 0 or predictions.max() >= classes:
        raise ValueError("prediction out of class range")
    if labels.min() < 0 or labels.max() >= classes:
        raise ValueError("label out of class range")
    cm = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def per_class_prf(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Precision, recall, F1 per class from a confusion matrix (0 on 0/0)."""
    tp = np.diag(cm).astype(np.float64)
    pred = cm.sum(axis=0).astype(np.float64)
    true = cm.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred > 0, tp / pred, 0.0)
        recall = np.where(true > 0, tp / true, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    return precision, recall, f1


def macro_f1(predictions: np.ndarray, labels: np.ndarray, classes: int) -> float:
    """Unweighted mean of per-class F1 = 2PR/(P+R); degenerate classes give 0."""
    cm = confusion_matrix(predictions, labels, classes)
    _, _, f1 = per_class_prf(cm)
    return float(f1.sum() / classes)


def macro_auc(scores: np.ndarray, labels: np.ndarray, classes: int) -> float:
    """One-vs-rest AUC per class via the rank statistic, macro averaged.

    Classes with zero positives or zero negatives are skipped; if every
    class is skipped the metric is undefined and a ValueError is raised.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape != (len(labels), classes):
        raise ValueError(f"scores must have shape (n, {classes})")
    aucs = []
    for c in range(classes):
        pos = labels == c
        n_pos = int(pos.sum())
        n_neg = len(labels) - n_pos
        if n_pos == 0 or n_neg == 0:
            continue
        ranks = _average_ranks(scores[:, c])
        u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
        aucs.append(u / (n_pos * n_neg))
    if not aucs:
        raise ValueError("AUC undefined: every class lacks positives or negatives")
    return float(sum(aucs) / len(aucs))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their group."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def evaluate(probs: np.ndarray, labels: np.ndarray, classes: int) -> EvalResult:
    """Full evaluation from probability rows: F1, AUC, per-class P/R/F1."""
    probs = np.asarray(probs, dtype=np.float64)
    predictions = probs.argmax(axis=1)
    cm = confusion_matrix(predictions, labels, classes)
    precision, recall, f1 = per_class_prf(cm)
    return EvalResult(
        macro_f1=float(f1.sum() / classes),
        macro_auc=macro_auc(probs, labels, classes),
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        confusion=cm,
    )
