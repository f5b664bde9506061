"""Test-set evaluation: ranking metrics for the classifier, error metrics
for the count model, and loss-curve export."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    group_end = np.cumsum(counts).astype(float)
    group_mean = group_end - (counts - 1) / 2.0
    return group_mean[inverse]


def _split_classes(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    pos = labels > 0
    if not pos.any() or pos.all():
        raise ValueError("need both classes present")
    return scores, pos


def auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative.

    Computed from average ranks, so tied scores earn half credit.
    """
    scores, pos = _split_classes(scores, labels)
    n_pos = int(pos.sum())
    n_neg = scores.size - n_pos
    ranks = _average_ranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def ks(scores, labels) -> float:
    """Largest gap between the class score distributions: max |TPR - FPR|."""
    scores, pos = _split_classes(scores, labels)
    n_pos = int(pos.sum())
    n_neg = scores.size - n_pos
    order = np.argsort(-scores, kind="mergesort")
    hits = pos[order]
    tpr = np.cumsum(hits) / n_pos
    fpr = np.cumsum(~hits) / n_neg
    ordered = scores[order]
    # thresholds sit between distinct score values
    cut = np.append(ordered[1:] != ordered[:-1], True)
    return float(np.abs(tpr[cut] - fpr[cut]).max())


def _paired(pred, y):
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if pred.shape != y.shape:
        raise ValueError("pred and y differ in length")
    return pred, y


def mae(pred, y) -> float:
    pred, y = _paired(pred, y)
    return float(np.mean(np.abs(pred - y)))


def rmse(pred, y) -> float:
    pred, y = _paired(pred, y)
    return float(np.sqrt(np.mean((pred - y) ** 2)))


def export_loss_curve(losses, path: str | Path | None = None) -> str:
    """CSV text with one row per completed iteration, 1-indexed."""
    lines = ["iteration,loss"]
    for i, v in enumerate(losses, start=1):
        lines.append(f"{i},{v:.10g}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
