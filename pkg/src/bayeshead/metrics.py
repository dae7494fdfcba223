"""Evaluation metrics: UAR, Spearman's rho, confusion matrices, loss diagnostics."""

from __future__ import annotations

import numpy as np


class MetricError(ValueError):
    """Invalid metric inputs (absent classes, shape mismatches)."""


def confusion_matrix(true_labels, predicted, k: int) -> np.ndarray:
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1 or t.size < 1:
        raise MetricError("label lists must be equal-length, nonempty 1-d")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return counts


def uar(true_labels, predicted, k: int) -> float:
    """Unweighted average recall: mean of per-class recalls."""
    counts = confusion_matrix(true_labels, predicted, k)
    row_sums = counts.sum(axis=1)
    missing = np.flatnonzero(row_sums == 0)
    if missing.size:
        raise MetricError(f"true class {int(missing[0])} absent from evaluation set")
    return float(np.mean(np.diag(counts) / row_sums))


def fractional_ranks(v: np.ndarray) -> np.ndarray:
    """Average (fractional) ranks starting at 1, ties share the mean rank."""
    v = np.asarray(v, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    i = 0
    sv = v[order]
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_rho(predicted, targets):
    """Per-dimension Spearman's rho and its unweighted mean.

    Zero rank variance on either side scores 0 for that dimension; the
    returned `flat_dims` lists those dimensions.
    """
    p = np.atleast_2d(np.asarray(predicted, dtype=np.float64).T).T
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64).T).T
    if p.shape != t.shape:
        raise MetricError("shape mismatch between predictions and targets")
    n, m = p.shape
    if n < 2:
        raise MetricError("need at least 2 examples")
    per_dim = np.zeros(m)
    flat_dims = []
    for j in range(m):
        rp = fractional_ranks(p[:, j])
        rt = fractional_ranks(t[:, j])
        dp, dt = rp - rp.mean(), rt - rt.mean()
        denom = np.sqrt(np.sum(dp**2) * np.sum(dt**2))
        if denom == 0:
            flat_dims.append(j)
            continue
        per_dim[j] = np.sum(dp * dt) / denom
    return per_dim, float(np.mean(per_dim)), flat_dims


def classification_report(true_labels, probabilities, k: int) -> dict:
    """UAR, accuracy, mean NLL, confusion matrix from probability rows."""
    probs = np.asarray(probabilities, dtype=np.float64)
    t = np.asarray(true_labels, dtype=np.int64)
    pred = probs.argmax(axis=1)
    counts = confusion_matrix(t, pred, k)
    nll = float(-np.mean(np.log(np.maximum(probs[np.arange(len(t)), t], 1e-300))))
    return {
        "uar": uar(t, pred, k),
        "accuracy": float(np.mean(pred == t)),
        "nll": nll,
        "confusion": counts.tolist(),
    }


def regression_report(targets, intensities) -> dict:
    """Mean/per-dim Spearman's rho and MSE from intensity rows."""
    t = np.asarray(targets, dtype=np.float64)
    p = np.asarray(intensities, dtype=np.float64)
    per_dim, mean_rho, flat_dims = spearman_rho(p, t)
    report = {
        "spearman_mean": mean_rho,
        "spearman_per_dim": per_dim.tolist(),
        "mse": float(np.mean((p - t) ** 2)),
    }
    if flat_dims:
        report["flat_dims"] = flat_dims
    return report


def evaluate_outputs(dataset, outputs) -> dict:
    """Metric report for precomputed output rows against a dataset."""
    if dataset.task_kind == "classification":
        return classification_report(dataset.targets, outputs, dataset.num_outputs)
    return regression_report(dataset.targets, outputs)
