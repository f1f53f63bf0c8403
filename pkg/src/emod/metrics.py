"""Classification metrics on confusion matrices and the embedding/V-A probe."""

from __future__ import annotations

import json
import warnings

import numpy as np
from scipy.stats import spearmanr

from .exceptions import EmptyMatrix, TooFewSamples
from .va_space import as_points, pairwise_distances


def confusion_matrix(y_true, y_pred, n_classes: int | None = None) -> np.ndarray:
    """Rows are true classes, columns predictions."""
    y_true = np.asarray(y_true, dtype=np.intp)
    y_pred = np.asarray(y_pred, dtype=np.intp)
    k = n_classes or int(max(y_true.max(initial=-1), y_pred.max(initial=-1)) + 1)
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _check(cm) -> np.ndarray:
    cm = np.asarray(cm, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got {cm.shape}")
    if np.any(cm < 0):
        raise ValueError("confusion matrix has negative counts")
    if cm.sum() <= 0:
        raise EmptyMatrix("confusion matrix is empty")
    return cm


def bacc(cm) -> float:
    """Mean per-class recall over classes that occur in the truth."""
    cm = _check(cm)
    support = cm.sum(axis=1)
    present = support > 0
    if not present.all():
        warnings.warn(f"{(~present).sum()} class(es) without true samples excluded from BACC", RuntimeWarning)
    return float(np.mean(np.diag(cm)[present] / support[present]))


def kappa(cm) -> float:
    cm = _check(cm)
    total = cm.sum()
    p_o = np.trace(cm) / total
    p_e = float(cm.sum(axis=1) @ cm.sum(axis=0)) / total**2
    if p_e >= 1.0:
        warnings.warn("chance agreement is 1; kappa defined as 0", RuntimeWarning)
        return 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def per_class_f1(cm) -> np.ndarray:
    cm = _check(cm)
    tp = np.diag(cm)
    pred = cm.sum(axis=0)
    true = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred > 0, tp / pred, 0.0)
        recall = np.where(true > 0, tp / true, 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    return f1


def weighted_f1(cm) -> float:
    cm = _check(cm)
    support = cm.sum(axis=1)
    return float((support / support.sum()) @ per_class_f1(cm))


def report(cm) -> dict:
    """Metrics report ``{bacc, kappa, wf1, n, per_class}``."""
    cm = _check(cm)
    support = cm.sum(axis=1)
    pred = cm.sum(axis=0)
    tp = np.diag(cm)
    f1 = per_class_f1(cm)
    per_class = [
        {
            "class": k,
            "support": int(support[k]),
            "recall": float(tp[k] / support[k]) if support[k] else 0.0,
            "precision": float(tp[k] / pred[k]) if pred[k] else 0.0,
            "f1": float(f1[k]),
        }
        for k in range(cm.shape[0])
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return {"bacc": bacc(cm), "kappa": kappa(cm), "wf1": weighted_f1(cm), "n": int(cm.sum()), "per_class": per_class}


def report_json(cm) -> str:
    return json.dumps(report(cm), indent=2)


def spearman_probe(z, va) -> float:
    """Rank correlation of pairwise ``1 - z_i.z_j`` against pairwise V-A distance."""
    z = np.asarray(z, dtype=np.float64)
    pts = as_points(va)
    n = len(z)
    if n < 10:
        raise TooFewSamples(f"spearman probe needs >= 10 samples, got {n}")
    if len(pts) != n:
        raise ValueError("embeddings and V-A points differ in length")
    iu = np.triu_indices(n, k=1)
    emb = (1.0 - z @ z.T)[iu]
    aff = pairwise_distances(pts)[iu]
    if np.ptp(emb) == 0 or np.ptp(aff) == 0:
        warnings.warn("constant distances; spearman probe defined as 0", RuntimeWarning)
        return 0.0
    return float(spearmanr(emb, aff).statistic)
