"""Detection statistics over per-sample scores.

Scores are oriented so that HIGHER means more likely duplicate; feed s or
MI directly, negate ONI first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class DetectionResult:
    auc: float
    ap: float
    n_pos: int
    n_neg: int


def _check_binary(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValidationError("scores and labels must be 1-D and equally long")
    return scores, labels


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, ties sharing the average rank of their group."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-based (Mann-Whitney) AUC with average ranks for ties."""
    scores, labels = _check_binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the precision-recall steps of the descending-score ranking.

    Ties are broken by stable original order, which matters when many
    duplicates share a saturated score.
    """
    scores, labels = _check_binary(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValidationError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = 0
    total = 0.0
    for rank, idx in enumerate(order, start=1):
        if labels[idx]:
            hits += 1
            total += hits / rank
    return float(total / n_pos)


def detection_result(scores: np.ndarray, labels: np.ndarray) -> DetectionResult:
    scores, labels = _check_binary(scores, labels)
    return DetectionResult(
        auc=roc_auc(scores, labels),
        ap=average_precision(scores, labels),
        n_pos=int(labels.sum()),
        n_neg=int((~labels).sum()),
    )


def cross_dataset_cv(values: np.ndarray | list[float]) -> float:
    """Coefficient of variation across datasets: sample std over |mean|."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise ValidationError("coefficient of variation needs at least 2 values")
    mean = float(values.mean())
    if mean == 0.0:
        raise ValidationError("coefficient of variation undefined for zero mean")
    return float(values.std(ddof=1) / abs(mean))
