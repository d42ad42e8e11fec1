"""Per-layer maximum cosine similarity of test rows against the train set.

Exact brute-force search via one matrix product; at the corpus sizes this
toolkit targets (hundreds of samples) that is both fast and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

NORM_SLACK = 1e-6


@dataclass(frozen=True)
class LayerSimilarity:
    layer_id: int
    scores: np.ndarray  # max cosine per test row, clamped to [-1, 1]
    neighbors: np.ndarray  # argmax train index, lowest index on ties

    def __post_init__(self) -> None:
        if self.scores.shape != self.neighbors.shape:
            raise ValidationError("scores and neighbors must have equal length")


def _check_row_norms(mat: np.ndarray, what: str) -> None:
    norms = np.linalg.norm(mat, axis=1)
    ok = (norms <= 1e-12) | (np.abs(norms - 1.0) <= NORM_SLACK)
    if not ok.all():
        bad = int(np.argmin(ok))
        raise ValidationError(
            f"{what} rows must be unit length or zero; row {bad} has norm {norms[bad]}"
        )


def layer_max_similarity(
    test_w: np.ndarray, train_w: np.ndarray, layer_id: int = 0
) -> LayerSimilarity:
    """Max cosine of each test row to any train row, plus the attaining index.

    Ties resolve to the lowest train index. Zero (degenerate) rows score 0
    against everything.
    """
    test_w = np.asarray(test_w, dtype=np.float64)
    train_w = np.asarray(train_w, dtype=np.float64)
    if train_w.ndim != 2 or test_w.ndim != 2:
        raise ValidationError("similarity inputs must be 2-D matrices")
    if train_w.shape[0] < 1:
        raise ValidationError("train set is empty")
    if test_w.shape[1] != train_w.shape[1]:
        raise ValidationError(
            f"feature dims differ: test {test_w.shape[1]} vs train {train_w.shape[1]}"
        )
    _check_row_norms(test_w, "test")
    _check_row_norms(train_w, "train")
    if test_w.shape[0] == 0:
        return LayerSimilarity(
            layer_id=layer_id,
            scores=np.zeros(0, dtype=np.float64),
            neighbors=np.zeros(0, dtype=np.int64),
        )
    sims = test_w @ train_w.T
    neighbors = sims.argmax(axis=1)  # first occurrence == lowest index
    scores = np.clip(sims[np.arange(sims.shape[0]), neighbors], -1.0, 1.0)
    return LayerSimilarity(layer_id=layer_id, scores=scores, neighbors=neighbors.astype(np.int64))
