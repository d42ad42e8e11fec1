"""Fuse per-layer similarities into one per-sample score.

The fusion is a geometric mean over layers, computed in log space with a
small epsilon shift. It behaves like a product of experts: a sample only
scores high when every scale agrees, and any single near-zero layer acts
as a veto. Negative cosines are clamped to zero before fusion so the
per-layer scores live in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .errors import ValidationError

AGG_EPSILON = 1e-6


@dataclass(frozen=True)
class AggregatedScore:
    s: float
    d: float
    per_layer: dict[int, tuple[float, int]]  # layer -> (similarity, neighbor index)
    consensus: int
    modal_neighbor: int
    epsilon: float = AGG_EPSILON


def aggregate_scores(
    per_layer_scores: Mapping[int, float], epsilon: float = AGG_EPSILON
) -> tuple[float, float]:
    """Geometric mean of per-layer similarities (epsilon-shifted) and its distance.

    Returns (s, d) with d = 1 - s. Scores below zero are clamped to zero
    before fusion.
    """
    if not per_layer_scores:
        raise ValidationError("at least one layer score is required")
    clamped = [max(0.0, float(v)) for v in per_layer_scores.values()]
    s = math.exp(sum(math.log(v + epsilon) for v in clamped) / len(clamped))
    return s, 1.0 - s


def consensus_count(neighbors: Mapping[int, int]) -> tuple[int, int]:
    """Size of the largest group of layers agreeing on one neighbor index.

    Returns (count, modal neighbor index); ties between equally large
    groups resolve to the lower neighbor index.
    """
    if not neighbors:
        raise ValidationError("at least one layer neighbor is required")
    counts: dict[int, int] = {}
    for idx in neighbors.values():
        counts[int(idx)] = counts.get(int(idx), 0) + 1
    modal = min(counts, key=lambda idx: (-counts[idx], idx))
    return counts[modal], modal


def aggregate_sample(
    per_layer: Mapping[int, tuple[float, int]], epsilon: float = AGG_EPSILON
) -> AggregatedScore:
    """Full per-sample fusion: score, distance, and cross-layer consensus."""
    s, d = aggregate_scores({k: v[0] for k, v in per_layer.items()}, epsilon=epsilon)
    count, modal = consensus_count({k: v[1] for k, v in per_layer.items()})
    return AggregatedScore(
        s=s,
        d=d,
        per_layer={int(k): (float(v[0]), int(v[1])) for k, v in per_layer.items()},
        consensus=count,
        modal_neighbor=modal,
        epsilon=epsilon,
    )
