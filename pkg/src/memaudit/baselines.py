"""Generic-feature fidelity and diversity baselines.

These are the scores a duplication audit must NOT rely on: under
contamination the test distribution moves toward the train distribution,
so Frechet distance and MMD improve while leakage worsens, and the Vendi
diversity count barely reacts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .whiten import l2_normalize


@dataclass(frozen=True)
class GaussianSummary:
    mean: np.ndarray
    covariance: np.ndarray  # unbiased, 1/(n-1)


def fit_gaussian(x: np.ndarray) -> GaussianSummary:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValidationError(f"need a 2-D matrix with >= 2 rows, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValidationError("features contain non-finite values")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (x.shape[0] - 1)
    return GaussianSummary(mean=mean, covariance=0.5 * (cov + cov.T))


def _sqrt_psd(mat: np.ndarray) -> np.ndarray:
    eigvals, eigvecs = np.linalg.eigh(mat)
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def frechet_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)); the cross square
    root is taken on the symmetrized product Sa^(1/2) Sb Sa^(1/2), with
    negative round-off eigenvalues clamped to zero.
    """
    ga, gb = fit_gaussian(np.asarray(a)), fit_gaussian(np.asarray(b))
    sa_half = _sqrt_psd(ga.covariance)
    inner = sa_half @ gb.covariance @ sa_half
    inner = 0.5 * (inner + inner.T)
    cross_eigs = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    dist = (
        float(((ga.mean - gb.mean) ** 2).sum())
        + float(np.trace(ga.covariance) + np.trace(gb.covariance))
        - 2.0 * float(np.sqrt(cross_eigs).sum())
    )
    return max(dist, 0.0)


def pairwise_sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    xx = (x * x).sum(axis=1)
    yy = (y * y).sum(axis=1)
    return np.clip(xx[:, None] + yy[None, :] - 2.0 * (x @ y.T), 0.0, None)


def median_heuristic_bandwidth(a: np.ndarray, b: np.ndarray) -> float:
    """Median pairwise distance over the pooled sample, floored at 1e-12."""
    pool = np.vstack([np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)])
    d2 = pairwise_sq_dists(pool, pool)
    iu = np.triu_indices(pool.shape[0], k=1)
    return max(float(np.median(np.sqrt(d2[iu]))), 1e-12)


def mmd_rbf(a: np.ndarray, b: np.ndarray, bandwidth: float | None = None) -> float:
    """Biased (V-statistic) squared MMD with an RBF kernel.

    Bandwidth defaults to the median heuristic over the pooled sample;
    pass an explicit value when comparing across conditions so every
    condition is measured with the same kernel.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] < 1 or b.shape[0] < 1:
        raise ValidationError("both samples must be non-empty")
    h = bandwidth if bandwidth is not None else median_heuristic_bandwidth(a, b)
    scale = 2.0 * h * h
    kaa = np.exp(-pairwise_sq_dists(a, a) / scale).mean()
    kbb = np.exp(-pairwise_sq_dists(b, b) / scale).mean()
    kab = np.exp(-pairwise_sq_dists(a, b) / scale).mean()
    return float(kaa + kbb - 2.0 * kab)


def vendi_score(feats: np.ndarray) -> float:
    """Effective diversity count: exp of the entropy of the Gram spectrum.

    Kernel is cosine on l2-normalized rows; eigenvalues of K/n are
    clamped at zero and 0*log(0) is taken as 0. Ranges from 1 (all rows
    identical) to n (orthonormal rows).
    """
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 1:
        raise ValidationError(f"need a non-empty 2-D matrix, got shape {feats.shape}")
    if not np.isfinite(feats).all():
        raise ValidationError("features contain non-finite values")
    rows = l2_normalize(feats)
    gram = rows @ rows.T / feats.shape[0]
    eigvals = np.clip(np.linalg.eigvalsh(gram), 0.0, None)
    positive = eigvals[eigvals > 0]
    entropy = float(-(positive * np.log(positive)).sum())
    return float(np.exp(entropy))
