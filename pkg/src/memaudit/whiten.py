"""ZCA whitening fitted on training features.

The whitener is the symmetric inverse square root of the regularized
sample covariance, W = (C + eps*I)^(-1/2), computed by symmetric
eigendecomposition with negative round-off eigenvalues clamped to zero.
Being symmetric, W decorrelates without rotating into principal axes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

DEFAULT_EPSILON = 1e-6
DEGENERATE_NORM = 1e-12


@dataclass(frozen=True)
class WhiteningTransform:
    layer_id: int
    mean: np.ndarray
    w_matrix: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_whitening(
    train_layer: np.ndarray, epsilon: float = DEFAULT_EPSILON, layer_id: int = 0
) -> WhiteningTransform:
    """Fit mean and inverse-square-root covariance on one layer's train rows.

    Covariance uses the unbiased 1/(n-1) normalization. When n <= dim the
    covariance is rank deficient; the epsilon ridge keeps W defined and a
    diagnostics warning is emitted instead of failing.
    """
    x = np.asarray(train_layer, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got shape {x.shape}")
    n, dim = x.shape
    if n < 2:
        raise ValidationError(f"need at least 2 samples to fit whitening, got {n}")
    if not np.isfinite(x).all():
        raise ValidationError("training features contain non-finite values")
    if epsilon <= 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    if n <= dim:
        warnings.warn(
            f"layer {layer_id}: covariance rank-deficient (n={n} <= dim={dim}); "
            "proceeding with the epsilon ridge",
            RuntimeWarning,
            stacklevel=2,
        )
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.clip(eigvals, 0.0, None)
    w = (eigvecs * (eigvals + epsilon) ** -0.5) @ eigvecs.T
    w = 0.5 * (w + w.T)  # kill round-off asymmetry; ZCA requires symmetric W
    return WhiteningTransform(layer_id=layer_id, mean=mean, w_matrix=w, epsilon=epsilon)


def apply_whitening(t: WhiteningTransform, x: np.ndarray) -> np.ndarray:
    """Center and whiten a vector or a matrix of row vectors: (x - mean) @ W."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != t.dim:
        raise ValidationError(f"feature length {x.shape[-1]} does not match fit dim {t.dim}")
    return (x - t.mean) @ t.w_matrix


def l2_normalize(x: np.ndarray) -> np.ndarray:
    """Scale to unit length; rows with norm <= 1e-12 map to the zero vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        norm = float(np.linalg.norm(x))
        return x / norm if norm > DEGENERATE_NORM else np.zeros_like(x)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > DEGENERATE_NORM, norms, 1.0)
    out = x / safe
    out[norms.ravel() <= DEGENERATE_NORM] = 0.0
    return out


def degenerate_rows(x: np.ndarray) -> np.ndarray:
    """Mask of rows that l2_normalize would collapse to zero."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return np.linalg.norm(x, axis=1) <= DEGENERATE_NORM
