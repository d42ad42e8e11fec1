"""Empirical-null calibration and the full audit pipeline.

The null distribution is built by repeatedly splitting the training set
into disjoint halves A and B, running the whiten/similarity/aggregation
pipeline of B against A (whitening refit on A each iteration), and
pooling the per-sample aggregated similarities over all iterations. Test
similarities are standardized against that null into a Memorization
Index, MI = (s - mu_null) / sigma_null, and squashed into the bounded
Overfit/Novelty Index, ONI = -tanh(MI): near -1 means likely memorized
copy, near 0 null-typical, near +1 novel.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregate import AGG_EPSILON, aggregate_sample
from .embedder import FeatureSet
from .errors import ValidationError
from .seeds import derive_seed
from .similarity import layer_max_similarity
from .tensorio import atomic_write_text
from .whiten import DEFAULT_EPSILON, apply_whitening, fit_whitening, l2_normalize

VARIANCE_RIDGE = 1e-8
DEFAULT_ONI_THRESHOLD = 0.68


@dataclass
class NullCalibration:
    """Summary of train-half-vs-train-half aggregated similarities."""

    mu_null: float
    sigma_null: float
    samples: np.ndarray
    n_iterations: int
    fraction: float
    seed: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sigma_null <= 0:
            raise ValidationError(f"sigma_null must be positive, got {self.sigma_null}")

    def to_json(self) -> dict:
        return {
            "mu_null": float(self.mu_null),
            "sigma_null": float(self.sigma_null),
            "n_iterations": int(self.n_iterations),
            "fraction": float(self.fraction),
            "seed": int(self.seed),
            "samples": [float(v) for v in self.samples],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "NullCalibration":
        return cls(
            mu_null=float(doc["mu_null"]),
            sigma_null=float(doc["sigma_null"]),
            samples=np.array(doc["samples"], dtype=np.float64),
            n_iterations=int(doc["n_iterations"]),
            fraction=float(doc["fraction"]),
            seed=int(doc["seed"]),
        )


def write_calibration(path: str | Path, cal: NullCalibration) -> None:
    atomic_write_text(path, json.dumps(cal.to_json(), indent=2) + "\n")


def read_calibration(path: str | Path) -> NullCalibration:
    return NullCalibration.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class AuditConfig:
    whiten_epsilon: float = DEFAULT_EPSILON
    agg_epsilon: float = AGG_EPSILON
    n_iterations: int = 10
    fraction: float = 0.5
    seed: int = 42
    allow_overlap: bool = False
    oni_threshold: float = DEFAULT_ONI_THRESHOLD
    threads: int = 1
    calibration: NullCalibration | None = None


def _pipeline_scores(
    train_layers: dict[int, np.ndarray],
    test_layers: dict[int, np.ndarray],
    layer_ids: list[int],
    whiten_epsilon: float,
) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Whiten on train, normalize both sides, max-cosine per layer.

    Returns layer -> (scores, neighbor indices).
    """
    out: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for k in layer_ids:
        transform = fit_whitening(train_layers[k], epsilon=whiten_epsilon, layer_id=k)
        train_w = l2_normalize(apply_whitening(transform, train_layers[k]))
        test_w = l2_normalize(apply_whitening(transform, test_layers[k]))
        sim = layer_max_similarity(test_w, train_w, layer_id=k)
        out[k] = (sim.scores, sim.neighbors)
    return out


def _aggregate_all(
    per_layer: dict[int, tuple[np.ndarray, np.ndarray]],
    layer_ids: list[int],
    agg_epsilon: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample fusion over layers: (s, consensus count, modal neighbor)."""
    n = per_layer[layer_ids[0]][0].shape[0]
    s = np.empty(n, dtype=np.float64)
    consensus = np.empty(n, dtype=np.int64)
    modal = np.empty(n, dtype=np.int64)
    for j in range(n):
        agg = aggregate_sample(
            {k: (float(per_layer[k][0][j]), int(per_layer[k][1][j])) for k in layer_ids},
            epsilon=agg_epsilon,
        )
        s[j] = agg.s
        consensus[j] = agg.consensus
        modal[j] = agg.modal_neighbor
    return s, consensus, modal


def bootstrap_null(
    train: FeatureSet,
    n_iterations: int = 10,
    fraction: float = 0.5,
    seed: int = 0,
    whiten_epsilon: float = DEFAULT_EPSILON,
    agg_epsilon: float = AGG_EPSILON,
    allow_overlap: bool = False,
    threads: int = 1,
) -> NullCalibration:
    """Pool aggregated similarities of random train halves into null parameters.

    Each iteration shuffles the sample indices with its own seeded stream
    (derived from the run seed and the iteration index, so thread count
    cannot change results), takes the first floor(fraction*n) indices as
    subset A and the next as a disjoint subset B, refits whitening on A,
    and scores B against A. mu_null is the mean of all pooled per-sample
    similarities; sigma_null adds a 1e-8 variance ridge under the square
    root, using the population (1/N) variance.
    """
    n = train.n_samples
    if n < 4:
        raise ValidationError(f"bootstrap needs at least 4 train samples, got {n}")
    if not 0.0 < fraction <= 0.5:
        raise ValidationError(f"fraction must lie in (0, 0.5], got {fraction}")
    if n_iterations < 1:
        raise ValidationError("n_iterations must be at least 1")
    m = int(fraction * n)
    if m < 2:
        raise ValidationError(f"fraction {fraction} of {n} samples leaves subsets too small")
    layer_ids = train.layer_ids

    def one_iteration(it: int) -> np.ndarray:
        rng = np.random.default_rng(derive_seed(seed, it))
        perm = rng.permutation(n)
        idx_a = perm[:m]
        idx_b = rng.permutation(n)[:m] if allow_overlap else perm[m : 2 * m]
        a_layers = {k: train.layers[k][idx_a] for k in layer_ids}
        b_layers = {k: train.layers[k][idx_b] for k in layer_ids}
        per_layer = _pipeline_scores(a_layers, b_layers, layer_ids, whiten_epsilon)
        s, _, _ = _aggregate_all(per_layer, layer_ids, agg_epsilon)
        return s

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(one_iteration, range(n_iterations)))
    else:
        chunks = [one_iteration(it) for it in range(n_iterations)]
    samples = np.concatenate(chunks)
    mu = float(samples.mean())
    sigma = float(math.sqrt(samples.var() + VARIANCE_RIDGE))
    return NullCalibration(
        mu_null=mu,
        sigma_null=sigma,
        samples=samples,
        n_iterations=n_iterations,
        fraction=fraction,
        seed=seed,
    )


def memorization_index(s_j: float | np.ndarray, null: NullCalibration) -> float | np.ndarray:
    """Standardize an aggregated similarity against the null: (s - mu) / sigma."""
    return (s_j - null.mu_null) / null.sigma_null


def overfit_novelty_index(mi_j: float | np.ndarray) -> float | np.ndarray:
    """Bounded index -tanh(MI), in (-1, 1)."""
    return -np.tanh(mi_j)


@dataclass
class AuditReport:
    """Per-sample audit scores plus the set-level summary."""

    sample_ids: list[str]
    layer_ids: list[int]
    s: np.ndarray
    d: np.ndarray
    mi: np.ndarray
    oni: np.ndarray
    neighbors: dict[int, np.ndarray]
    consensus: np.ndarray
    modal_neighbor: np.ndarray
    flagged: np.ndarray
    oni_threshold: float
    calibration: NullCalibration
    mean_mi: float = field(init=False)
    mean_oni: float = field(init=False)

    def __post_init__(self) -> None:
        if not np.array_equal(self.oni, -np.tanh(self.mi)):
            raise ValidationError("ONI must equal -tanh(MI) exactly")
        if not np.array_equal(self.flagged, self.oni < self.oni_threshold):
            raise ValidationError("flags must equal (ONI < threshold) exactly")
        self.mean_mi = float(self.mi.mean()) if self.mi.size else 0.0
        self.mean_oni = float(self.oni.mean()) if self.oni.size else 0.0


def audit(train: FeatureSet, test: FeatureSet, config: AuditConfig | None = None) -> AuditReport:
    """Run the full pipeline: whiten, match, fuse, calibrate, standardize, flag.

    Whitening is always fit on the train split and applied to both sides.
    A precomputed calibration can be supplied through the config to skip
    the bootstrap (the null depends only on the train set and seed).
    """
    config = config or AuditConfig()
    if train.layer_ids != test.layer_ids:
        raise ValidationError(
            f"layer mismatch: train has {train.layer_ids}, test has {test.layer_ids}"
        )
    layer_ids = train.layer_ids
    for k in layer_ids:
        if train.layers[k].shape[1] != test.layers[k].shape[1]:
            raise ValidationError(
                f"layer {k}: train dim {train.layers[k].shape[1]} vs "
                f"test dim {test.layers[k].shape[1]}"
            )
    per_layer = _pipeline_scores(train.layers, test.layers, layer_ids, config.whiten_epsilon)
    s, consensus, modal = _aggregate_all(per_layer, layer_ids, config.agg_epsilon)
    calibration = config.calibration or bootstrap_null(
        train,
        n_iterations=config.n_iterations,
        fraction=config.fraction,
        seed=config.seed,
        whiten_epsilon=config.whiten_epsilon,
        agg_epsilon=config.agg_epsilon,
        allow_overlap=config.allow_overlap,
        threads=config.threads,
    )
    mi = np.asarray(memorization_index(s, calibration))
    oni = np.asarray(overfit_novelty_index(mi))
    flagged = oni < config.oni_threshold
    return AuditReport(
        sample_ids=test.sample_ids,
        layer_ids=layer_ids,
        s=s,
        d=1.0 - s,
        mi=mi,
        oni=oni,
        neighbors={k: per_layer[k][1] for k in layer_ids},
        consensus=consensus,
        modal_neighbor=modal,
        flagged=flagged,
        oni_threshold=config.oni_threshold,
        calibration=calibration,
    )
