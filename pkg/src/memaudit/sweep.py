"""Full-factorial evaluation harness over (dataset, duplication level, augmentation).

Per cell: inject duplicates, embed, audit, score detection and the
generic baselines. Design choices that keep sweeps comparable:

- the empirical null is bootstrapped once per dataset and reused by every
  cell (it depends only on the train split and the seed);
- injection positions and sources come from one permutation per dataset,
  so levels nest and augmentation conditions are paired on the same
  duplicated pairs;
- the MMD bandwidth is fixed per dataset (median heuristic on the
  uncontaminated train/test pool) so all cells share one kernel.

Cell outputs are written atomically (tmp + rename); an interrupted run
resumes from the cells already on disk. CT-score and AuthPct columns are
reserved but not computed here.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .augment import AugmentationSpec, standard_grid
from .baselines import frechet_distance, median_heuristic_bandwidth, mmd_rbf, vendi_score
from .calibrate import AuditConfig, NullCalibration, audit, bootstrap_null
from .contaminate import inject_duplicates
from .embedder import FeatureSet, ReferenceEmbedderConfig, embed_feature_set
from .errors import ValidationError
from .metrics import average_precision, cross_dataset_cv, roc_auc
from .seeds import derive_seed
from .tensorio import DatasetManifest, ImageSlice, ManifestSample, atomic_write_text

DEFAULT_LEVELS = (0.05, 0.15, 0.30, 0.45)
METRIC_NAMES = ("mi_mean", "oni_mean", "oni_clean_mean", "auc", "ap", "frechet", "mmd", "vendi")
RESERVED_METRICS = ("ct_score", "authpct")
AUC_SCORE_COLUMN = "mi"


@dataclass
class SweepDataset:
    name: str
    train_images: list[ImageSlice]
    test_images: list[ImageSlice]


@dataclass
class SweepResult:
    datasets: list[str]
    levels: list[float]
    augmentations: list[str]
    cells: dict[tuple[str, float, str], dict] = field(default_factory=dict)

    def cell(self, dataset: str, level: float, aug: str) -> dict:
        key = (dataset, level, aug)
        if key not in self.cells:
            raise ValidationError(f"missing sweep cell {key}")
        return self.cells[key]

    def metric(self, dataset: str, level: float, aug: str, name: str) -> float:
        value = self.cell(dataset, level, aug)["metrics"].get(name)
        if value is None:
            raise ValidationError(f"metric {name!r} not computed for cell")
        return float(value)

    def validate_complete(self) -> None:
        for ds in self.datasets:
            for level in self.levels:
                for aug in self.augmentations:
                    self.cell(ds, level, aug)


def augmentation_spread(
    sweep: SweepResult, metric: str, dataset: str, level: float
) -> float:
    """Sample standard deviation of one metric across augmentation conditions."""
    values = [sweep.metric(dataset, level, aug, metric) for aug in sweep.augmentations]
    if len(values) < 2:
        raise ValidationError("spread needs at least 2 augmentation conditions")
    return float(np.std(values, ddof=1))


def _concat_layers(fs: FeatureSet) -> np.ndarray:
    return np.hstack([fs.layers[k] for k in fs.layer_ids])


def _feature_manifest(name: str, split: str, n: int) -> DatasetManifest:
    samples = [ManifestSample(id=f"{split}_{i:03d}", path=f"{split}_{i:03d}") for i in range(n)]
    return DatasetManifest(name=name, split=split, layers=[], samples=samples)


@dataclass
class _DatasetState:
    dataset: SweepDataset
    train_fs: FeatureSet
    test_fs: FeatureSet
    calibration: NullCalibration
    mmd_bandwidth: float
    plan_seed: int
    train_concat: np.ndarray


def run_sweep(
    datasets: Sequence[SweepDataset],
    levels: Sequence[float] = DEFAULT_LEVELS,
    augmentations: Sequence[AugmentationSpec] | None = None,
    seed: int = 42,
    embed_cfg: ReferenceEmbedderConfig | None = None,
    n_iterations: int = 10,
    fraction: float = 0.5,
    oni_threshold: float = 0.68,
    out_dir: str | Path | None = None,
    threads: int = 1,
) -> SweepResult:
    """Evaluate every grid cell; returns the complete SweepResult.

    Raises before any computation if the grid is malformed. With out_dir
    set, per-cell JSON files, a long-format CSV, and per-metric plot data
    are written; existing cell files are loaded instead of recomputed.
    """
    if not datasets:
        raise ValidationError("at least one dataset is required")
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise ValidationError(f"dataset names must be unique, got {names}")
    if not levels or any(not 0.0 < lv < 1.0 for lv in levels):
        raise ValidationError(f"levels must lie in (0, 1), got {list(levels)}")
    augmentations = list(augmentations) if augmentations is not None else standard_grid()
    if not augmentations:
        raise ValidationError("at least one augmentation condition is required")
    tags = [a.tag for a in augmentations]
    if len(set(tags)) != len(tags):
        raise ValidationError(f"duplicate augmentation tags: {tags}")
    embed_cfg = embed_cfg or ReferenceEmbedderConfig()

    cells_dir = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        cells_dir = out_dir / "cells"
        cells_dir.mkdir(parents=True, exist_ok=True)

    states: dict[str, _DatasetState] = {}
    for ds in datasets:
        train_fs = embed_feature_set(
            ds.train_images, _feature_manifest(ds.name, "train", len(ds.train_images)), embed_cfg
        )
        test_fs = embed_feature_set(
            ds.test_images, _feature_manifest(ds.name, "test", len(ds.test_images)), embed_cfg
        )
        calibration = bootstrap_null(
            train_fs,
            n_iterations=n_iterations,
            fraction=fraction,
            seed=derive_seed(seed, ds.name, "null"),
        )
        train_concat = _concat_layers(train_fs)
        states[ds.name] = _DatasetState(
            dataset=ds,
            train_fs=train_fs,
            test_fs=test_fs,
            calibration=calibration,
            mmd_bandwidth=median_heuristic_bandwidth(train_concat, _concat_layers(test_fs)),
            plan_seed=derive_seed(seed, ds.name, "plan"),
            train_concat=train_concat,
        )

    def cell_path(name: str, level: float, tag: str) -> Path:
        return cells_dir / f"{name}_{level:g}_{tag}.json"

    def compute_cell(name: str, level: float, spec: AugmentationSpec) -> dict:
        st = states[name]
        if cells_dir is not None:
            path = cell_path(name, level, spec.tag)
            if path.exists():
                return json.loads(path.read_text())
        contaminated, plan = inject_duplicates(
            st.dataset.train_images, st.dataset.test_images, level, spec, st.plan_seed
        )
        test_fs = embed_feature_set(
            contaminated, _feature_manifest(name, "test", len(contaminated)), embed_cfg
        )
        report = audit(
            st.train_fs,
            test_fs,
            AuditConfig(
                seed=derive_seed(seed, name, "audit"),
                oni_threshold=oni_threshold,
                calibration=st.calibration,
            ),
        )
        test_concat = _concat_layers(test_fs)
        metrics = {
            "mi_mean": report.mean_mi,
            "oni_mean": report.mean_oni,
            "oni_clean_mean": float(report.oni[~plan.labels].mean()),
            "auc": roc_auc(report.mi, plan.labels),
            "ap": average_precision(report.mi, plan.labels),
            "frechet": frechet_distance(st.train_concat, test_concat),
            "mmd": mmd_rbf(st.train_concat, test_concat, bandwidth=st.mmd_bandwidth),
            "vendi": vendi_score(test_concat),
        }
        metrics.update({name_: None for name_ in RESERVED_METRICS})
        doc = {
            "dataset": name,
            "level": level,
            "augmentation": spec.tag,
            "n_injected": plan.n_injected,
            "auc_score_column": AUC_SCORE_COLUMN,
            "metrics": metrics,
        }
        if cells_dir is not None:
            atomic_write_text(cell_path(name, level, spec.tag), json.dumps(doc, indent=2) + "\n")
        return doc

    grid = [(name, lv, spec) for name in names for lv in levels for spec in augmentations]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            docs = list(pool.map(lambda c: compute_cell(*c), grid))
    else:
        docs = [compute_cell(*c) for c in grid]

    result = SweepResult(
        datasets=list(names),
        levels=[float(lv) for lv in levels],
        augmentations=tags,
        cells={(c[0], float(c[1]), c[2].tag): doc for c, doc in zip(grid, docs)},
    )
    result.validate_complete()
    if out_dir is not None:
        write_long_csv(out_dir / "sweep_long.csv", result)
        write_plot_data(out_dir / "plotdata", result)
    return result


def write_long_csv(path: str | Path, sweep: SweepResult) -> None:
    """Long format: one row per (dataset, level, augmentation, metric)."""
    lines = ["dataset,level,augmentation,metric,value"]
    for ds in sweep.datasets:
        for level in sweep.levels:
            for aug in sweep.augmentations:
                metrics = sweep.cell(ds, level, aug)["metrics"]
                for name in METRIC_NAMES + RESERVED_METRICS:
                    value = metrics.get(name)
                    rendered = "" if value is None else repr(float(value))
                    lines.append(f"{ds},{level:g},{aug},{name},{rendered}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_plot_data(plot_dir: str | Path, sweep: SweepResult) -> None:
    """One CSV per (dataset, metric): rows are levels, columns augmentations."""
    plot_dir = Path(plot_dir)
    plot_dir.mkdir(parents=True, exist_ok=True)
    for ds in sweep.datasets:
        for name in METRIC_NAMES:
            lines = ["level," + ",".join(sweep.augmentations)]
            for level in sweep.levels:
                row = [f"{level:g}"]
                row += [repr(sweep.metric(ds, level, aug, name)) for aug in sweep.augmentations]
                lines.append(",".join(row))
            atomic_write_text(plot_dir / f"{ds}_{name}.csv", "\n".join(lines) + "\n")


def summarize_sweep(sweep: SweepResult) -> dict:
    """Robustness and consistency tables computed from a finished sweep.

    Records augmentation spreads per (dataset, level), cross-dataset CVs
    per level (when two or more datasets ran), and mean/min detection AUC
    per augmentation over all other grid coordinates.
    """
    spreads: dict[str, dict[str, float]] = {}
    for ds in sweep.datasets:
        for level in sweep.levels:
            key = f"{ds}@{level:g}"
            spreads[key] = {
                m: augmentation_spread(sweep, m, ds, level) for m in ("mi_mean", "frechet", "mmd")
            }
    cvs: dict[str, float] = {}
    if len(sweep.datasets) >= 2:
        for level in sweep.levels:
            values = [
                np.mean([sweep.metric(ds, level, aug, "mi_mean") for aug in sweep.augmentations])
                for ds in sweep.datasets
            ]
            cvs[f"{level:g}"] = cross_dataset_cv(values)
    auc_table: dict[str, dict[str, float]] = {}
    for aug in sweep.augmentations:
        values = [
            sweep.metric(ds, level, aug, "auc")
            for ds in sweep.datasets
            for level in sweep.levels
        ]
        auc_table[aug] = {
            "mean_auc": float(np.mean(values)),
            "min_auc": float(np.min(values)),  # min over all grid cells for this condition
        }
    clean_oni: dict[str, dict[str, float]] = {}
    for ds in sweep.datasets:
        values = np.array(
            [
                sweep.metric(ds, level, aug, "oni_clean_mean")
                for level in sweep.levels
                for aug in sweep.augmentations
            ]
        )
        mean = float(values.mean())
        std = float(values.std(ddof=1)) if values.size > 1 else 0.0
        clean_oni[ds] = {
            "mean": mean,
            "std": std,
            "cv": std / abs(mean) if mean != 0.0 else float("nan"),
        }
    return {
        "augmentation_spread": spreads,
        "cross_dataset_cv_mi_mean": cvs,
        "detection_auc_by_augmentation": auc_table,
        "clean_sample_oni": clean_oni,
    }
