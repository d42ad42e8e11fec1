import json
import warnings

import numpy as np
import pytest

from memaudit.augment import AugmentationSpec
from memaudit.embedder import ReferenceEmbedderConfig
from memaudit.errors import ValidationError
from memaudit.sweep import (
    SweepDataset,
    SweepResult,
    augmentation_spread,
    run_sweep,
    summarize_sweep,
)
from memaudit.synthetic import generate_corpus

SMALL_CFG = ReferenceEmbedderConfig(grids=((4, 4), (2, 2)), layer_ids=(3, 7))
CLEAN = AugmentationSpec(kind="clean")
NOISE = AugmentationSpec(kind="noise", sigma=0.01)


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    images = generate_corpus(40, 32, seed=5)
    ds = SweepDataset(name="tiny", train_images=images[:20], test_images=images[20:])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sweep = run_sweep(
            [ds],
            levels=(0.15, 0.45),
            augmentations=[CLEAN, NOISE],
            seed=7,
            embed_cfg=SMALL_CFG,
            out_dir=out,
        )
    return sweep, out, ds


def test_grid_complete(small_sweep):
    sweep, _, _ = small_sweep
    sweep.validate_complete()
    assert len(sweep.cells) == 1 * 2 * 2


def test_clean_mi_increases_with_level(small_sweep):
    sweep, _, _ = small_sweep
    low = sweep.metric("tiny", 0.15, "clean", "mi_mean")
    high = sweep.metric("tiny", 0.45, "clean", "mi_mean")
    assert high > low


def test_clean_duplicates_detected(small_sweep):
    sweep, _, _ = small_sweep
    assert sweep.metric("tiny", 0.45, "clean", "auc") == 1.0
    assert sweep.metric("tiny", 0.45, "clean", "ap") == 1.0


def test_cell_files_written_atomically(small_sweep):
    _, out, _ = small_sweep
    cells = sorted(p.name for p in (out / "cells").glob("*.json"))
    assert cells == [
        "tiny_0.15_clean.json",
        "tiny_0.15_noise_0.01.json",
        "tiny_0.45_clean.json",
        "tiny_0.45_noise_0.01.json",
    ]
    assert not list((out / "cells").glob("*.tmp"))
    doc = json.loads((out / "cells" / "tiny_0.45_clean.json").read_text())
    assert doc["n_injected"] == 9
    assert doc["auc_score_column"] == "mi"
    assert doc["metrics"]["ct_score"] is None  # reserved, not computed


def test_long_csv_shape(small_sweep):
    _, out, _ = small_sweep
    lines = (out / "sweep_long.csv").read_text().strip().split("\n")
    assert lines[0] == "dataset,level,augmentation,metric,value"
    assert len(lines) == 1 + 2 * 2 * 10  # levels x augs x (8 metrics + 2 reserved)
    reserved = [ln for ln in lines if ",ct_score," in ln or ",authpct," in ln]
    assert all(ln.endswith(",") for ln in reserved)  # reserved columns stay empty


def test_plot_data_files(small_sweep):
    _, out, _ = small_sweep
    path = out / "plotdata" / "tiny_mi_mean.csv"
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "level,clean,noise_0.01"
    assert len(lines) == 3


def test_resume_skips_completed_cells(small_sweep):
    sweep, out, ds = small_sweep
    marker = out / "cells" / "tiny_0.15_clean.json"
    doc = json.loads(marker.read_text())
    doc["metrics"]["mi_mean"] = 123.456  # tamper to prove the rerun loads, not recomputes
    marker.write_text(json.dumps(doc))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        again = run_sweep(
            [ds],
            levels=(0.15, 0.45),
            augmentations=[CLEAN, NOISE],
            seed=7,
            embed_cfg=SMALL_CFG,
            out_dir=out,
        )
    assert again.metric("tiny", 0.15, "clean", "mi_mean") == 123.456
    marker.write_text(json.dumps(json.loads(marker.read_text()) | {"metrics": doc["metrics"] | {"mi_mean": sweep.metric("tiny", 0.15, "clean", "mi_mean")}}))


def test_sweep_deterministic(small_sweep):
    sweep, _, ds = small_sweep
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        again = run_sweep(
            [ds],
            levels=(0.15, 0.45),
            augmentations=[CLEAN, NOISE],
            seed=7,
            embed_cfg=SMALL_CFG,
        )
    for key, doc in sweep.cells.items():
        for metric, value in doc["metrics"].items():
            if metric == "mi_mean" and key == ("tiny", 0.15, "clean"):
                continue  # tampered by the resume test
            assert again.cells[key]["metrics"][metric] == value


def test_threaded_sweep_matches_serial(small_sweep):
    _, _, ds = small_sweep
    kwargs = dict(
        levels=(0.15,), augmentations=[CLEAN, NOISE], seed=7, embed_cfg=SMALL_CFG
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        serial = run_sweep([ds], threads=1, **kwargs)
        threaded = run_sweep([ds], threads=4, **kwargs)
    for key in serial.cells:
        assert serial.cells[key]["metrics"] == threaded.cells[key]["metrics"]


def test_validation_happens_before_compute():
    ds = SweepDataset(name="x", train_images=[], test_images=[])
    with pytest.raises(ValidationError):
        run_sweep([ds], levels=(1.5,))
    with pytest.raises(ValidationError):
        run_sweep([ds], levels=(0.1,), augmentations=[CLEAN, CLEAN])
    with pytest.raises(ValidationError):
        run_sweep([], levels=(0.1,))
    with pytest.raises(ValidationError):
        run_sweep([ds, ds], levels=(0.1,))  # duplicate names


# --- sweep statistics ---------------------------------------------------------


def _synthetic_result():
    result = SweepResult(datasets=["a"], levels=[0.1], augmentations=["clean", "noise_0.01"])
    result.cells[("a", 0.1, "clean")] = {"metrics": {"mi_mean": 1.0, "auc": 1.0}}
    result.cells[("a", 0.1, "noise_0.01")] = {"metrics": {"mi_mean": 3.0, "auc": 0.9}}
    return result


def test_augmentation_spread_two_point():
    # values {1, 3}: sample standard deviation sqrt(2)
    assert augmentation_spread(_synthetic_result(), "mi_mean", "a", 0.1) == pytest.approx(
        np.sqrt(2)
    )


def test_augmentation_spread_identical_zero():
    result = _synthetic_result()
    result.cells[("a", 0.1, "noise_0.01")]["metrics"]["mi_mean"] = 1.0
    assert augmentation_spread(result, "mi_mean", "a", 0.1) == 0.0


def test_augmentation_spread_missing_cell():
    result = _synthetic_result()
    del result.cells[("a", 0.1, "noise_0.01")]
    with pytest.raises(ValidationError, match="missing sweep cell"):
        augmentation_spread(result, "mi_mean", "a", 0.1)


def test_summarize_sweep_keys(small_sweep):
    sweep, _, _ = small_sweep
    summary = summarize_sweep(sweep)
    assert set(summary) == {
        "augmentation_spread",
        "cross_dataset_cv_mi_mean",
        "detection_auc_by_augmentation",
        "clean_sample_oni",
    }
    assert summary["cross_dataset_cv_mi_mean"] == {}  # single dataset: no CV
    assert set(summary["detection_auc_by_augmentation"]) == {"clean", "noise_0.01"}
    clean = summary["detection_auc_by_augmentation"]["clean"]
    assert clean["min_auc"] <= clean["mean_auc"]
