#!/usr/bin/env python3
"""Desk-scale study: three synthetic corpora through the full audit harness.

Generates three procedural datasets (stand-ins for distinct acquisition
sites), sweeps every (level x augmentation) cell, and writes:

    <out>/<name>/cells/*.json        per-cell metrics (resumable)
    <out>/<name>/sweep_long.csv      long-format metric table
    <out>/<name>/plotdata/*.csv      per-metric trend series for plotting
    <out>/summary_stats.json         spread / CV / AUC / clean-ONI tables

Usage:
    python scripts/run_benchmark.py --out out/benchmark [--n 200 --size 128]
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from memaudit.augment import standard_grid
from memaudit.sweep import SweepDataset, run_sweep, summarize_sweep
from memaudit.synthetic import generate_corpus
from memaudit.tensorio import atomic_write_text


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--n", type=int, default=200, help="images per corpus")
    parser.add_argument("--size", type=int, default=128)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--corpora", type=int, default=3)
    parser.add_argument("--levels", default="0.05,0.15,0.30,0.45")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    out = Path(args.out)
    levels = [float(v) for v in args.levels.split(",")]
    datasets = []
    for i in range(args.corpora):
        corpus_seed = args.seed + 1000 * i
        t0 = time.monotonic()
        images = generate_corpus(args.n, args.size, corpus_seed)
        half = len(images) // 2
        datasets.append(
            SweepDataset(
                name=f"corpus{i}",
                train_images=images[:half],
                test_images=images[half:],
            )
        )
        print(f"corpus{i}: {args.n} images in {time.monotonic() - t0:.1f}s (seed {corpus_seed})")

    t0 = time.monotonic()
    sweep = run_sweep(
        datasets,
        levels=levels,
        augmentations=standard_grid(),
        seed=args.seed,
        out_dir=out,
        threads=args.threads,
    )
    summary = summarize_sweep(sweep)
    atomic_write_text(out / "summary_stats.json", json.dumps(summary, indent=2) + "\n")
    print(f"sweep: {len(sweep.cells)} cells in {time.monotonic() - t0:.1f}s")

    print("\nMI spread across augmentations (per dataset, per level):")
    for key, row in summary["augmentation_spread"].items():
        print(f"  {key:>16s}  mi {row['mi_mean']:8.3f}   frechet {row['frechet']:8.3f}")
    if summary["cross_dataset_cv_mi_mean"]:
        print("\ncross-dataset CV of mean MI:")
        for level, cv in summary["cross_dataset_cv_mi_mean"].items():
            print(f"  level {level:>5s}  {cv:.3f}")
    print("\ndetection AUC by augmentation (mean / min over datasets x levels):")
    for tag, row in summary["detection_auc_by_augmentation"].items():
        print(f"  {tag:>12s}  {row['mean_auc']:.3f} / {row['min_auc']:.3f}")
    print(f"\nwrote {out / 'summary_stats.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
