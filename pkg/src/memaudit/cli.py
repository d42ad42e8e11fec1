"""Command line interface.

Subcommands mirror the pipeline stages so each is exercisable alone:

    gen-synthetic  make a procedural corpus with train/test manifests
    embed          images -> per-layer feature matrices (MATF) + manifest
    inject         plant augmented train duplicates into a test split
    audit          score a test split against a train split
    benchmark      full (dataset x level x augmentation) sweep
    report         re-render / summarize an existing report JSON

Exit codes: 0 success, 1 runtime or I/O failure, 2 validation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from pathlib import Path

from .augment import AugmentationSpec, standard_grid
from .calibrate import (
    AuditConfig,
    audit,
    read_calibration,
    write_calibration,
)
from .contaminate import inject_duplicates, write_plan
from .embedder import (
    ReferenceEmbedderConfig,
    embed_feature_set,
    feature_file_name,
    load_external_features,
)
from .errors import ValidationError
from .sweep import SweepDataset, run_sweep, summarize_sweep
from .synthetic import generate_corpus, write_corpus
from .tensorio import (
    DatasetManifest,
    ManifestSample,
    Tensor,
    atomic_write_text,
    read_manifest_images,
    resolve_sample_path,
    write_manifest,
    write_pgm,
    write_report,
    write_tensor,
)


def _resolve_threads(value: int | None) -> int:
    if value is None:
        env = os.environ.get("MEMAUDIT_THREADS")
        value = int(env) if env else 0
    if value < 0:
        raise ValidationError(f"--threads must be >= 0, got {value}")
    return value if value > 0 else (os.cpu_count() or 1)


def _out_dir(args: argparse.Namespace) -> Path:
    out = args.out or args.output_dir
    if out is None:
        raise ValidationError("an output directory is required (--out or --output-dir)")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_levels(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part]
    except ValueError as exc:
        raise ValidationError(f"bad --levels value {text!r}") from exc


def _parse_augs(text: str) -> list[AugmentationSpec]:
    if text == "all":
        return standard_grid()
    return [AugmentationSpec.from_tag(tag) for tag in text.split(",") if tag]


def _load_embed_config(path: str | None) -> ReferenceEmbedderConfig:
    if path is None:
        return ReferenceEmbedderConfig()
    try:
        return ReferenceEmbedderConfig.from_json(json.loads(Path(path).read_text()))
    except (json.JSONDecodeError, KeyError) as exc:
        raise ValidationError(f"bad embedder config {path}: {exc}") from exc


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    images = generate_corpus(args.n, args.size, args.seed)
    train_path, test_path = write_corpus(out, args.name, images)
    print(f"wrote {len(images)} images; manifests: {train_path}, {test_path}")
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    cfg = _load_embed_config(args.config)
    manifest, images = read_manifest_images(args.images)
    fs = embed_feature_set(images, manifest, cfg)
    resolved = [
        ManifestSample(id=s.id, path=str(resolve_sample_path(args.images, s)))
        for s in manifest.samples
    ]
    out_manifest = DatasetManifest(
        name=manifest.name, split=manifest.split, layers=list(cfg.layer_ids), samples=resolved
    )
    for k in cfg.layer_ids:
        write_tensor(out / feature_file_name(k), Tensor.from_array(fs.layers[k]))
    write_manifest(out / "manifest.json", out_manifest)
    print(f"embedded {len(images)} images into {len(cfg.layer_ids)} layers under {out}")
    return 0


def cmd_audit(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    train = load_external_features(args.train)
    test = load_external_features(args.test)
    calibration = read_calibration(args.calibration) if args.calibration else None
    config = AuditConfig(
        seed=args.seed,
        oni_threshold=args.threshold,
        threads=_resolve_threads(args.threads),
        calibration=calibration,
    )
    report = audit(train, test, config)
    write_report(out / "report.csv", report, format="csv")
    write_report(out / "report.json", report, format="json")
    write_calibration(out / "calibration.json", report.calibration)
    print(
        f"audited {len(report.sample_ids)} samples: "
        f"{int(report.flagged.sum())} flagged (ONI < {args.threshold}), "
        f"mean MI {report.mean_mi:.4f}, mean ONI {report.mean_oni:.4f}"
    )
    return 0


def cmd_inject(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    spec = AugmentationSpec.from_tag(args.aug)
    train_manifest, train_images = read_manifest_images(args.train)
    test_manifest, test_images = read_manifest_images(args.test)
    contaminated, plan = inject_duplicates(
        train_images, test_images, args.level, spec, args.seed
    )
    images_dir = out / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    samples = []
    for i, sample in enumerate(test_manifest.samples):
        if plan.labels[i] and spec.kind == "clean":
            # bitwise copy of the train source file
            src = resolve_sample_path(args.train, train_manifest.samples[plan.source_map[i]])
            dest = images_dir / f"{sample.id}{src.suffix}"
            shutil.copyfile(src, dest)
        elif plan.labels[i]:
            dest = images_dir / f"{sample.id}.pgm"
            write_pgm(dest, contaminated[i], maxval=65535)
        else:
            src = resolve_sample_path(args.test, sample)
            dest = images_dir / f"{sample.id}{src.suffix}"
            shutil.copyfile(src, dest)
        samples.append(ManifestSample(id=sample.id, path=str(dest.relative_to(out))))
    manifest = DatasetManifest(
        name=test_manifest.name, split="test", layers=[], samples=samples
    )
    write_manifest(out / "test_manifest.json", manifest)
    write_plan(out / "plan.json", plan)
    print(f"replaced {plan.n_injected} of {len(test_images)} test samples ({args.aug})")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    levels = _parse_levels(args.levels)
    augs = _parse_augs(args.augs)
    datasets = []
    for ds_dir in args.datasets:
        ds_dir = Path(ds_dir)
        train_path = ds_dir / "train_manifest.json"
        test_path = ds_dir / "test_manifest.json"
        if not train_path.exists() or not test_path.exists():
            raise ValidationError(f"{ds_dir}: expected train_manifest.json and test_manifest.json")
        train_manifest, train_images = read_manifest_images(train_path)
        _, test_images = read_manifest_images(test_path)
        datasets.append(
            SweepDataset(
                name=train_manifest.name, train_images=train_images, test_images=test_images
            )
        )
    sweep = run_sweep(
        datasets,
        levels=levels,
        augmentations=augs,
        seed=args.seed,
        embed_cfg=_load_embed_config(args.config),
        oni_threshold=args.threshold,
        out_dir=out,
        threads=_resolve_threads(args.threads),
    )
    atomic_write_text(out / "summary_stats.json", json.dumps(summarize_sweep(sweep), indent=2) + "\n")
    print(
        f"swept {len(sweep.datasets)} dataset(s) x {len(sweep.levels)} levels x "
        f"{len(sweep.augmentations)} augmentations -> {out}"
    )
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    doc = json.loads(Path(args.report).read_text())
    summary = doc["summary"]
    if args.out or args.output_dir:
        out = _out_dir(args)
        cols = ["sample_id", "s", "d", "mi", "oni", "flagged", "consensus"] + [
            f"neighbor_layer_{k}" for k in summary["layer_ids"]
        ]
        lines = [",".join(cols)]
        for row in doc["samples"]:
            rendered = [
                row["sample_id"],
                repr(row["s"]),
                repr(row["d"]),
                repr(row["mi"]),
                repr(row["oni"]),
                "true" if row["flagged"] else "false",
                str(row["consensus"]),
            ]
            rendered += [str(row["neighbors"][str(k)]) for k in summary["layer_ids"]]
            lines.append(",".join(rendered))
        atomic_write_text(out / "report.csv", "\n".join(lines) + "\n")
    print(
        f"{summary['n_samples']} samples, {summary['n_flagged']} flagged "
        f"(ONI < {summary['oni_threshold']}), mean MI {summary['mean_mi']:.4f}, "
        f"mean ONI {summary['mean_oni']:.4f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memaudit", description=__doc__)
    parser.add_argument("--seed", type=int, default=42, help="global RNG seed")
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker threads (0 = auto; falls back to MEMAUDIT_THREADS)",
    )
    parser.add_argument("--output-dir", default=None, help="default output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a procedural corpus")
    p.add_argument("--n", type=int, default=200, help="total images (split into halves)")
    p.add_argument("--size", type=int, default=128, help="image side length in pixels")
    p.add_argument("--name", default="synthetic", help="dataset name for the manifests")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("embed", help="embed manifest images with the reference embedder")
    p.add_argument("--images", required=True, help="image manifest JSON")
    p.add_argument("--config", default=None, help="embedder config JSON")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("audit", help="audit a test split against a train split")
    p.add_argument("--train", required=True, help="train feature manifest")
    p.add_argument("--test", required=True, help="test feature manifest")
    p.add_argument("--calibration", default=None, help="reuse a calibration JSON")
    p.add_argument("--threshold", type=float, default=0.68, help="flag when ONI < threshold")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("inject", help="inject augmented train duplicates into a test split")
    p.add_argument("--train", required=True, help="train image manifest")
    p.add_argument("--test", required=True, help="test image manifest")
    p.add_argument("--level", type=float, required=True, help="duplication fraction in (0, 1)")
    p.add_argument("--aug", default="clean", help="augmentation tag, e.g. noise_0.01")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("benchmark", help="full evaluation sweep over dataset directories")
    p.add_argument("--datasets", nargs="+", required=True, help="dirs with train/test manifests")
    p.add_argument("--levels", default="0.05,0.15,0.30,0.45")
    p.add_argument("--augs", default="all", help='"all" or comma-separated tags')
    p.add_argument("--config", default=None, help="embedder config JSON")
    p.add_argument("--threshold", type=float, default=0.68)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="summarize or re-render a report JSON")
    p.add_argument("--report", required=True, help="report.json produced by audit")
    p.add_argument("--out", default=None, help="also write report.csv here")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
