"""Per-layer pooled feature vectors.

Two sources produce the same FeatureSet shape: a deterministic multi-scale
reference embedder (pooled intensity and gradient statistics, no learned
model), and ingestion of externally extracted per-layer feature matrices
dumped as MATF files next to their manifest.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .tensorio import DatasetManifest, ImageSlice, read_manifest, read_tensor


@dataclass(frozen=True)
class FeatureMap:
    """Raw C x h x w activation block for one layer of one sample."""

    layer_id: int
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValidationError(f"feature map must be rank 3, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValidationError("feature map contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


def pool_features(fm: FeatureMap) -> np.ndarray:
    """Global average pool: mean over the spatial extent, one value per channel."""
    if fm.height == 0 or fm.width == 0:
        raise ValidationError("cannot pool a feature map with empty spatial extent")
    return fm.values.mean(axis=(1, 2))


@dataclass(frozen=True)
class ReferenceEmbedderConfig:
    """Pooling grids for the reference embedder, finest first.

    Finer grids map to smaller layer ids so the layer ordering runs from
    local texture statistics to coarse structure.
    """

    grids: tuple[tuple[int, int], ...] = ((16, 16), (8, 8), (4, 4))
    layer_ids: tuple[int, ...] = (3, 7, 11)
    include_gradient_channel: bool = True

    def __post_init__(self) -> None:
        if not self.grids:
            raise ValidationError("at least one pooling grid is required")
        if len(self.grids) != len(self.layer_ids):
            raise ValidationError("grids and layer_ids must have equal length")
        if len(set(self.layer_ids)) != len(self.layer_ids):
            raise ValidationError("layer ids must be unique")
        if any(gh < 1 or gw < 1 for gh, gw in self.grids):
            raise ValidationError("grid sizes must be >= 1")
        areas = [gh * gw for gh, gw in self.grids]
        if any(a < b for a, b in zip(areas, areas[1:])):
            raise ValidationError("grids must be ordered finest to coarsest")
        if any(a >= b for a, b in zip(self.layer_ids, self.layer_ids[1:])):
            raise ValidationError("layer ids must be strictly increasing")

    def to_json(self) -> dict:
        return {
            "grids": [list(g) for g in self.grids],
            "layer_ids": list(self.layer_ids),
            "include_gradient_channel": self.include_gradient_channel,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ReferenceEmbedderConfig":
        return cls(
            grids=tuple((int(g[0]), int(g[1])) for g in doc["grids"]),
            layer_ids=tuple(int(k) for k in doc["layer_ids"]),
            include_gradient_channel=bool(doc.get("include_gradient_channel", True)),
        )


def _cell_means(values: np.ndarray, gh: int, gw: int) -> np.ndarray:
    """Mean per grid cell; ranges are equal with the remainder in the last cell."""
    h, w = values.shape
    rh, rw = h // gh, w // gw
    if rh == 0 or rw == 0:
        raise ValidationError(f"image {h}x{w} is smaller than grid {gh}x{gw}")
    row_starts = np.arange(gh) * rh
    col_starts = np.arange(gw) * rw
    sums = np.add.reduceat(np.add.reduceat(values, row_starts, axis=0), col_starts, axis=1)
    row_sizes = np.diff(np.append(row_starts, h))
    col_sizes = np.diff(np.append(col_starts, w))
    return sums / np.outer(row_sizes, col_sizes)


def _gradient_magnitude(pixels: np.ndarray) -> np.ndarray:
    """Forward-difference gradient magnitude; trailing row/column difference is 0."""
    gx = np.zeros_like(pixels)
    gy = np.zeros_like(pixels)
    gx[:, :-1] = pixels[:, 1:] - pixels[:, :-1]
    gy[:-1, :] = pixels[1:, :] - pixels[:-1, :]
    return np.sqrt(gx * gx + gy * gy)


def embed_reference(
    img: ImageSlice, cfg: ReferenceEmbedderConfig | None = None
) -> dict[int, np.ndarray]:
    """Embed one image as per-cell intensity means (plus gradient means) per grid.

    Deterministic: the same image always yields bitwise-identical vectors.
    """
    cfg = cfg or ReferenceEmbedderConfig()
    grad = _gradient_magnitude(img.pixels) if cfg.include_gradient_channel else None
    out: dict[int, np.ndarray] = {}
    for (gh, gw), layer_id in zip(cfg.grids, cfg.layer_ids):
        parts = [_cell_means(img.pixels, gh, gw).ravel()]
        if grad is not None:
            parts.append(_cell_means(grad, gh, gw).ravel())
        out[layer_id] = np.concatenate(parts)
    return out


def embed_reference_batch(
    images: Sequence[ImageSlice], cfg: ReferenceEmbedderConfig | None = None
) -> dict[int, np.ndarray]:
    """Stack per-image embeddings into one matrix per layer (rows in input order)."""
    cfg = cfg or ReferenceEmbedderConfig()
    if not images:
        raise ValidationError("cannot embed an empty image list")
    per_image = [embed_reference(im, cfg) for im in images]
    return {k: np.stack([v[k] for v in per_image]) for k in cfg.layer_ids}


@dataclass
class FeatureSet:
    """Per-layer feature matrices for one split, rows in manifest order."""

    manifest: DatasetManifest
    layers: dict[int, np.ndarray]

    def __post_init__(self) -> None:
        if set(self.layers) != set(self.manifest.layers):
            raise ValidationError(
                f"layer keys {sorted(self.layers)} disagree with manifest layers "
                f"{sorted(self.manifest.layers)}"
            )
        n = self.manifest.n_samples
        for k, mat in self.layers.items():
            mat = np.asarray(mat, dtype=np.float64)
            if mat.ndim != 2 or mat.shape[0] != n:
                raise ValidationError(
                    f"layer {k}: expected {n} feature rows, got shape {mat.shape}"
                )
            self.layers[k] = mat

    @property
    def layer_ids(self) -> list[int]:
        return list(self.manifest.layers)

    @property
    def n_samples(self) -> int:
        return self.manifest.n_samples

    @property
    def sample_ids(self) -> list[str]:
        return [s.id for s in self.manifest.samples]


def embed_feature_set(
    images: Sequence[ImageSlice],
    manifest: DatasetManifest,
    cfg: ReferenceEmbedderConfig | None = None,
) -> FeatureSet:
    cfg = cfg or ReferenceEmbedderConfig()
    if len(images) != manifest.n_samples:
        raise ValidationError(
            f"{len(images)} images for {manifest.n_samples} manifest samples"
        )
    layers = embed_reference_batch(images, cfg)
    out_manifest = dataclasses.replace(manifest, layers=list(cfg.layer_ids))
    return FeatureSet(manifest=out_manifest, layers=layers)


def feature_file_name(layer_id: int) -> str:
    return f"features_layer_{layer_id}.matf"


def load_external_features(manifest_path: str | Path) -> FeatureSet:
    """Load per-layer MATF feature matrices stored alongside a manifest."""
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    if not manifest.layers:
        raise ValidationError(f"{manifest_path}: manifest lists no feature layers")
    layers: dict[int, np.ndarray] = {}
    for k in manifest.layers:
        fpath = manifest_path.parent / feature_file_name(k)
        if not fpath.exists():
            raise ValidationError(f"missing feature file for layer {k}: {fpath}")
        t = read_tensor(fpath)
        if len(t.shape) != 2:
            raise ValidationError(f"{fpath}: expected a rank-2 tensor, got shape {t.shape}")
        if t.shape[0] != manifest.n_samples:
            raise ValidationError(
                f"{fpath}: {t.shape[0]} rows for {manifest.n_samples} manifest samples"
            )
        layers[k] = t.to_array().astype(np.float64)
    return FeatureSet(manifest=manifest, layers=layers)
