"""Procedural grayscale corpora for desk-scale experiments.

Each image is a sum of seeded Gaussian bumps: a handful of large blobs
for gross structure plus a few hundred small low-amplitude bumps that
give every image its own fine texture, then an affine squeeze into
[0.08, 0.92]. The margin keeps additive-noise augmentations away from
the clamping boundaries; the texture keeps novel images clearly apart
from any finite training set in feature space.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ValidationError
from .seeds import derive_seed
from .tensorio import DatasetManifest, ImageSlice, ManifestSample, write_manifest, write_pgm

INTENSITY_MARGIN = 0.08
MIN_PAIR_MAX_DIFF = 0.01


def _blob_image(rng: np.random.Generator, size: int) -> np.ndarray:
    img = np.zeros((size, size), dtype=np.float64)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    for _ in range(int(rng.integers(4, 9))):
        cy, cx = rng.uniform(0, size - 1, 2)
        sig = rng.uniform(0.06 * size, 0.22 * size)
        amp = rng.uniform(0.4, 1.0) * (1.0 if rng.uniform() < 0.7 else -1.0)
        img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sig * sig))
    for _ in range(int(rng.integers(300, 501))):
        cy, cx = rng.uniform(0, size - 1, 2)
        sig = rng.uniform(0.015 * size, 0.045 * size)
        amp = rng.uniform(0.06, 0.18) * (1.0 if rng.uniform() < 0.5 else -1.0)
        r0, r1 = max(0, int(cy - 4 * sig)), min(size, int(cy + 4 * sig) + 1)
        c0, c1 = max(0, int(cx - 4 * sig)), min(size, int(cx + 4 * sig) + 1)
        ys, xs = np.mgrid[r0:r1, c0:c1].astype(np.float64)
        img[r0:r1, c0:c1] += amp * np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * sig * sig))
    lo, hi = img.min(), img.max()
    if hi - lo < 1e-9:
        raise ValidationError("degenerate blob image (flat)")
    u = (img - lo) / (hi - lo)
    return u * (1.0 - 2.0 * INTENSITY_MARGIN) + INTENSITY_MARGIN


def generate_corpus(n: int, size: int, seed: int) -> list[ImageSlice]:
    """Generate n distinct images; near-collisions are regenerated.

    Distinctness means max absolute pixel difference > 0.01 for every
    pair, verified after generation.
    """
    if n < 1 or size < 16:
        raise ValidationError(f"need n >= 1 and size >= 16, got n={n}, size={size}")
    flat = np.empty((n, size * size), dtype=np.float64)
    for i in range(n):
        for attempt in range(10):
            img = _blob_image(np.random.default_rng(derive_seed(seed, "image", i, attempt)), size)
            candidate = img.ravel()
            if _collides(candidate, flat[:i]):
                continue
            flat[i] = candidate
            break
        else:
            raise ValidationError(f"could not generate a distinct image at index {i}")
    return [ImageSlice(flat[i].reshape(size, size)) for i in range(n)]


def _collides(candidate: np.ndarray, existing: np.ndarray) -> bool:
    if existing.shape[0] == 0:
        return False
    # L-inf >= L2 / sqrt(npix): only pairs with small L2 need the exact check
    d2 = ((existing - candidate) ** 2).sum(axis=1)
    threshold = MIN_PAIR_MAX_DIFF * np.sqrt(candidate.size)
    suspects = np.flatnonzero(d2 <= threshold * threshold)
    return any(
        np.abs(existing[j] - candidate).max() <= MIN_PAIR_MAX_DIFF for j in suspects
    )


def write_corpus(
    out_dir: str | Path, name: str, images: list[ImageSlice]
) -> tuple[Path, Path]:
    """Split images into disjoint halves and write PGMs plus both manifests.

    Returns the (train, test) manifest paths.
    """
    if len(images) < 2:
        raise ValidationError("corpus needs at least 2 images to split")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    half = len(images) // 2
    manifests = []
    for split, block in (("train", images[:half]), ("test", images[half:])):
        samples = []
        for i, img in enumerate(block):
            sample_id = f"{split}_{i:03d}"
            rel = f"images/{sample_id}.pgm"
            write_pgm(out_dir / rel, img, maxval=65535)
            samples.append(ManifestSample(id=sample_id, path=rel))
        manifest = DatasetManifest(name=name, split=split, layers=[], samples=samples)
        path = out_dir / f"{split}_manifest.json"
        write_manifest(path, manifest)
        manifests.append(path)
    return manifests[0], manifests[1]
