"""Image perturbations applied to injected duplicates.

The standard grid holds eight conditions: clean, two Gaussian noise
levels, two rotation magnitudes (sign drawn per sample), both flips, and
random intensity scaling. Every operation is pure given (spec, seed) and
returns a valid image (same shape, values clamped to [0, 1]).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .seeds import derive_seed
from .tensorio import ImageSlice

KINDS = ("clean", "noise", "rotate", "flip_h", "flip_v", "intensity")
DEFAULT_INTENSITY_RANGE = (0.9, 1.1)


@dataclass(frozen=True)
class AugmentationSpec:
    kind: str
    sigma: float | None = None
    degrees: float | None = None
    intensity_range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"unknown augmentation kind {self.kind!r}")
        if self.kind == "noise":
            if self.sigma is None or self.sigma <= 0:
                raise ValidationError("noise requires sigma > 0")
        if self.kind == "rotate":
            if self.degrees is None or not np.isfinite(self.degrees):
                raise ValidationError("rotate requires finite degrees")
            if abs(self.degrees) >= 90:
                raise ValidationError("rotation magnitude must be below 90 degrees")
        if self.kind == "intensity":
            rng = self.intensity_range or DEFAULT_INTENSITY_RANGE
            if rng[0] > rng[1]:
                raise ValidationError(f"intensity range {rng} has lo > hi")
            object.__setattr__(self, "intensity_range", (float(rng[0]), float(rng[1])))

    @property
    def tag(self) -> str:
        if self.kind == "noise":
            return f"noise_{self.sigma:g}"
        if self.kind == "rotate":
            return f"rot_{self.degrees:g}"
        if self.kind == "intensity":
            if self.intensity_range == DEFAULT_INTENSITY_RANGE:
                return "intensity"
            lo, hi = self.intensity_range
            return f"intensity_{lo:g}_{hi:g}"
        return self.kind

    @classmethod
    def from_tag(cls, tag: str) -> "AugmentationSpec":
        if tag in ("clean", "flip_h", "flip_v"):
            return cls(kind=tag)
        if tag == "intensity":
            return cls(kind="intensity", intensity_range=DEFAULT_INTENSITY_RANGE)
        if tag.startswith("noise_"):
            return cls(kind="noise", sigma=float(tag[len("noise_") :]))
        if tag.startswith("rot_"):
            return cls(kind="rotate", degrees=float(tag[len("rot_") :]))
        if tag.startswith("intensity_"):
            lo, hi = tag[len("intensity_") :].split("_")
            return cls(kind="intensity", intensity_range=(float(lo), float(hi)))
        raise ValidationError(f"unknown augmentation tag {tag!r}")


def standard_grid() -> list[AugmentationSpec]:
    """The eight evaluation conditions, clean included."""
    return [
        AugmentationSpec(kind="clean"),
        AugmentationSpec(kind="noise", sigma=0.01),
        AugmentationSpec(kind="noise", sigma=0.02),
        AugmentationSpec(kind="rotate", degrees=3.0),
        AugmentationSpec(kind="rotate", degrees=5.0),
        AugmentationSpec(kind="flip_h"),
        AugmentationSpec(kind="flip_v"),
        AugmentationSpec(kind="intensity", intensity_range=DEFAULT_INTENSITY_RANGE),
    ]


def add_gaussian_noise(img: ImageSlice, sigma: float, seed: int) -> ImageSlice:
    """Add i.i.d. zero-mean Gaussian noise per pixel, then clamp to [0, 1]."""
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    rng = np.random.default_rng(seed)
    noisy = img.pixels + rng.normal(0.0, sigma, img.pixels.shape)
    return ImageSlice(np.clip(noisy, 0.0, 1.0))


def rotate(img: ImageSlice, degrees: float) -> ImageSlice:
    """Rotate about the image center with bilinear interpolation.

    Output has the same shape; samples falling outside the source are 0.
    """
    if abs(degrees) >= 90:
        raise ValidationError("rotation magnitude must be below 90 degrees")
    h, w = img.pixels.shape
    theta = np.deg2rad(degrees)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = rows - cy, cols - cx
    # inverse mapping: rotate output coordinates back into the source frame
    src_x = np.cos(theta) * dx + np.sin(theta) * dy + cx
    src_y = -np.sin(theta) * dx + np.cos(theta) * dy + cy
    r0 = np.floor(src_y).astype(np.int64)
    c0 = np.floor(src_x).astype(np.int64)
    fr = src_y - r0
    fc = src_x - c0
    out = np.zeros_like(img.pixels)
    corners = (
        (r0, c0, (1 - fr) * (1 - fc)),
        (r0, c0 + 1, (1 - fr) * fc),
        (r0 + 1, c0, fr * (1 - fc)),
        (r0 + 1, c0 + 1, fr * fc),
    )
    for rr, cc, weight in corners:
        inside = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        vals = img.pixels[np.clip(rr, 0, h - 1), np.clip(cc, 0, w - 1)]
        out[inside] += (weight * vals)[inside]
    return ImageSlice(np.clip(out, 0.0, 1.0))


def flip_h(img: ImageSlice) -> ImageSlice:
    """Exact column reversal."""
    return ImageSlice(img.pixels[:, ::-1].copy())


def flip_v(img: ImageSlice) -> ImageSlice:
    """Exact row reversal."""
    return ImageSlice(img.pixels[::-1, :].copy())


def scale_intensity(
    img: ImageSlice,
    intensity_range: tuple[float, float] = DEFAULT_INTENSITY_RANGE,
    seed: int = 0,
) -> ImageSlice:
    """Multiply all pixels by one factor drawn uniformly from the range."""
    lo, hi = intensity_range
    if lo > hi:
        raise ValidationError(f"intensity range ({lo}, {hi}) has lo > hi")
    factor = np.random.default_rng(seed).uniform(lo, hi)
    return ImageSlice(np.clip(img.pixels * factor, 0.0, 1.0))


def apply_augmentation(img: ImageSlice, spec: AugmentationSpec, seed: int) -> ImageSlice:
    """Apply one augmentation; rotation sign is drawn per call from the seed."""
    if spec.kind == "clean":
        return img
    if spec.kind == "noise":
        return add_gaussian_noise(img, spec.sigma, seed)
    if spec.kind == "rotate":
        sign = 1.0 if np.random.default_rng(derive_seed(seed, "sign")).integers(2) else -1.0
        return rotate(img, sign * spec.degrees)
    if spec.kind == "flip_h":
        return flip_h(img)
    if spec.kind == "flip_v":
        return flip_v(img)
    if spec.kind == "intensity":
        return scale_intensity(img, spec.intensity_range, seed)
    raise ValidationError(f"unknown augmentation kind {spec.kind!r}")
