"""Portable binary formats shared by every pipeline stage.

MATF tensor container, byte-exact across platforms:

    offset  size  field
    0       4     magic "MATF"
    4       1     version, 0x01
    5       1     dtype code, 0x01 = float32 little-endian
    6       1     ndim as unsigned 8-bit
    7       8*n   each dimension as unsigned 64-bit little-endian
    ...     rest  raw little-endian element data, row-major, no padding

Also here: PGM P5 image reading/writing (maxval up to 65535, two-byte
samples big-endian per the PGM convention), dataset manifests as JSON,
and audit report serialization (CSV and JSON carry identical numbers).
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .errors import (
    BadMagicError,
    ImageFormatError,
    TruncatedPayloadError,
    UnsupportedDtypeError,
    UnsupportedVersionError,
    ValidationError,
)

if TYPE_CHECKING:  # pragma: no cover
    from .calibrate import AuditReport

MATF_MAGIC = b"MATF"
MATF_VERSION = 0x01
DTYPE_FLOAT32 = 0x01


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write via a temp file and rename so readers never see partial files."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


@dataclass(frozen=True)
class Tensor:
    """A dense row-major float32 tensor."""

    shape: tuple[int, ...]
    data: np.ndarray  # flat float32 buffer
    dtype_code: int = DTYPE_FLOAT32

    def __post_init__(self) -> None:
        if self.dtype_code != DTYPE_FLOAT32:
            raise UnsupportedDtypeError(f"unknown dtype code 0x{self.dtype_code:02x}")
        if any(d < 0 for d in self.shape):
            raise ValidationError(f"negative dimension in shape {self.shape}")
        data = np.ascontiguousarray(self.data, dtype="<f4").ravel()
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        if math.prod(self.shape) != self.data.size:
            raise ValidationError(
                f"shape {self.shape} implies {math.prod(self.shape)} elements, "
                f"buffer holds {self.data.size}"
            )

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Tensor":
        arr = np.asarray(arr)
        return cls(shape=tuple(arr.shape), data=arr.astype("<f4").ravel())

    def to_array(self) -> np.ndarray:
        return self.data.reshape(self.shape)


def write_tensor(path: str | Path, t: Tensor) -> None:
    header = MATF_MAGIC + bytes([MATF_VERSION, t.dtype_code, len(t.shape)])
    dims = b"".join(struct.pack("<Q", d) for d in t.shape)
    atomic_write_bytes(path, header + dims + t.data.tobytes())


def read_tensor(path: str | Path) -> Tensor:
    raw = Path(path).read_bytes()
    return tensor_from_bytes(raw, context=str(path))


def tensor_from_bytes(raw: bytes, context: str = "<bytes>") -> Tensor:
    if len(raw) < 7:
        raise TruncatedPayloadError(f"{context}: {len(raw)} bytes is too short for a MATF header")
    if raw[:4] != MATF_MAGIC:
        raise BadMagicError(f"{context}: bad magic {raw[:4]!r}")
    version, dtype_code, ndim = raw[4], raw[5], raw[6]
    if version != MATF_VERSION:
        raise UnsupportedVersionError(f"{context}: unsupported version 0x{version:02x}")
    if dtype_code != DTYPE_FLOAT32:
        raise UnsupportedDtypeError(f"{context}: unknown dtype code 0x{dtype_code:02x}")
    dims_end = 7 + 8 * ndim
    if len(raw) < dims_end:
        raise TruncatedPayloadError(f"{context}: header cut off inside dimension list")
    shape = tuple(struct.unpack_from("<Q", raw, 7 + 8 * i)[0] for i in range(ndim))
    expected = math.prod(shape) * 4
    payload = raw[dims_end:]
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"{context}: shape {shape} needs {expected} payload bytes, found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").copy()
    return Tensor(shape=shape, data=data)


@dataclass(frozen=True)
class ImageSlice:
    """One 2-D grayscale slice with intensities in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValidationError(f"image must be 2-D and non-empty, got shape {px.shape}")
        if not np.isfinite(px).all():
            raise ValidationError("image contains non-finite values")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValidationError(
                f"pixel values outside [0, 1]: min={px.min()}, max={px.max()}"
            )
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _parse_pgm_header(raw: bytes) -> tuple[int, int, int, int]:
    """Return (width, height, maxval, data offset) of a binary PGM."""
    if raw[:2] != b"P5":
        raise ImageFormatError("not a binary PGM (missing P5 signature)")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        token = raw[start:pos]
        if not token.isdigit():
            raise ImageFormatError(f"malformed PGM header token {token!r}")
        fields.append(int(token))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if not 1 <= maxval <= 65535:
        raise ImageFormatError(f"PGM maxval {maxval} out of range")
    return width, height, maxval, pos


def read_pgm(path: str | Path) -> ImageSlice:
    raw = Path(path).read_bytes()
    width, height, maxval, offset = _parse_pgm_header(raw)
    two_byte = maxval > 255
    count = width * height
    need = count * (2 if two_byte else 1)
    payload = raw[offset : offset + need]
    if len(payload) != need:
        raise ImageFormatError(f"{path}: PGM payload truncated ({len(payload)} of {need} bytes)")
    dtype = ">u2" if two_byte else "u1"
    values = np.frombuffer(payload, dtype=dtype).astype(np.float64).reshape(height, width)
    return ImageSlice(values / maxval)


def write_pgm(path: str | Path, img: ImageSlice, maxval: int = 65535) -> None:
    if not 1 <= maxval <= 65535:
        raise ValidationError(f"maxval {maxval} out of range")
    header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
    q = np.rint(img.pixels * maxval)
    payload = q.astype(">u2" if maxval > 255 else "u1").tobytes()
    atomic_write_bytes(path, header + payload)


def read_image(path: str | Path) -> ImageSlice:
    """Read a PGM P5 or rank-2 MATF file; MATF values are clamped to [0, 1]."""
    raw = Path(path).read_bytes()
    if raw[:2] == b"P5":
        width, height, maxval, offset = _parse_pgm_header(raw)
        two_byte = maxval > 255
        need = width * height * (2 if two_byte else 1)
        payload = raw[offset : offset + need]
        if len(payload) != need:
            raise ImageFormatError(f"{path}: PGM payload truncated")
        dtype = ">u2" if two_byte else "u1"
        values = np.frombuffer(payload, dtype=dtype).astype(np.float64).reshape(height, width)
        return ImageSlice(values / maxval)
    if raw[:4] == MATF_MAGIC:
        t = tensor_from_bytes(raw, context=str(path))
        if len(t.shape) != 2:
            raise ImageFormatError(f"{path}: tensor rank {len(t.shape)} is not an image")
        return ImageSlice(np.clip(t.to_array().astype(np.float64), 0.0, 1.0))
    raise ImageFormatError(f"{path}: neither PGM P5 nor MATF")


@dataclass(frozen=True)
class ManifestSample:
    id: str
    path: str


@dataclass
class DatasetManifest:
    """Ordered sample listing for one split; ordering fixes feature-row order."""

    name: str
    split: str
    layers: list[int] = field(default_factory=list)
    samples: list[ManifestSample] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.split not in ("train", "test"):
            raise ValidationError(f"split must be train or test, got {self.split!r}")
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate sample ids in manifest {self.name!r}")

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "split": self.split,
            "layers": list(self.layers),
            "samples": [{"id": s.id, "path": s.path} for s in self.samples],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DatasetManifest":
        return cls(
            name=doc["name"],
            split=doc["split"],
            layers=[int(k) for k in doc["layers"]],
            samples=[ManifestSample(id=s["id"], path=s["path"]) for s in doc["samples"]],
        )


def write_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    atomic_write_text(path, json.dumps(manifest.to_json(), indent=2) + "\n")


def read_manifest(path: str | Path) -> DatasetManifest:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    try:
        return DatasetManifest.from_json(doc)
    except KeyError as exc:
        raise ValidationError(f"{path}: manifest missing field {exc}") from exc


def resolve_sample_path(manifest_path: str | Path, sample: ManifestSample) -> Path:
    """Sample paths are stored relative to the manifest's directory."""
    p = Path(sample.path)
    return p if p.is_absolute() else Path(manifest_path).parent / p


def read_manifest_images(manifest_path: str | Path) -> tuple[DatasetManifest, list[ImageSlice]]:
    manifest = read_manifest(manifest_path)
    images = [read_image(resolve_sample_path(manifest_path, s)) for s in manifest.samples]
    return manifest, images


# --- audit report serialization -------------------------------------------

REPORT_BASE_COLUMNS = ["sample_id", "s", "d", "mi", "oni", "flagged", "consensus"]


def _fmt(v: float) -> str:
    return repr(float(v))


def report_csv_text(report: "AuditReport") -> str:
    cols = REPORT_BASE_COLUMNS + [f"neighbor_layer_{k}" for k in report.layer_ids]
    lines = [",".join(cols)]
    for i, sid in enumerate(report.sample_ids):
        row = [
            sid,
            _fmt(report.s[i]),
            _fmt(report.d[i]),
            _fmt(report.mi[i]),
            _fmt(report.oni[i]),
            "true" if report.flagged[i] else "false",
            str(int(report.consensus[i])),
        ]
        row += [str(int(report.neighbors[k][i])) for k in report.layer_ids]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def report_json_doc(report: "AuditReport") -> dict:
    samples = []
    for i, sid in enumerate(report.sample_ids):
        samples.append(
            {
                "sample_id": sid,
                "s": float(report.s[i]),
                "d": float(report.d[i]),
                "mi": float(report.mi[i]),
                "oni": float(report.oni[i]),
                "flagged": bool(report.flagged[i]),
                "consensus": int(report.consensus[i]),
                "neighbors": {str(k): int(report.neighbors[k][i]) for k in report.layer_ids},
            }
        )
    return {
        "samples": samples,
        "summary": {
            "n_samples": len(report.sample_ids),
            "n_flagged": int(np.count_nonzero(report.flagged)),
            "mean_mi": float(report.mean_mi),
            "mean_oni": float(report.mean_oni),
            "oni_threshold": float(report.oni_threshold),
            "layer_ids": [int(k) for k in report.layer_ids],
        },
        "calibration": report.calibration.to_json(),
    }


def write_report(path: str | Path, report: "AuditReport", format: str = "csv") -> None:
    if format == "csv":
        atomic_write_text(path, report_csv_text(report))
    elif format == "json":
        atomic_write_text(path, json.dumps(report_json_doc(report), indent=2) + "\n")
    else:
        raise ValidationError(f"unknown report format {format!r}")
