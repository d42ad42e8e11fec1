"""MATF tensor container, written to the shared byte-level contract.

Layout: magic "MATF", version 0x01, dtype code 0x01 (float32
little-endian), ndim as u8, each dimension as u64 little-endian, then the
raw row-major element bytes. This module is deliberately standalone so
the bridge shares only the wire format with its consumers, not code; the
golden-fixture test pins byte equality.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MATF"
VERSION = 0x01
DTYPE_FLOAT32 = 0x01


def matf_bytes(array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array, dtype="<f4")
    header = MAGIC + bytes([VERSION, DTYPE_FLOAT32, array.ndim])
    dims = b"".join(struct.pack("<Q", d) for d in array.shape)
    return header + dims + array.tobytes()


def write_matf(path: str | Path, array: np.ndarray) -> None:
    Path(path).write_bytes(matf_bytes(array))


def read_matf(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}")
    version, dtype_code, ndim = raw[4], raw[5], raw[6]
    if version != VERSION or dtype_code != DTYPE_FLOAT32:
        raise ValueError(f"{path}: unsupported version/dtype ({version}, {dtype_code})")
    shape = tuple(struct.unpack_from("<Q", raw, 7 + 8 * i)[0] for i in range(ndim))
    payload = raw[7 + 8 * ndim :]
    if len(payload) != math.prod(shape) * 4:
        raise ValueError(f"{path}: payload length disagrees with shape {shape}")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
