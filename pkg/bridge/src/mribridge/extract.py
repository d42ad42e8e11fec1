"""Hook transformer blocks of a ViT-family encoder and dump pooled features.

For each input image the encoder runs once; forward hooks capture the
configured blocks' token outputs, the spatial tokens (prefix CLS/register
tokens excluded) are reshaped to a C x h x w grid and global-average
pooled to one C-vector per block. Results are stacked in input order into
one n x C matrix per block and written as MATF files next to a manifest,
plus a per-row checksum side file that pins the row order.

Block indexing is 0-based over the encoder's block list and configurable;
pass whatever indices your checkpoint's numbering convention calls for.
"""

from __future__ import annotations

import hashlib
import importlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .matf import matf_bytes, write_matf

GOLDEN_SELF_TEST = np.arange(1, 7, dtype=np.float32).reshape(2, 3)


class BridgeError(RuntimeError):
    pass


@dataclass
class BridgeConfig:
    model: str  # TorchScript path or "module:factory" callable spec
    images: list[str]
    out_dir: str
    blocks: tuple[int, ...] = (3, 7, 11)
    device: str = "cpu"
    input_size: int = 224
    in_channels: int = 3
    n_prefix_tokens: int | None = None  # None = infer (strip until square)
    block_attr: str | None = None  # None = probe common layouts
    dataset_name: str = "bridge"
    split: str = "test"

    def __post_init__(self) -> None:
        if not self.images:
            raise BridgeError("no input images given")
        if len(set(self.blocks)) != len(self.blocks) or any(b < 0 for b in self.blocks):
            raise BridgeError(f"block indices must be unique and non-negative: {self.blocks}")


def load_encoder(spec: str, device: str) -> torch.nn.Module:
    """Build the encoder from a "module:factory" spec or a pickled checkpoint.

    TorchScript files are not supported: loaded ScriptModules cannot take
    forward hooks, and hooks are how block outputs are captured.
    """
    if ":" in spec and not Path(spec).exists():
        module_name, factory_name = spec.split(":", 1)
        module = importlib.import_module(module_name)
        model = getattr(module, factory_name)()
    else:
        path = Path(spec)
        if not path.exists():
            raise BridgeError(f"checkpoint not found: {path}")
        model = torch.load(str(path), map_location=device, weights_only=False)
    if not isinstance(model, torch.nn.Module):
        raise BridgeError(f"{spec} did not yield an nn.Module (got {type(model).__name__})")
    model.eval()
    return model.to(device)


_BLOCK_ATTRS = ("blocks", "encoder.blocks", "encoder.layers", "layers", "encoder.layer")


def find_blocks(model: torch.nn.Module, block_attr: str | None = None):
    """Locate the encoder's transformer block list."""
    candidates = (block_attr,) if block_attr else _BLOCK_ATTRS
    for attr in candidates:
        node = model
        try:
            for part in attr.split("."):
                node = getattr(node, part)
        except AttributeError:
            continue
        try:
            length = len(node)
        except TypeError:
            continue
        if length > 0:
            return node
    raise BridgeError(
        f"could not locate a block list on the model (tried {', '.join(candidates)})"
    )


def read_pgm(path: str | Path) -> np.ndarray:
    """Minimal binary-PGM reader; returns float intensities in [0, 1]."""
    raw = Path(path).read_bytes()
    if raw[:2] != b"P5":
        raise BridgeError(f"{path}: not a binary PGM")
    pos, fields = 2, []
    while len(fields) < 3:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1
    width, height, maxval = fields
    dtype = ">u2" if maxval > 255 else "u1"
    pixels = np.frombuffer(raw, dtype=dtype, count=width * height, offset=pos)
    return pixels.astype(np.float32).reshape(height, width) / maxval


def spatial_tokens_to_grid(tokens: np.ndarray, n_prefix: int | None) -> np.ndarray:
    """(N, C) token block -> (C, h, w) grid, prefix tokens stripped.

    With n_prefix None, leading tokens are stripped until the remainder is
    a perfect square (CLS/register tokens sit at the front in ViT models).
    """
    if tokens.ndim == 3:  # already (C, h, w)
        return tokens
    if tokens.ndim != 2:
        raise BridgeError(f"block output has unexpected rank {tokens.ndim}")
    n, channels = tokens.shape
    if n_prefix is None:
        n_prefix = 0
        while n - n_prefix > 0 and int(round((n - n_prefix) ** 0.5)) ** 2 != n - n_prefix:
            n_prefix += 1
    spatial = n - n_prefix
    side = int(round(spatial**0.5))
    if spatial <= 0 or side * side != spatial:
        raise BridgeError(f"{n} tokens minus {n_prefix} prefix tokens is not a square grid")
    grid = tokens[n_prefix:].reshape(side, side, channels)
    return np.transpose(grid, (2, 0, 1))


def pool_grid(grid: np.ndarray) -> np.ndarray:
    """Global average pool: mean over the spatial extent per channel."""
    return grid.mean(axis=(1, 2))


def _prepare_batch(pixels: np.ndarray, cfg: BridgeConfig) -> torch.Tensor:
    x = torch.from_numpy(pixels).float()[None, None]
    if x.shape[-2:] != (cfg.input_size, cfg.input_size):
        x = torch.nn.functional.interpolate(
            x, size=(cfg.input_size, cfg.input_size), mode="bilinear", align_corners=False
        )
    if cfg.in_channels > 1:
        x = x.expand(-1, cfg.in_channels, -1, -1)
    return x.to(cfg.device)


def capture_block_outputs(
    model: torch.nn.Module, blocks, indices: tuple[int, ...], batch: torch.Tensor
) -> dict[int, np.ndarray]:
    """One forward pass; returns block index -> (N, C) or (C, h, w) array."""
    if max(indices) >= len(blocks):
        raise BridgeError(f"block index {max(indices)} out of range (depth {len(blocks)})")
    captured: dict[int, np.ndarray] = {}
    handles = []

    def hook_for(idx):
        def hook(_module, _inputs, output):
            out = output[0] if isinstance(output, (tuple, list)) else output
            captured[idx] = out.detach()[0].cpu().numpy()

        return hook

    try:
        for idx in indices:
            handles.append(blocks[idx].register_forward_hook(hook_for(idx)))
        with torch.no_grad():
            model(batch)
    finally:
        for handle in handles:
            handle.remove()
    missing = [idx for idx in indices if idx not in captured]
    if missing:
        raise BridgeError(f"hooks captured nothing for blocks {missing}")
    return captured


def dump_features(cfg: BridgeConfig) -> Path:
    """Run the encoder over all images and write MATF features + manifest.

    Returns the manifest path. Output files: features_layer_<k>.matf (one
    n x C_k matrix per configured block, rows in input order),
    manifest.json, and row_checksums.txt with one sha256 per (row, layer).
    """
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = load_encoder(cfg.model, cfg.device)
    blocks = find_blocks(model, cfg.block_attr)
    rows: dict[int, list[np.ndarray]] = {k: [] for k in cfg.blocks}
    for image_path in cfg.images:
        pixels = read_pgm(image_path)
        batch = _prepare_batch(pixels, cfg)
        captured = capture_block_outputs(model, blocks, cfg.blocks, batch)
        for k in cfg.blocks:
            grid = spatial_tokens_to_grid(captured[k], cfg.n_prefix_tokens)
            rows[k].append(pool_grid(grid).astype(np.float32))
    checksum_lines = []
    for k in cfg.blocks:
        matrix = np.stack(rows[k]).astype(np.float32)
        write_matf(out_dir / f"features_layer_{k}.matf", matrix)
        for i, image_path in enumerate(cfg.images):
            digest = hashlib.sha256(matrix[i].tobytes()).hexdigest()
            checksum_lines.append(f"{Path(image_path).stem} layer_{k} {digest}")
    manifest = {
        "name": cfg.dataset_name,
        "split": cfg.split,
        "layers": [int(k) for k in cfg.blocks],
        "samples": [
            {"id": Path(p).stem, "path": str(Path(p).resolve())} for p in cfg.images
        ],
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    (out_dir / "row_checksums.txt").write_text("\n".join(checksum_lines) + "\n")
    return manifest_path


def self_test(golden_path: str | Path) -> bool:
    """Byte-compare a freshly encoded known tensor against the golden fixture."""
    ours = matf_bytes(GOLDEN_SELF_TEST)
    golden = Path(golden_path).read_bytes()
    if ours == golden:
        return True
    offset = next(
        (i for i, (a, b) in enumerate(zip(ours, golden)) if a != b),
        min(len(ours), len(golden)),
    )
    raise BridgeError(
        f"self test failed: first differing byte at offset {offset} "
        f"(wrote {len(ours)} bytes, golden has {len(golden)})"
    )
