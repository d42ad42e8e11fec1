"""Thin feature-dump bridge: ViT-family encoder blocks -> pooled MATF matrices."""

from .extract import (
    BridgeConfig,
    BridgeError,
    capture_block_outputs,
    dump_features,
    find_blocks,
    pool_grid,
    self_test,
    spatial_tokens_to_grid,
)
from .matf import read_matf, write_matf

__version__ = "0.1.0"
