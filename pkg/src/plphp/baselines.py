"""Simplified FastV and VTW pruning baselines.

Both are semantic re-implementations of the baselines' one-line behavior,
not ports of the original codebases. FastV ranks vision tokens once at a
shallow layer K by head-averaged last-row attention, drops the bottom R
fraction, and applies the same surviving set to every head from layer K
onward. VTW keeps all vision tokens below layer K and drops every one of
them from layer K on. Neither ever prunes text positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layout import MultimodalSequence, vision_index_union
from .model import HeadKVCache
from .pruning import prune_head_cache
from .tensor_core import argtopk

__all__ = ["FastVConfig", "VTWConfig", "fastv_surviving_set", "fastv_hook",
           "vtw_hook", "make_fastv_hook", "make_vtw_hook"]


@dataclass(frozen=True)
class FastVConfig:
    k_layer: int
    prune_ratio: float

    def __post_init__(self):
        if self.k_layer < 1:
            raise ValueError("k_layer must be >= 1")
        if not 0.0 <= self.prune_ratio <= 1.0:
            raise ValueError(f"prune_ratio must be in [0, 1], got {self.prune_ratio}")


@dataclass(frozen=True)
class VTWConfig:
    k_layer: int

    def __post_init__(self):
        if self.k_layer < 1:
            raise ValueError("k_layer must be >= 1")


def fastv_surviving_set(attn: list[np.ndarray], seq: MultimodalSequence,
                        cfg: FastVConfig) -> np.ndarray:
    """Vision positions surviving FastV's one-shot ranking at layer K."""
    vision = vision_index_union(seq)
    if vision.size == 0:
        return vision
    rows = np.stack([np.asarray(a, dtype=np.float64)[-1] for a in attn])
    mean_row = np.mean(rows, axis=0)
    keep = vision.size - int(np.floor(cfg.prune_ratio * vision.size))
    local = argtopk(mean_row[vision], keep)
    return vision[local]


def fastv_hook(layer: int, attn: list[np.ndarray], caches: list[HeadKVCache],
               seq: MultimodalSequence, cfg: FastVConfig,
               surviving: np.ndarray | None) -> tuple[list[HeadKVCache], np.ndarray | None]:
    """Apply FastV at one layer; returns (caches, surviving set so far).

    ``surviving`` threads the set recorded at layer K through later calls.
    """
    if layer < cfg.k_layer:
        return caches, surviving
    if layer == cfg.k_layer:
        surviving = fastv_surviving_set(attn, seq, cfg)
    if surviving is None:
        raise ValueError(f"layer {layer} reached without a surviving set from layer {cfg.k_layer}")
    text = seq.text_union
    return [prune_head_cache(c, text, surviving) for c in caches], surviving


def vtw_hook(layer: int, caches: list[HeadKVCache], seq: MultimodalSequence,
             cfg: VTWConfig) -> list[HeadKVCache]:
    """Text-only caches from layer K onward; untouched below."""
    if layer < cfg.k_layer:
        return caches
    text = seq.text_union
    empty = np.empty(0, dtype=np.int64)
    return [prune_head_cache(c, text, empty) for c in caches]


def make_fastv_hook(cfg: FastVConfig, num_layers: int):
    """Adapter with the generic prefill-hook signature; owns the session state."""
    if cfg.k_layer > num_layers:
        raise ValueError(f"k_layer {cfg.k_layer} exceeds model depth {num_layers}")
    state = {"surviving": None}

    def hook(layer, attn, caches, seq):
        caches, state["surviving"] = fastv_hook(layer, attn, caches, seq, cfg, state["surviving"])
        return caches, None

    return hook


def make_vtw_hook(cfg: VTWConfig, num_layers: int):
    if cfg.k_layer > num_layers:
        raise ValueError(f"k_layer {cfg.k_layer} exceeds model depth {num_layers}")

    def hook(layer, attn, caches, seq):
        return vtw_hook(layer, caches, seq, cfg), None

    return hook
