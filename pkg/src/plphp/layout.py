"""Interleaved text/image token sequence layout.

A multimodal prompt is a list of segments, each either text or image. The
flat sequence assigns every segment a contiguous run of positions; the
per-segment index sets are what every pruning rule operates on. Token ids
are synthetic integers: nothing downstream ever inspects token content,
only positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import make_rng

TEXT = "text"
IMAGE = "image"

__all__ = ["TEXT", "IMAGE", "Segment", "MultimodalSequence", "build_sequence", "vision_index_union"]


@dataclass(frozen=True)
class Segment:
    kind: str  # TEXT or IMAGE
    length: int

    def __post_init__(self):
        if self.kind not in (TEXT, IMAGE):
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.length < 1:
            raise ValueError(f"segment length must be >= 1, got {self.length}")


@dataclass(frozen=True)
class MultimodalSequence:
    segments: tuple[Segment, ...]
    total_length: int
    text_indices: tuple[np.ndarray, ...]   # one ascending run per text segment
    image_indices: tuple[np.ndarray, ...]  # one ascending run per image segment
    token_ids: np.ndarray

    @property
    def text_union(self) -> np.ndarray:
        if not self.text_indices:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(self.text_indices)


def build_sequence(segments: list[Segment] | tuple[Segment, ...], seed: int,
                   vocab_size: int = 1024) -> MultimodalSequence:
    """Lay out segments into one flat sequence with synthetic token ids.

    The final segment must be text: the last prefill position is the query
    row every pruning decision reads, and it must be a text token.
    """
    segments = tuple(segments)
    if not segments:
        raise ValueError("at least one segment required")
    if segments[-1].kind != TEXT:
        raise ValueError("final segment must be text")
    text_runs: list[np.ndarray] = []
    image_runs: list[np.ndarray] = []
    pos = 0
    for seg in segments:
        run = np.arange(pos, pos + seg.length, dtype=np.int64)
        (text_runs if seg.kind == TEXT else image_runs).append(run)
        pos += seg.length
    token_ids = make_rng(seed).integers(0, vocab_size, size=pos, dtype=np.int64)
    return MultimodalSequence(
        segments=segments,
        total_length=pos,
        text_indices=tuple(text_runs),
        image_indices=tuple(image_runs),
        token_ids=token_ids,
    )


def vision_index_union(seq: MultimodalSequence) -> np.ndarray:
    """Union of all image index sets, ascending."""
    if not seq.image_indices:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(seq.image_indices)
