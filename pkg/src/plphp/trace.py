"""Versioned binary attention-trace files and offline replay.

A trace stores, for every layer and head, the last attention row of the
prefill pass (the only row the pruning rules read). The on-disk format is
fixed and little-endian so golden files round-trip bit-exactly across
platforms:

    magic "PLPT" | u32 version=1 | u32 N | u32 H | u32 S
    u32 segment_count | (u32 kind, u32 length) per segment   kind: 0=text, 1=image
    N * H * S float64 rows in (layer, head, position) order

Loading validates the header, the segment lengths against S, and that each
stored row sums to 1 within 1e-6.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .layout import IMAGE, TEXT, MultimodalSequence, Segment, build_sequence, vision_index_union
from .metrics import MetricsReport
from .pruning import LayerDecision, PruningConfig, decide_layer

MAGIC = b"PLPT"
VERSION = 1
_KIND_CODE = {TEXT: 0, IMAGE: 1}
_CODE_KIND = {0: TEXT, 1: IMAGE}

__all__ = ["MAGIC", "VERSION", "TraceFormatError", "AttentionTrace",
           "write_trace", "read_trace", "trace_from_run", "replay"]


class TraceFormatError(ValueError):
    """Raised when a trace file is malformed or fails validation."""


@dataclass
class AttentionTrace:
    num_layers: int
    num_heads: int
    seq_len: int
    segments: tuple[Segment, ...]
    rows: np.ndarray  # N x H x S float64

    def validate(self) -> None:
        n, h, s = self.num_layers, self.num_heads, self.seq_len
        if self.rows.shape != (n, h, s):
            raise TraceFormatError(f"row block shape {self.rows.shape} != ({n}, {h}, {s})")
        if sum(seg.length for seg in self.segments) != s:
            raise TraceFormatError("segment lengths do not sum to the sequence length")
        if not np.all(np.isfinite(self.rows)):
            raise TraceFormatError("trace contains non-finite values")
        sums = self.rows.sum(axis=2)
        bad = np.abs(sums - 1.0) > 1e-6
        if bad.any():
            l, h_idx = np.argwhere(bad)[0]
            raise TraceFormatError(
                f"attention row (layer {l + 1}, head {h_idx + 1}) sums to {sums[l, h_idx]}, not 1")


def write_trace(path, trace: AttentionTrace) -> None:
    trace.validate()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIII", VERSION, trace.num_layers, trace.num_heads, trace.seq_len))
        f.write(struct.pack("<I", len(trace.segments)))
        for seg in trace.segments:
            f.write(struct.pack("<II", _KIND_CODE[seg.kind], seg.length))
        f.write(np.ascontiguousarray(trace.rows, dtype="<f8").tobytes())


def _read_exact(f, size: int) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise TraceFormatError(f"truncated trace file: wanted {size} bytes, got {len(data)}")
    return data


def read_trace(path) -> AttentionTrace:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != MAGIC:
            raise TraceFormatError("bad magic bytes (not a PLPT trace)")
        version, n, h, s = struct.unpack("<IIII", _read_exact(f, 16))
        if version != VERSION:
            raise TraceFormatError(f"unsupported trace version {version}")
        (seg_count,) = struct.unpack("<I", _read_exact(f, 4))
        segments = []
        for _ in range(seg_count):
            kind_code, length = struct.unpack("<II", _read_exact(f, 8))
            if kind_code not in _CODE_KIND:
                raise TraceFormatError(f"unknown segment kind code {kind_code}")
            segments.append(Segment(_CODE_KIND[kind_code], length))
        raw = _read_exact(f, n * h * s * 8)
        if f.read(1):
            raise TraceFormatError("trailing bytes after trace payload")
    rows = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(n, h, s)
    trace = AttentionTrace(num_layers=n, num_heads=h, seq_len=s,
                           segments=tuple(segments), rows=rows)
    trace.validate()
    return trace


def trace_from_run(attn_last_rows: np.ndarray, seq: MultimodalSequence) -> AttentionTrace:
    """Package the rows a traced prefill recorded into a trace object."""
    n, h, s = attn_last_rows.shape
    return AttentionTrace(num_layers=n, num_heads=h, seq_len=s,
                          segments=seq.segments, rows=np.asarray(attn_last_rows, dtype=np.float64))


def replay(trace: AttentionTrace, cfg: PruningConfig) -> tuple[list[LayerDecision], MetricsReport]:
    """Recompute every pruning decision offline, plus RR/KV accounting.

    Runs the same decision path a live prefill hook uses, so replaying a
    recorded run reproduces its decisions exactly. No model execution.
    """
    trace.validate()
    seq = build_sequence(trace.segments, seed=0)
    n, h, s = trace.num_layers, trace.num_heads, trace.seq_len
    v = vision_index_union(seq).size
    t = s - v

    decisions = [decide_layer(trace.rows[l], seq, cfg, l + 1, n) for l in range(n)]

    kept_rows = 0
    kept_vision = 0
    per_layer: list[dict] = []
    for dec in decisions:
        for head in range(h):
            if dec.exempt:
                rows_here, vision_here = s, v
            else:
                vision_here = dec.head_kept_vision(head)
                rows_here = t + vision_here
            kept_rows += rows_here
            kept_vision += vision_here
            per_layer.append({
                "layer": dec.layer,
                "gamma": dec.gamma,
                "class": dec.layer_class,
                "retention": dec.retention,
                "head": head + 1,
                "kept_rows": rows_here,
            })

    rr = kept_vision / (n * h * v) if v > 0 else 1.0
    kv = kept_rows / (n * h * s)
    report = MetricsReport(retention_rate=rr, kv_fraction=kv,
                           decode_latency_ms=None, per_layer=per_layer)
    return decisions, report
