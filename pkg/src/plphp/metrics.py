"""Efficiency accounting and reporting.

Definitions (prefill-resident rows only; decode-appended rows are excluded):

    RR = sum over layers l, heads h of retained vision rows(l, h) / (N * H * V)
    KV = sum over layers l, heads h of cache length(l, h)        / (N * H * S)

where V is the number of vision positions and S the prompt length. Exempt
layers are included, so KV is a whole-model fraction. Decode latency is
wall clock per generated token, median over steps.

Reports serialize to JSON, and to CSV with the fixed column schema
``layer,gamma,class,retention,head,kept_rows``.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .layout import MultimodalSequence, vision_index_union
from .model import DecoderState

CSV_COLUMNS = ["layer", "gamma", "class", "retention", "head", "kept_rows"]

__all__ = ["CSV_COLUMNS", "MetricsReport", "account", "latency_probe",
           "report_to_json", "write_report_csv"]


@dataclass
class MetricsReport:
    retention_rate: float
    kv_fraction: float
    decode_latency_ms: float | None
    per_layer: list[dict]  # one entry per (layer, head): the CSV row contents


def account(state: DecoderState, seq: MultimodalSequence) -> MetricsReport:
    """Recount every head cache against the prompt layout."""
    s = seq.total_length
    vision = vision_index_union(seq)
    v = vision.size
    n = len(state.caches)
    h = len(state.caches[0])
    decisions = state.per_layer_decisions

    kept_rows_total = 0
    kept_vision_total = 0
    per_layer: list[dict] = []
    for l in range(n):
        dec = decisions[l] if decisions is not None else None
        for head in range(h):
            cache = state.caches[l][head]
            resident = cache.positions[cache.positions < s]
            kept_rows_total += resident.size
            kept_vision_total += int(np.isin(resident, vision).sum())
            per_layer.append({
                "layer": l + 1,
                "gamma": getattr(dec, "gamma", None),
                "class": getattr(dec, "layer_class", None),
                "retention": getattr(dec, "retention", None),
                "head": head + 1,
                "kept_rows": int(resident.size),
            })

    rr = kept_vision_total / (n * h * v) if v > 0 else 1.0
    kv = kept_rows_total / (n * h * s)
    return MetricsReport(retention_rate=rr, kv_fraction=kv,
                         decode_latency_ms=None, per_layer=per_layer)


def latency_probe(step_fn: Callable[[], None], steps: int) -> float:
    """Median wall-clock milliseconds per call of ``step_fn``.

    Needs at least 16 steps for the median to mean anything; repeated runs
    on one machine agree only within measurement noise (about 20%).
    """
    if steps < 16:
        raise ValueError(f"latency probe needs >= 16 steps, got {steps}")
    samples = np.empty(steps)
    for i in range(steps):
        t0 = time.perf_counter()
        step_fn()
        samples[i] = time.perf_counter() - t0
    return float(np.median(samples) * 1000.0)


def report_to_json(report: MetricsReport) -> str:
    """Deterministic JSON rendering (sorted keys, no timestamps)."""
    payload = {
        "retention_rate": report.retention_rate,
        "kv_fraction": report.kv_fraction,
        "decode_latency_ms": report.decode_latency_ms,
        "per_layer": report.per_layer,
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def write_report_csv(path, report: MetricsReport) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in report.per_layer:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in CSV_COLUMNS})
