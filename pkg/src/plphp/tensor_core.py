"""Minimal dense numeric kernel.

All public operations work on float64 numpy arrays and are deterministic:
``matmul`` accumulates over the inner dimension in a fixed sequential order,
so results are bit-reproducible across runs and match a naive triple-loop
product exactly.

The seeded generator is numpy's PCG64 (a documented 64-bit PRNG), so any
synthetic experiment replays identically on every platform.
"""

from __future__ import annotations

import numpy as np

__all__ = ["matmul", "masked_row_softmax", "argtopk", "make_rng"]


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator (PCG64) for the given seed."""
    return np.random.Generator(np.random.PCG64(seed))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with a mandated summation order.

    The result is accumulated one inner-dimension slice at a time
    (``c += a[:, k] * b[k, :]`` for k = 0, 1, ...), which is bitwise
    identical to a naive triple loop. BLAS-backed ``a @ b`` reorders the
    sum and is deliberately not used.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    tmp = np.empty_like(out)
    for k in range(a.shape[1]):
        np.multiply(a[:, k : k + 1], b[k : k + 1, :], out=tmp)
        out += tmp
    return out


def masked_row_softmax(scores: np.ndarray, causal: bool = False) -> np.ndarray:
    """Row-wise softmax with optional causal (lower-triangular) masking.

    Each row is normalized over its unmasked prefix using max-subtraction;
    masked entries come out exactly 0. Under the causal mask row ``i`` may
    attend to columns ``0..i`` only, so row 0 is always ``[1, 0, ...]``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError(f"expected a 2-D score matrix, got {scores.ndim}-D")
    if causal and scores.shape[0] != scores.shape[1]:
        raise ValueError(f"causal softmax needs a square matrix, got {scores.shape}")
    if causal:
        allowed = np.tril(np.ones(scores.shape, dtype=bool))
    else:
        allowed = np.ones(scores.shape, dtype=bool)
    neg = np.where(allowed, scores, -np.inf)
    row_max = np.max(neg, axis=1, keepdims=True)
    exp = np.where(allowed, np.exp(neg - row_max), 0.0)
    return exp / np.sum(exp, axis=1, keepdims=True)


def argtopk(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest values, ties broken by smaller index.

    Returned indices are sorted ascending.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError(f"expected a 1-D sequence, got {values.ndim}-D")
    if not 0 <= k <= values.shape[0]:
        raise ValueError(f"k={k} out of range for length {values.shape[0]}")
    # stable sort on negated values keeps original order among ties,
    # which is exactly smallest-index-first
    order = np.argsort(-values, kind="stable")[:k]
    return np.sort(order)
