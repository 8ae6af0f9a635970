"""Independent brute-force oracles used across the test suite.

Everything here is deliberately written the dumb way (explicit loops,
sorting, set arithmetic, BLAS matmul) and never calls into the code paths
it checks.
"""

from __future__ import annotations

import numpy as np


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, inner = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for k in range(inner):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def naive_softmax(scores: np.ndarray, causal: bool = False) -> np.ndarray:
    out = np.zeros_like(scores, dtype=float)
    for i in range(scores.shape[0]):
        limit = i + 1 if causal else scores.shape[1]
        exps = [float(np.exp(scores[i, j])) for j in range(limit)]
        total = sum(exps)
        for j in range(limit):
            out[i, j] = exps[j] / total
    return out


def sort_topk(values, k: int) -> list[int]:
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    return sorted(order[:k])


def loop_gamma(rows: np.ndarray, vision: np.ndarray) -> float:
    h = rows.shape[0]
    total = 0.0
    for k in vision:
        for head in range(h):
            total += rows[head, k] / h
    return total


def sort_select(head_row: np.ndarray, image_indices: np.ndarray,
                retention: float) -> tuple[list[int], int]:
    k = int(np.floor(retention * len(image_indices)))
    if retention > 0:
        k = max(1, k)
    ranked = sorted(image_indices.tolist(), key=lambda i: (-head_row[i], i))
    return sorted(ranked[:k]), k


def set_keep(positions, text_union, retained_vision) -> list[int]:
    keep = set(text_union.tolist()) | set(np.asarray(retained_vision).tolist())
    return [p for p in positions.tolist() if p in keep]


def recount_metrics(state, seq) -> tuple[float, float]:
    """Brute-force RR/KV recount over every head cache."""
    s = seq.total_length
    vision = set()
    for run in seq.image_indices:
        vision |= set(run.tolist())
    n = len(state.caches)
    h = len(state.caches[0])
    rows = 0
    vision_rows = 0
    for layer in state.caches:
        for cache in layer:
            for pos in cache.positions.tolist():
                if pos < s:
                    rows += 1
                    if pos in vision:
                        vision_rows += 1
    rr = vision_rows / (n * h * len(vision)) if vision else 1.0
    return rr, rows / (n * h * s)


def _rms(x):
    return x / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + 1e-6)


def cache_free_decode_logits(weights, config, seq, decode_tokens,
                             retained_positions) -> np.ndarray:
    """Full-attention recomputation of every decode step, no KV cache.

    ``retained_positions[l][h]`` holds the prefill positions head (l, h)
    kept after pruning. Prompt positions attend causally over the full
    prompt (pruning happens after prefill); decode position S+t attends to
    that head's retained prefill rows plus decode rows S..S+t. Returns the
    logits row for every decode input token.
    """
    s = seq.total_length
    t_steps = len(decode_tokens)
    total = s + t_steps
    ids = np.concatenate([seq.token_ids, np.asarray(decode_tokens, dtype=np.int64)])
    x = weights.token_embedding[ids] + weights.position_embedding[:total]
    n, h = config.num_layers, config.num_heads
    scale = 1.0 / np.sqrt(config.head_dim)

    for l in range(n):
        h_in = _rms(x)
        outs = []
        for head in range(h):
            q = h_in @ weights.w_q[l, head]
            k = h_in @ weights.w_k[l, head]
            v = h_in @ weights.w_v[l, head]
            allowed = np.zeros((total, total), dtype=bool)
            for i in range(s):
                allowed[i, : i + 1] = True
            for t in range(t_steps):
                i = s + t
                allowed[i, retained_positions[l][head]] = True
                allowed[i, s : i + 1] = True
            scores = np.where(allowed, (q @ k.T) * scale, -np.inf)
            exp = np.exp(scores - scores.max(axis=1, keepdims=True))
            attn = np.where(allowed, exp, 0.0)
            attn = attn / attn.sum(axis=1, keepdims=True)
            outs.append(attn @ v)
        x = x + np.concatenate(outs, axis=1) @ weights.w_o[l]
        x = x + np.maximum(_rms(x) @ weights.w_up[l], 0.0) @ weights.w_down[l]

    return (_rms(x) @ weights.unembedding)[s:]
