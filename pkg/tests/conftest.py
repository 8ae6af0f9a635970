import numpy as np
import pytest

from plphp import IMAGE, TEXT, ModelConfig, Segment, build_sequence, init_model


def random_segments(rng, max_segments=4, max_len=6):
    """Random interleaved layout ending in a text segment."""
    segs = []
    for _ in range(rng.integers(0, max_segments)):
        kind = TEXT if rng.integers(0, 2) == 0 else IMAGE
        segs.append(Segment(kind, int(rng.integers(1, max_len + 1))))
    segs.append(Segment(TEXT, int(rng.integers(1, max_len + 1))))
    return segs


def small_model(rng, min_layers=4, max_layers=6):
    n = int(rng.integers(min_layers, max_layers + 1))
    h = int(rng.integers(1, 4))
    dk = int(rng.integers(2, 5))
    vocab = int(rng.integers(16, 65))
    cfg = ModelConfig(num_layers=n, num_heads=h, model_dim=h * dk, head_dim=dk,
                      vocab_size=vocab, max_positions=128)
    weights = init_model(cfg, seed=int(rng.integers(0, 2**31)))
    return cfg, weights


def random_softmax_rows(rng, heads, length):
    rows = rng.random((heads, length)) + 1e-3
    return rows / rows.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))
