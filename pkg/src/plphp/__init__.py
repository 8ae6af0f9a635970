"""Per-layer per-head vision-token KV-cache pruning, at desk scale.

A small numpy decoder with per-head KV caches, the two-level pruning rules,
simplified FastV/VTW baselines, efficiency metrics, a binary trace format
with offline replay, and a CLI experiment runner.
"""

from .baselines import FastVConfig, VTWConfig, make_fastv_hook, make_vtw_hook
from .layout import IMAGE, TEXT, MultimodalSequence, Segment, build_sequence, vision_index_union
from .metrics import MetricsReport, account, latency_probe
from .model import (DecoderState, HeadKVCache, ModelConfig, ModelWeights,
                    decode_step, greedy_generate, init_model, prefill)
from .pruning import (LayerDecision, PruningConfig, allocate_retention, classify_layer,
                      make_hook, plphp_hook, prune_head_cache, select_retained,
                      vision_attention_score)
from .tensor_core import argtopk, make_rng, masked_row_softmax, matmul
from .trace import AttentionTrace, read_trace, replay, trace_from_run, write_trace

__version__ = "0.1.0"
