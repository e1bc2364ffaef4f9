"""Utterance and context encoders: stacked LSTMs over token ids.

Both encoders share one architecture (and the embedding table) but keep
disjoint recurrent parameters. A sequence's summary is the top-layer hidden
state at its last unmasked position; padded steps carry state through
unchanged, so appending PAD never changes the summary.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def _run_lstm_stack(ids, mask, params, cfg, prefix, extra_input=None):
    """Run a stacked LSTM over (B, T) ids; returns final per-layer h, c lists."""
    B, T = ids.shape
    dtype = params["embedding"].dtype
    h = [Tensor(np.zeros((B, cfg.hidden_dim), dtype=dtype)) for _ in range(cfg.layers)]
    c = [Tensor(np.zeros((B, cfg.hidden_dim), dtype=dtype)) for _ in range(cfg.layers)]
    for t in range(T):
        inp = ad.embedding(params["embedding"], ids[:, t])
        if extra_input is not None:
            inp = ad.concat([inp, extra_input], axis=-1)
        col = mask[:, t]
        blend = col.min() < 1.0  # only pay for masking on ragged columns
        m = Tensor(col[:, None].astype(dtype)) if blend else None
        for layer in range(cfg.layers):
            p = f"{prefix}.l{layer}"
            h_new, c_new = ad.lstm_cell(
                inp, h[layer], c[layer],
                params[f"{p}.wx"], params[f"{p}.wh"], params[f"{p}.b"],
            )
            if blend:
                keep = ad.sub(1.0, m)
                h[layer] = ad.add(ad.mul(h_new, m), ad.mul(h[layer], keep))
                c[layer] = ad.add(ad.mul(c_new, m), ad.mul(c[layer], keep))
            else:
                h[layer], c[layer] = h_new, c_new
            inp = h[layer]
    return h, c


def encode_utterance(ids, mask, params, cfg) -> Tensor:
    """Summary vector (B, hidden) for a batch of token sequences."""
    if np.any(mask.sum(axis=1) == 0):
        raise ValueError("fully masked input to encode_utterance")
    h, _ = _run_lstm_stack(ids, mask, params, cfg, "enc_utt")
    return h[-1]


def encode_context(ids, mask, params, cfg) -> Tensor:
    """Summary vector for SEP-flattened context turns (see corpus.encode_batch)."""
    if np.any(mask.sum(axis=1) == 0):
        raise ValueError("empty context")
    h, _ = _run_lstm_stack(ids, mask, params, cfg, "enc_ctx")
    return h[-1]
