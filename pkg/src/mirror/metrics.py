"""Automatic diagnostics: teacher-forced perplexity and distinct-n."""

import math

import numpy as np

from .corpus import encode_batch
from .decoders import teacher_forced_log_prob
from .encoders import encode_context, encode_utterance
from .latent import prior_params


def perplexity(triples, params, cfg, vocab, direction="forward", batch_size=32, max_len=50):
    """exp(-sum log p / sum tokens) with z = prior mean.

    direction "forward" scores p(y | c, z, x) with decoder 1; "backward"
    scores p(x | c, z, y) with decoder 3. Token counts include the EOS
    prediction at each sequence end.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction '{direction}'")
    if not triples:
        raise ValueError("empty test set")
    if len(vocab) != cfg.vocab_size:
        raise ValueError(
            f"vocabulary size {len(vocab)} does not match checkpoint ({cfg.vocab_size})"
        )
    total_lp = 0.0
    total_tokens = 0
    for start in range(0, len(triples), batch_size):
        batch = encode_batch(triples[start:start + batch_size], vocab, max_len)
        c_vec = encode_context(batch.c, batch.c_mask, params, cfg)
        z = prior_params(c_vec, params).mu
        if direction == "forward":
            x_vec = encode_utterance(batch.x, batch.x_mask, params, cfg)
            total, _ = teacher_forced_log_prob(1, [c_vec, z, x_vec],
                                               batch.y_tgt, batch.y_tgt_mask, params, cfg)
            total_tokens += int(batch.y_tgt_mask[:, 1:].sum())
        else:
            y_vec = encode_utterance(batch.y, batch.y_mask, params, cfg)
            total, _ = teacher_forced_log_prob(3, [c_vec, z, y_vec],
                                               batch.x_tgt, batch.x_tgt_mask, params, cfg)
            total_tokens += int(batch.x_tgt_mask[:, 1:].sum())
        total_lp += float(np.sum(total.data.astype(np.float64)))
    return math.exp(-total_lp / total_tokens)


def distinct_n(responses, n):
    """Unique n-grams / total n-grams across all responses; 0 when empty."""
    if n < 1:
        raise ValueError("n must be >= 1")
    seen = set()
    total = 0
    for tokens in responses:
        for i in range(len(tokens) - n + 1):
            seen.add(tuple(tokens[i:i + n]))
            total += 1
    return len(seen) / total if total else 0.0
