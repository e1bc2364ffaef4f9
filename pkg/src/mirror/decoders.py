"""The four independent decoders and teacher-forced likelihoods.

Decoder 1 models p(y|c,z,x), decoder 2 p(x|c,z), decoder 3 p(x|c,z,y),
decoder 4 p(y|c,z). All share one design (stacked LSTM + vocabulary
projection) with independent parameters. Conditioning enters twice: the
concatenated conditioning vectors seed the initial hidden state through an
affine map, and z is concatenated to the token embedding at every step.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params import DECODER_ARITY


@dataclass
class DecoderState:
    h: list
    c: list


def _check_conditioning(decoder_id, conditioning):
    if decoder_id not in DECODER_ARITY:
        raise ValueError(f"unknown decoder id {decoder_id}")
    if len(conditioning) != DECODER_ARITY[decoder_id]:
        raise ValueError(
            f"decoder {decoder_id} takes {DECODER_ARITY[decoder_id]} conditioning vectors, "
            f"got {len(conditioning)}"
        )


def init_decoder_state(decoder_id, conditioning, params, cfg) -> DecoderState:
    """Initial recurrent state: affine map of the concatenated conditioning."""
    _check_conditioning(decoder_id, conditioning)
    p = f"dec{decoder_id}"
    cond = ad.concat(list(conditioning), axis=-1)
    s = ad.add(ad.matmul(cond, params[f"{p}.init.w"]), params[f"{p}.init.b"])
    H = cfg.hidden_dim
    B = cond.shape[0]
    dtype = cond.dtype
    h = [ad.narrow(s, 1, layer * H, H) for layer in range(cfg.layers)]
    c = [Tensor(np.zeros((B, H), dtype=dtype)) for _ in range(cfg.layers)]
    return DecoderState(h, c)


def _advance(decoder_id, state, prev_ids, z, params, cfg):
    """One decode step; returns (logits Tensor, new DecoderState)."""
    prev_ids = np.asarray(prev_ids)
    if prev_ids.min() < 0 or prev_ids.max() >= cfg.vocab_size:
        raise ValueError("invalid token id")
    p = f"dec{decoder_id}"
    inp = ad.concat([ad.embedding(params["embedding"], prev_ids), z], axis=-1)
    h, c = [], []
    for layer in range(cfg.layers):
        pl = f"{p}.l{layer}"
        h_new, c_new = ad.lstm_cell(
            inp, state.h[layer], state.c[layer],
            params[f"{pl}.wx"], params[f"{pl}.wh"], params[f"{pl}.b"],
        )
        h.append(h_new)
        c.append(c_new)
        inp = h_new
    logits = ad.add(ad.matmul(h[-1], params[f"{p}.out.w"]), params[f"{p}.out.b"])
    return logits, DecoderState(h, c)


def decode_step(decoder_id, state, prev_ids, z, params, cfg):
    """Next-token distribution (rows sum to 1) and the advanced state."""
    logits, new_state = _advance(decoder_id, state, prev_ids, z, params, cfg)
    x = logits.data
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True), new_state


def step_log_probs(decoder_id, state, prev_ids, z, params, cfg):
    """Log version of decode_step; exact log-sum-exp, used by search strategies."""
    logits, new_state = _advance(decoder_id, state, prev_ids, z, params, cfg)
    x = logits.data
    m = x.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))
    return x - lse, new_state


def teacher_forced_log_prob(decoder_id, conditioning, target, mask, params, cfg):
    """Log-likelihood of a BOS...EOS framed target under teacher forcing.

    Returns (per-row total log prob as a (B,) Tensor, per-token log probs as
    a (B, T-1) array). BOS is input only; EOS is a prediction target; PAD
    positions contribute exactly zero.
    """
    _check_conditioning(decoder_id, conditioning)
    target = np.asarray(target)
    if target.ndim != 2 or target.shape[1] < 2:
        raise ValueError("target must be (B, T>=2) framed BOS...EOS")
    z = conditioning[1]
    state = init_decoder_state(decoder_id, conditioning, params, cfg)
    B, T = target.shape
    dtype = z.dtype
    total = Tensor(np.zeros(B, dtype=dtype))
    per_token = np.zeros((B, T - 1), dtype=np.float64)
    for t in range(T - 1):
        logits, state = _advance(decoder_id, state, target[:, t], z, params, cfg)
        losses = ad.softmax_xent(logits, target[:, t + 1])
        w = Tensor(mask[:, t + 1].astype(dtype))
        step_lp = ad.mul(ad.mul(losses, -1.0), w)
        total = ad.add(total, step_lp)
        per_token[:, t] = step_lp.data
    return total, per_token
