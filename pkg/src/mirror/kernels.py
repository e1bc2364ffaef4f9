"""Hot numeric kernels with numba and pure-numpy implementations.

Each kernel has a vectorized numpy version (``*_np``) and a loop version
compiled with @njit. The public names dispatch to the numba build unless
MIRROR_NUMBA=0 or numba is missing (see accel.py). Both paths are exercised
by the equivalence tests and timed against each other in
benchmarks/bench_kernels.py.

Gate layout for the LSTM kernels is [input, forget, cell, output] along the
last axis of the (B, 4H) pre-activation matrix.
"""

import math

import numpy as np

from .accel import NUMBA_ENABLED, njit


def _sigmoid_np(x):
    # piecewise form avoids exp overflow for large negative inputs
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# LSTM gate fusion


def lstm_gates_forward_np(gates, c_prev):
    """Elementwise half of an LSTM cell: pre-activations + old cell -> new state.

    Returns (h, c, i, f, g, o); the gate activations are kept for backward.
    """
    H = c_prev.shape[1]
    i = _sigmoid_np(gates[:, :H])
    f = _sigmoid_np(gates[:, H:2 * H])
    g = np.tanh(gates[:, 2 * H:3 * H])
    o = _sigmoid_np(gates[:, 3 * H:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, i, f, g, o


def _lstm_gates_forward_loop(gates, c_prev):
    B, H = c_prev.shape
    h = np.empty_like(c_prev)
    c = np.empty_like(c_prev)
    gi = np.empty_like(c_prev)
    gf = np.empty_like(c_prev)
    gg = np.empty_like(c_prev)
    go = np.empty_like(c_prev)
    for b in range(B):
        for k in range(H):
            xi = gates[b, k]
            xf = gates[b, H + k]
            xg = gates[b, 2 * H + k]
            xo = gates[b, 3 * H + k]
            if xi >= 0:
                vi = 1.0 / (1.0 + math.exp(-xi))
            else:
                e = math.exp(xi)
                vi = e / (1.0 + e)
            if xf >= 0:
                vf = 1.0 / (1.0 + math.exp(-xf))
            else:
                e = math.exp(xf)
                vf = e / (1.0 + e)
            vg = math.tanh(xg)
            if xo >= 0:
                vo = 1.0 / (1.0 + math.exp(-xo))
            else:
                e = math.exp(xo)
                vo = e / (1.0 + e)
            vc = vf * c_prev[b, k] + vi * vg
            gi[b, k] = vi
            gf[b, k] = vf
            gg[b, k] = vg
            go[b, k] = vo
            c[b, k] = vc
            h[b, k] = vo * math.tanh(vc)
    return h, c, gi, gf, gg, go


def lstm_gates_backward_np(dh, dc, i, f, g, o, c_prev, c):
    """Backward of lstm_gates_forward. Returns (dgates, dc_prev)."""
    tc = np.tanh(c)
    dc_total = dc + dh * o * (1.0 - tc * tc)
    dgates = np.empty((dh.shape[0], 4 * dh.shape[1]), dtype=dh.dtype)
    H = dh.shape[1]
    dgates[:, :H] = dc_total * g * i * (1.0 - i)
    dgates[:, H:2 * H] = dc_total * c_prev * f * (1.0 - f)
    dgates[:, 2 * H:3 * H] = dc_total * i * (1.0 - g * g)
    dgates[:, 3 * H:] = dh * tc * o * (1.0 - o)
    dc_prev = dc_total * f
    return dgates, dc_prev


def _lstm_gates_backward_loop(dh, dc, i, f, g, o, c_prev, c):
    B, H = dh.shape
    dgates = np.empty((B, 4 * H), dtype=dh.dtype)
    dc_prev = np.empty_like(dh)
    for b in range(B):
        for k in range(H):
            tc = math.tanh(c[b, k])
            dct = dc[b, k] + dh[b, k] * o[b, k] * (1.0 - tc * tc)
            dgates[b, k] = dct * g[b, k] * i[b, k] * (1.0 - i[b, k])
            dgates[b, H + k] = dct * c_prev[b, k] * f[b, k] * (1.0 - f[b, k])
            dgates[b, 2 * H + k] = dct * i[b, k] * (1.0 - g[b, k] * g[b, k])
            dgates[b, 3 * H + k] = dh[b, k] * tc * o[b, k] * (1.0 - o[b, k])
            dc_prev[b, k] = dct * f[b, k]
    return dgates, dc_prev


# ---------------------------------------------------------------------------
# Fused softmax + cross-entropy


def softmax_xent_forward_np(logits, targets):
    """Per-row -log softmax(logits)[target]. Returns (losses, probs)."""
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    s = e.sum(axis=1, keepdims=True)
    probs = e / s
    rows = np.arange(logits.shape[0])
    losses = (np.log(s[:, 0]) + m[:, 0]) - logits[rows, targets]
    return losses, probs


def _softmax_xent_forward_loop(logits, targets):
    B, V = logits.shape
    losses = np.empty(B, dtype=logits.dtype)
    probs = np.empty_like(logits)
    for b in range(B):
        m = logits[b, 0]
        for v in range(1, V):
            if logits[b, v] > m:
                m = logits[b, v]
        s = 0.0
        for v in range(V):
            e = math.exp(logits[b, v] - m)
            probs[b, v] = e
            s += e
        inv = 1.0 / s
        for v in range(V):
            probs[b, v] *= inv
        losses[b] = math.log(s) + m - logits[b, targets[b]]
    return losses, probs


def softmax_xent_backward_np(probs, targets, dlosses):
    dlogits = probs * dlosses[:, None]
    rows = np.arange(probs.shape[0])
    dlogits[rows, targets] -= dlosses
    return dlogits


def _softmax_xent_backward_loop(probs, targets, dlosses):
    B, V = probs.shape
    dlogits = np.empty_like(probs)
    for b in range(B):
        d = dlosses[b]
        for v in range(V):
            dlogits[b, v] = probs[b, v] * d
        dlogits[b, targets[b]] -= d
    return dlogits


# ---------------------------------------------------------------------------
# Embedding gradient scatter-add


def embedding_grad_np(ids, dout, dtable):
    np.add.at(dtable, ids, dout)


def _embedding_grad_loop(ids, dout, dtable):
    N, E = dout.shape
    for n in range(N):
        row = ids[n]
        for e in range(E):
            dtable[row, e] += dout[n, e]


# ---------------------------------------------------------------------------
# Adam update (in place, flat views)


def adam_update_np(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def _adam_update_loop(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    for k in range(p.shape[0]):
        mk = beta1 * m[k] + (1.0 - beta1) * g[k]
        vk = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k]
        m[k] = mk
        v[k] = vk
        p[k] -= lr * (mk / bc1) / (math.sqrt(vk / bc2) + eps)


if NUMBA_ENABLED:
    lstm_gates_forward = njit(cache=True)(_lstm_gates_forward_loop)
    lstm_gates_backward = njit(cache=True)(_lstm_gates_backward_loop)
    softmax_xent_forward = njit(cache=True)(_softmax_xent_forward_loop)
    softmax_xent_backward = njit(cache=True)(_softmax_xent_backward_loop)
    embedding_grad = njit(cache=True)(_embedding_grad_loop)
    adam_update = njit(cache=True)(_adam_update_loop)
else:
    lstm_gates_forward = lstm_gates_forward_np
    lstm_gates_backward = lstm_gates_backward_np
    softmax_xent_forward = softmax_xent_forward_np
    softmax_xent_backward = softmax_xent_backward_np
    embedding_grad = embedding_grad_np
    adam_update = adam_update_np
