"""Reverse-mode autodiff over dense numpy arrays.

A Tape records every primitive application in execution order; replaying the
record backwards visits nodes in reverse topological order, accumulating
gradients additively into a per-tensor map. Training runs in float32,
verification (grad_check) in float64.

Primitives: matmul, add, sub, mul, tanh, sigmoid, exp, log, clip, summation,
concat, narrow (slicing), embedding lookup, fused softmax-cross-entropy, and
a fused LSTM cell. The elementwise halves of the LSTM cell, the softmax
cross-entropy, and the embedding backward run through kernels.py.
"""

import os

import numpy as np

from . import kernels

DEFAULT_DTYPE = np.float32

# Forward finite checks catch NaN/Inf at the op that produced it; gradient
# accumulation is always checked.
CHECK_FINITE = os.environ.get("MIRROR_CHECK_FINITE", "1") != "0"


class Tensor:
    """Dense real-valued array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(DEFAULT_DTYPE)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


class Node:
    __slots__ = ("name", "inputs", "outputs", "backward")

    def __init__(self, name, inputs, outputs, backward):
        self.name = name
        self.inputs = inputs
        self.outputs = outputs
        self.backward = backward


class Tape:
    """Ordered record of primitive applications plus the watched parameters."""

    def __init__(self):
        self.nodes = []
        self.watched = {}

    def watch(self, name, tensor):
        tensor.requires_grad = True
        self.watched[name] = tensor

    def watch_all(self, params):
        for name, tensor in params.items():
            self.watch(name, tensor)

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self


_TAPE_STACK: list[Tape] = []


def active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _record(name, inputs, outputs, backward):
    if CHECK_FINITE:
        for o in outputs:
            if not np.all(np.isfinite(o.data)):
                raise FloatingPointError(f"non-finite values produced by primitive '{name}'")
    tape = active_tape()
    if tape is None or not any(t.requires_grad for t in inputs):
        return
    for o in outputs:
        o.requires_grad = True
    tape.nodes.append(Node(name, inputs, outputs, backward))


def _coerce(x, like):
    """Wrap plain numbers/arrays as constant tensors matching `like`'s dtype."""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise and linear primitives


def add(a, b):
    a = a if isinstance(a, Tensor) else _coerce(a, b)
    b = _coerce(b, a)
    out = Tensor(a.data + b.data)

    def backward(gout, needs):
        g = gout[0]
        return (
            _unbroadcast(g, a.data.shape) if needs[0] else None,
            _unbroadcast(g, b.data.shape) if needs[1] else None,
        )

    _record("add", (a, b), (out,), backward)
    return out


def sub(a, b):
    a = a if isinstance(a, Tensor) else _coerce(a, b)
    b = _coerce(b, a)
    out = Tensor(a.data - b.data)

    def backward(gout, needs):
        g = gout[0]
        return (
            _unbroadcast(g, a.data.shape) if needs[0] else None,
            _unbroadcast(-g, b.data.shape) if needs[1] else None,
        )

    _record("sub", (a, b), (out,), backward)
    return out


def mul(a, b):
    a = a if isinstance(a, Tensor) else _coerce(a, b)
    b = _coerce(b, a)
    out = Tensor(a.data * b.data)

    def backward(gout, needs):
        g = gout[0]
        return (
            _unbroadcast(g * b.data, a.data.shape) if needs[0] else None,
            _unbroadcast(g * a.data, b.data.shape) if needs[1] else None,
        )

    _record("mul", (a, b), (out,), backward)
    return out


def matmul(a, b):
    out = Tensor(a.data @ b.data)

    def backward(gout, needs):
        g = gout[0]
        return (
            g @ b.data.T if needs[0] else None,
            a.data.T @ g if needs[1] else None,
        )

    _record("matmul", (a, b), (out,), backward)
    return out


def tanh(x):
    out = Tensor(np.tanh(x.data))

    def backward(gout, needs):
        return (gout[0] * (1.0 - out.data * out.data),)

    _record("tanh", (x,), (out,), backward)
    return out


def sigmoid(x):
    out = Tensor(kernels._sigmoid_np(x.data))

    def backward(gout, needs):
        return (gout[0] * out.data * (1.0 - out.data),)

    _record("sigmoid", (x,), (out,), backward)
    return out


def exp(x):
    out = Tensor(np.exp(x.data))

    def backward(gout, needs):
        return (gout[0] * out.data,)

    _record("exp", (x,), (out,), backward)
    return out


def log(x):
    out = Tensor(np.log(x.data))

    def backward(gout, needs):
        return (gout[0] / x.data,)

    _record("log", (x,), (out,), backward)
    return out


def clip(x, lo, hi):
    """Clamp values to [lo, hi]; gradient passes through the interior only."""
    out = Tensor(np.clip(x.data, lo, hi))

    def backward(gout, needs):
        inside = ((x.data > lo) & (x.data < hi)).astype(x.data.dtype)
        return (gout[0] * inside,)

    _record("clip", (x,), (out,), backward)
    return out


def tsum(x, axis=None, keepdims=False):
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def backward(gout, needs):
        g = gout[0]
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape).astype(x.data.dtype, copy=False),)

    _record("sum", (x,), (out,), backward)
    return out


def concat(tensors, axis=-1):
    tensors = tuple(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(gout, needs):
        g = gout[0]
        splits = np.cumsum(sizes)[:-1]
        parts = np.split(g, splits, axis=axis)
        return tuple(p if need else None for p, need in zip(parts, needs))

    _record("concat", tensors, (out,), backward)
    return out


def narrow(x, axis, start, length):
    """Contiguous slice [start, start+length) along `axis`."""
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = Tensor(x.data[index])

    def backward(gout, needs):
        g = np.zeros_like(x.data)
        g[index] = gout[0]
        return (g,)

    _record("narrow", (x,), (out,), backward)
    return out


# ---------------------------------------------------------------------------
# Lookup and fused primitives


def embedding(table, ids):
    """Row gather: table (V, E), ids int array (B,) -> (B, E)."""
    ids = np.asarray(ids)
    out = Tensor(table.data[ids])

    def backward(gout, needs):
        dtable = np.zeros_like(table.data)
        kernels.embedding_grad(ids.astype(np.int64), np.ascontiguousarray(gout[0]), dtable)
        return (dtable,)

    _record("embedding", (table,), (out,), backward)
    return out


def softmax_xent(logits, targets):
    """Fused softmax + cross-entropy: (B, V) logits, (B,) int targets -> (B,) losses.

    Log-sum-exp with max subtraction; the naive softmax->log composition
    overflows once logits pass ~700.
    """
    targets = np.asarray(targets, dtype=np.int64)
    losses, probs = kernels.softmax_xent_forward(np.ascontiguousarray(logits.data), targets)
    out = Tensor(losses)

    def backward(gout, needs):
        return (kernels.softmax_xent_backward(probs, targets, np.ascontiguousarray(gout[0])),)

    _record("softmax_xent", (logits,), (out,), backward)
    return out


def lstm_cell(x, h_prev, c_prev, wx, wh, b):
    """One fused LSTM step: returns (h, c).

    The two matmuls run through BLAS; the gate elementwise math runs through
    the kernel pair in kernels.py.
    """
    gates = x.data @ wx.data + h_prev.data @ wh.data + b.data
    h, c, gi, gf, gg, go = kernels.lstm_gates_forward(
        np.ascontiguousarray(gates), np.ascontiguousarray(c_prev.data)
    )
    out_h = Tensor(h)
    out_c = Tensor(c)

    def backward(gout, needs):
        dh, dc = gout
        if dh is None:
            dh = np.zeros_like(h)
        if dc is None:
            dc = np.zeros_like(c)
        dgates, dc_prev = kernels.lstm_gates_backward(
            np.ascontiguousarray(dh), np.ascontiguousarray(dc),
            gi, gf, gg, go, np.ascontiguousarray(c_prev.data), c,
        )
        return (
            dgates @ wx.data.T if needs[0] else None,
            dgates @ wh.data.T if needs[1] else None,
            dc_prev if needs[2] else None,
            x.data.T @ dgates if needs[3] else None,
            h_prev.data.T @ dgates if needs[4] else None,
            dgates.sum(axis=0) if needs[5] else None,
        )

    _record("lstm_cell", (x, h_prev, c_prev, wx, wh, b), (out_h, out_c), backward)
    return out_h, out_c


# ---------------------------------------------------------------------------
# Backward pass and the finite-difference harness


def backward_gradients(loss, tape):
    """Gradient of a scalar loss w.r.t. every watched parameter.

    Parameters the loss never touched get zero gradients.
    """
    if loss.data.shape != ():
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
    for node in reversed(tape.nodes):
        gout = tuple(grads.get(id(o)) for o in node.outputs)
        if all(g is None for g in gout):
            continue
        needs = tuple(t.requires_grad for t in node.inputs)
        gin = node.backward(gout, needs)
        for t, g in zip(node.inputs, gin):
            if g is None or not t.requires_grad:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient while accumulating through '{node.name}'")
            acc = grads.get(id(t))
            grads[id(t)] = g if acc is None else acc + g
    return {
        name: grads.get(id(t), np.zeros_like(t.data))
        for name, t in tape.watched.items()
    }


def grad_check(function, point, step=1e-5, mode="float64", max_coords_per_param=None, rng=None):
    """Max relative error between analytic and central-difference gradients.

    `function` maps a dict of named Tensors to a scalar Tensor; `point` is a
    dict of named numpy arrays. When a parameter has more coordinates than
    `max_coords_per_param`, half the probes go to the largest-|gradient|
    coordinates and half to random ones (every parameter is always touched;
    central differences cannot resolve coordinates whose gradient sits below
    the float rounding floor of the loss, so probing the load-bearing ones
    keeps the check informative). Relative error per coordinate is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    dtype = np.dtype(mode)
    params = {name: Tensor(v.astype(dtype), requires_grad=True) for name, v in point.items()}
    with Tape() as tape:
        tape.watch_all(params)
        loss = function(params)
    if loss.data.shape != ():
        raise ValueError("grad_check requires a scalar-valued function")
    analytic = backward_gradients(loss, tape)

    def evaluate():
        out = function(params)
        if not np.isfinite(out.data):
            raise FloatingPointError("non-finite function value during grad_check")
        return float(out.data)

    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for name, tensor in params.items():
        flat = tensor.data.reshape(-1)
        n = flat.shape[0]
        a_flat = analytic[name].reshape(-1)
        if max_coords_per_param is not None and n > max_coords_per_param:
            n_top = max_coords_per_param // 2
            top = np.argsort(np.abs(a_flat))[::-1][:n_top]
            rest = rng.choice(n, size=max_coords_per_param - n_top, replace=False)
            coords = np.unique(np.concatenate([top, rest]))
        else:
            coords = range(n)
        for k in coords:
            orig = flat[k]
            flat[k] = orig + step
            f_plus = evaluate()
            flat[k] = orig - step
            f_minus = evaluate()
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(a_flat[k])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            if err > worst:
                worst = err
    return worst
