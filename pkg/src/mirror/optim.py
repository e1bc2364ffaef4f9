"""Adam with bias correction, plus global-norm gradient clipping."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def clip_global_norm(grads, max_norm=5.0):
    """Scale all gradients down so the joint L2 norm is at most max_norm.

    Returns the pre-clip norm; mutates the gradient arrays in place.
    """
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if max_norm is not None and norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update over named parameters, in place."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, tensor in params.items():
        g = grads[name]
        if g.shape != tensor.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter '{name}' {tensor.data.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter '{name}'")
        if name not in state.m:
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        g = np.ascontiguousarray(g, dtype=tensor.data.dtype)
        kernels.adam_update(
            tensor.data.reshape(-1), g.reshape(-1),
            state.m[name].reshape(-1), state.v[name].reshape(-1),
            state.lr, state.beta1, state.beta2, state.eps, bc1, bc2,
        )
    return params, state
