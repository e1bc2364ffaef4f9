"""Time the numba kernels against the numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [--size small|desk|paper]

First numba call includes JIT compilation; each kernel is warmed before
timing. MIRROR_NUMBA=0 would make the dispatched names the numpy versions,
so this script imports both variants explicitly.
"""

import argparse
import time

import numpy as np

from mirror import kernels
from mirror.accel import NUMBA_ENABLED

SIZES = {
    "small": dict(batch=8, hidden=64, vocab=1000, embed=32),
    "desk": dict(batch=32, hidden=128, vocab=20005, embed=64),
    "paper": dict(batch=64, hidden=1000, vocab=20005, embed=200),
}


def timeit(fn, repeat=50):
    fn()  # warm (JIT compile / cache touch)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--size", choices=SIZES, default="desk")
    parser.add_argument("--repeat", type=int, default=50)
    args = parser.parse_args()
    dims = SIZES[args.size]
    B, H, V, E = dims["batch"], dims["hidden"], dims["vocab"], dims["embed"]
    rng = np.random.default_rng(0)

    if not NUMBA_ENABLED:
        print("numba disabled (MIRROR_NUMBA=0 or not installed); nothing to compare")
        return

    gates = rng.normal(size=(B, 4 * H)).astype(np.float32)
    c_prev = rng.normal(size=(B, H)).astype(np.float32)
    dh = rng.normal(size=(B, H)).astype(np.float32)
    logits = rng.normal(size=(B, V)).astype(np.float32)
    targets = rng.integers(0, V, size=B)
    _, _, gi, gf, gg, go = kernels.lstm_gates_forward_np(gates, c_prev)
    c = rng.normal(size=(B, H)).astype(np.float32)
    _, probs = kernels.softmax_xent_forward_np(logits, targets)
    dlosses = rng.normal(size=B).astype(np.float32)
    ids = rng.integers(0, V, size=B * 20)
    dout = rng.normal(size=(B * 20, E)).astype(np.float32)
    p = rng.normal(size=H * 4 * H).astype(np.float32)
    g = rng.normal(size=H * 4 * H).astype(np.float32)
    m = np.zeros_like(p)
    v = np.zeros_like(p)

    cases = [
        ("lstm_gates_forward",
         lambda: kernels.lstm_gates_forward(gates, c_prev),
         lambda: kernels.lstm_gates_forward_np(gates, c_prev)),
        ("lstm_gates_backward",
         lambda: kernels.lstm_gates_backward(dh, dh, gi, gf, gg, go, c_prev, c),
         lambda: kernels.lstm_gates_backward_np(dh, dh, gi, gf, gg, go, c_prev, c)),
        ("softmax_xent_forward",
         lambda: kernels.softmax_xent_forward(logits, targets),
         lambda: kernels.softmax_xent_forward_np(logits, targets)),
        ("softmax_xent_backward",
         lambda: kernels.softmax_xent_backward(probs, targets, dlosses),
         lambda: kernels.softmax_xent_backward_np(probs, targets, dlosses)),
        ("embedding_grad",
         lambda: kernels.embedding_grad(ids, dout, np.zeros((V, E), np.float32)),
         lambda: kernels.embedding_grad_np(ids, dout, np.zeros((V, E), np.float32))),
        ("adam_update",
         lambda: kernels.adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001),
         lambda: kernels.adam_update_np(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)),
    ]

    print(f"size={args.size} (batch={B}, hidden={H}, vocab={V}, embed={E})")
    print(f"{'kernel':24s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, fast, slow in cases:
        t_fast = timeit(fast, args.repeat)
        t_slow = timeit(slow, args.repeat)
        print(f"{name:24s} {t_fast * 1e6:9.1f}u {t_slow * 1e6:9.1f}u {t_slow / t_fast:7.2f}x")


if __name__ == "__main__":
    main()
