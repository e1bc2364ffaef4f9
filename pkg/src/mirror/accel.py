"""Numba shim: @njit when available, identity decorator otherwise.

The env var MIRROR_NUMBA=0 forces the pure-numpy kernel path even when
numba is installed (useful for debugging and for the kernel benchmark).
"""

import os
import warnings

NUMBA_ENABLED = os.environ.get("MIRROR_NUMBA", "1") != "0"

if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        warnings.warn("numba not installed - falling back to numpy kernels")
        NUMBA_ENABLED = False

if not NUMBA_ENABLED:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
