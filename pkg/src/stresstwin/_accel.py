"""Numba acceleration switch for the hot numeric kernels.

Every hot kernel in this package exists twice: a scalar-loop version meant
for numba.njit and a vectorized numpy (or scipy) fallback. The dispatch is
decided once at import time:

  * numba importable and STRESSTWIN_NO_NUMBA unset -> jitted loop kernels
  * otherwise                                      -> fallback kernels

``benchmarks/bench_kernels.py`` times both sides of each pair.
"""

import os


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and not _env_flag("STRESSTWIN_NO_NUMBA")


def maybe_njit(*jit_args, **jit_kwargs):
    """numba.njit when acceleration is on, identity otherwise.

    Works bare (``@maybe_njit``) or with njit arguments
    (``@maybe_njit("f8(f8[:])")``).
    """
    if len(jit_args) == 1 and callable(jit_args[0]) and not jit_kwargs:
        func = jit_args[0]
        return numba.njit(cache=True)(func) if NUMBA_ENABLED else func

    def wrap(func):
        if not NUMBA_ENABLED:
            return func
        return numba.njit(*jit_args, cache=True, **jit_kwargs)(func)

    return wrap


def select(jit_kernel, fallback_kernel):
    """Pick the active implementation of a kernel pair."""
    return jit_kernel if NUMBA_ENABLED else fallback_kernel
