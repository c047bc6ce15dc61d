"""Numba switch.

Hot kernels are written in the numba-compatible subset of Python and wrapped
with :func:`maybe_njit`.  Setting ``LATYMH_NUMBA=0`` in the environment (before
import) leaves them as plain Python + numpy, which is slow but dependency-free
and handy for debugging and for the speed benchmark.
"""
import os

USE_NUMBA = os.environ.get("LATYMH_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def maybe_njit(*args, **kwargs):
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend():
    return "numba" if USE_NUMBA else "numpy"
