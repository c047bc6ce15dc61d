"""Counter-based random streams.

Each stream is a Philox generator keyed by (seed, tag, index), so noise for a
given block of steps or sweeps depends only on those three integers.  This
keeps runs reproducible regardless of thinning, chunking or thread count.
"""
import numpy as np

LANGEVIN = 1
METROPOLIS = 2
GAUGEFIXED = 3
INIT = 4

_MASK64 = (1 << 64) - 1


def stream(seed, tag, index=0):
    if seed < 0 or seed > _MASK64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    key = np.array([seed, ((tag & 0xFFFF) << 48) | (index & ((1 << 48) - 1))], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
