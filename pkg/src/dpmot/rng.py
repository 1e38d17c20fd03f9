"""Counter-derived random streams.

Every consumer of randomness asks for ``stream(seed, purpose, *counters)``;
the generator is a pure function of those integers, so a master seed fixes
every draw regardless of call order or batching elsewhere.
"""
import numpy as np

SDOT_VOLUMES = 1
SAMPLER_SOURCE = 2
SAMPLER_TAIL = 3
VANILLA_INIT = 4
FORWARD = 5
DATA = 6
REFERENCE = 7
PERMUTATION = 8

_MASK = (1 << 64) - 1


def stream(seed, purpose, *counters):
    key = [int(seed) & _MASK, int(purpose)] + [int(c) for c in counters]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def standard_normal(rng, n, d, chunk=1 << 16):
    """(n, d) standard-normal draws, generated chunk-wise to bound peak memory."""
    out = np.empty((n, d))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        out[lo:hi] = rng.standard_normal((hi - lo, d))
    return out
