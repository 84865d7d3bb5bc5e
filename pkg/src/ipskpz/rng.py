"""Counter-based seed derivation and the in-kernel random number generator.

Seeds are split with the SplitMix64 finalizer::

    split(master, i) = mix64(master + (i + 1) * 0x9E3779B97F4A7C15  mod 2**64)
    mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
              z ^= z >> 27; z *= 0x94D049BB133111EB
              z ^= z >> 31

The simulation kernels draw from xoshiro256**, whose four state words are
the first four SplitMix64 outputs of the dynamics seed.
"""

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def mix64(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def split(master, i):
    """Derive the ``i``-th child seed of ``master`` (both 64-bit integers)."""
    if i < 0:
        raise ValueError("split index must be nonnegative")
    return mix64((int(master) + (int(i) + 1) * GOLDEN) & MASK64)


def xoshiro_state(seed):
    """Initial xoshiro256** state (uint64[4]) for a 64-bit seed."""
    s = np.empty(4, dtype=np.uint64)
    x = int(seed) & MASK64
    for k in range(4):
        x = (x + GOLDEN) & MASK64
        s[k] = mix64(x)
    if not s.any():
        s[0] = 1
    return s


@njit(inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(inline="always")
def next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(inline="always")
def next_double(s):
    """Uniform double in [0, 1)."""
    return float(next_u64(s) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(inline="always")
def next_open(s):
    """Uniform double in (0, 1]; safe for ``-log``."""
    return (float(next_u64(s) >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)


@njit(inline="always")
def next_below(s, m):
    """Uniform integer in [0, m) by the multiply-shift map on the top 32 bits."""
    hi = next_u64(s) >> np.uint64(32)
    return np.int64((hi * np.uint64(m)) >> np.uint64(32))
