"""Philox4x64-10 counter-based generator compiled with numba.

Every random number is a pure function of (key, counter), so a path's draws
depend only on the seed and the path index. The output matches
``numpy.random.Philox`` for the same key and counter.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always")
def _mulhilo(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    hi_hi = a_hi * b_hi
    cross = (lo_lo >> _S32) + (hi_lo & _MASK32) + lo_hi
    hi = hi_hi + (hi_lo >> _S32) + (cross >> _S32)
    return hi, a * b


@nb.njit
def philox4x64(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return c0, c1, c2, c3


@nb.njit(inline="always")
def to_unit_open(x):
    """Map a 64-bit word to a uniform in (0, 1]."""
    return (np.float64(x >> _S11) + 1.0) * _TWO_M53


@nb.njit
def philox_block(counter, path, stream, k0, k1, out):
    """Fill ``out[0:4]`` with uniforms in (0, 1] for one counter value."""
    r0, r1, r2, r3 = philox4x64(np.uint64(counter), np.uint64(path), np.uint64(stream),
                                np.uint64(0), k0, k1)
    out[0] = to_unit_open(r0)
    out[1] = to_unit_open(r1)
    out[2] = to_unit_open(r2)
    out[3] = to_unit_open(r3)


@nb.njit
def normals_block(counter, path, stream, k0, k1, out):
    """Fill ``out[0:4]`` with standard normals via Box-Muller."""
    philox_block(counter, path, stream, k0, k1, out)
    u1, u2, u3, u4 = out[0], out[1], out[2], out[3]
    r1 = math.sqrt(-2.0 * math.log(u1))
    r2 = math.sqrt(-2.0 * math.log(u3))
    out[0] = r1 * math.cos(2.0 * math.pi * u2)
    out[1] = r1 * math.sin(2.0 * math.pi * u2)
    out[2] = r2 * math.cos(2.0 * math.pi * u4)
    out[3] = r2 * math.sin(2.0 * math.pi * u4)


def seed_to_key(seed: int) -> tuple[np.uint64, np.uint64]:
    seed = int(seed)
    if seed < 0 or seed >= 1 << 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    # second key word is a fixed odd constant so that seed 0 is not degenerate
    return np.uint64(seed), np.uint64(0x5851F42D4C957F2D)


def raw_words(counter, key):
    """Four raw 64-bit outputs as Python ints, for cross-checks."""
    out = philox4x64(np.uint64(counter[0]), np.uint64(counter[1]), np.uint64(counter[2]),
                     np.uint64(counter[3]), np.uint64(key[0]), np.uint64(key[1]))
    return [int(v) for v in out]
