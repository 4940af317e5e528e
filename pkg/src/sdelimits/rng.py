"""Counter-based normal variates and dyadic Brownian bridges.

Every normal is a pure function of ``(seed, path, stream, node)``: Philox4x32-10
is applied to the counter ``(node // 2, path, stream, 0)`` under the 64-bit
seed split into two key words, and a Box-Muller transform turns the four
output words into a pair of normals (cosine branch for even nodes, sine
branch for odd ones).  No generator state is carried between draws, so
results do not depend on how paths are distributed over workers.

Brownian paths on ``[0, L]`` are built by midpoint refinement (Levy's
construction).  Node 0 carries ``W(L)``; the midpoint ``(2i + 1) / 2**l`` of
the unit interval carries node ``2**(l - 1) + i``.  A node's value never
depends on the final resolution, so a path sampled at ``2**n`` steps agrees
exactly with the same path at ``2**m`` steps on the common grid points.
"""

import math

import numba as nb
import numpy as np

from ._trig import sincos

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S5 = np.uint64(5)
_S6 = np.uint64(6)
_2P26 = np.uint64(67108864)
_INV_2P53 = 1.0 / 9007199254740992.0
_ONE = np.uint64(1)
TWO_PI = 2.0 * math.pi

#: Finest supported bridge level (node ids must fit in 32 bits).
MAX_LEVEL = 30


@nb.njit(inline="always", error_model="numpy")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x32 on uint64-held 32-bit words."""
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        h0 = p0 >> _S32
        l0 = p0 & _MASK
        h1 = p1 >> _S32
        l1 = p1 & _MASK
        c0, c1, c2, c3 = (h1 ^ c1 ^ k0) & _MASK, l1, (h0 ^ c3 ^ k1) & _MASK, l0
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


@nb.njit(inline="always", error_model="numpy")
def normal_pair(k0, k1, pair, path, stream):
    w0, w1, w2, w3 = philox4x32(
        np.uint64(pair), np.uint64(path), np.uint64(stream), np.uint64(0), k0, k1
    )
    # u1 in (0, 1], u2 in [0, 1)
    u1 = (((w0 >> _S5) * _2P26 + (w1 >> _S6)) + _ONE) * _INV_2P53
    u2 = ((w2 >> _S5) * _2P26 + (w3 >> _S6)) * _INV_2P53
    r = math.sqrt(-2.0 * math.log(u1))
    s, c = sincos(TWO_PI * u2)
    return r * c, r * s


@nb.njit(error_model="numpy")
def fill_normals(k0, k1, path, stream, node0, count, out):
    """Write the normals of nodes ``node0 .. node0 + count - 1`` into ``out``."""
    i = 0
    node = node0
    end = node0 + count
    if node & 1 and node < end:
        z0, z1 = normal_pair(k0, k1, node >> 1, path, stream)
        out[0] = z1
        i = 1
        node += 1
    while node + 1 < end:
        z0, z1 = normal_pair(k0, k1, node >> 1, path, stream)
        out[i] = z0
        out[i + 1] = z1
        i += 2
        node += 2
    if node < end:
        z0, z1 = normal_pair(k0, k1, node >> 1, path, stream)
        out[i] = z0


@nb.njit(error_model="numpy")
def bridge_refine(k0, k1, path, stream, w, level0, cell, sublevels, L, scratch):
    """Refine ``w`` (endpoints already set) by ``sublevels`` midpoint passes.

    ``w`` spans coarse cell ``cell`` of level ``level0``; after the call it
    holds the path at ``2**sublevels + 1`` equally spaced points.
    """
    n = w.size - 1
    for s in range(1, sublevels + 1):
        lev = level0 + s
        count = 1 << (s - 1)
        node0 = (1 << (lev - 1)) + cell * count
        fill_normals(k0, k1, path, stream, node0, count, scratch)
        half = n >> s
        sd = math.sqrt(L * 0.5 ** (lev + 1))
        for i in range(count):
            mid = (2 * i + 1) * half
            w[mid] = 0.5 * (w[mid - half] + w[mid + half]) + sd * scratch[i]


@nb.njit(error_model="numpy")
def bridge_path(k0, k1, path, stream, level, L):
    """Brownian path at ``2**level + 1`` points of ``[0, L]``."""
    w = np.zeros((1 << level) + 1)
    scratch = np.empty(max(1, 1 << max(level - 1, 0)))
    fill_normals(k0, k1, path, stream, 0, 1, scratch)
    w[-1] = math.sqrt(L) * scratch[0]
    bridge_refine(k0, k1, path, stream, w, 0, 0, level, L, scratch)
    return w


def seed_key(seed: int) -> tuple[np.uint64, np.uint64]:
    """Split a 64-bit seed into the two Philox key words."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)


def philox(counter, key) -> tuple[int, int, int, int]:
    """Python-level Philox4x32-10 (for tests and reference)."""
    c = [np.uint64(v) for v in counter]
    k = [np.uint64(v) for v in key]
    return tuple(int(v) for v in philox4x32(c[0], c[1], c[2], c[3], k[0], k[1]))


def normals(seed: int, path: int, stream: int, node0: int, count: int) -> np.ndarray:
    k0, k1 = seed_key(seed)
    out = np.empty(count)
    fill_normals(k0, k1, int(path), int(stream), int(node0), int(count), out)
    return out


def brownian_path(seed: int, path: int, stream: int, level: int, L: float = 1.0) -> np.ndarray:
    """Values of one counter-keyed Brownian path on the ``2**level`` grid of ``[0, L]``."""
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"level must lie in [0, {MAX_LEVEL}]")
    k0, k1 = seed_key(seed)
    return bridge_path(k0, k1, int(path), int(stream), int(level), float(L))
