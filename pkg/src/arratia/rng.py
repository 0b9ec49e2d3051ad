"""Counter-based random numbers for reproducible parallel Monte Carlo.

Every draw is a pure function of (key, index_a, index_b), so results do not
depend on how work is chunked across workers or threads.  The generator is a
chain of splitmix64 finalizers, which is the usual recipe for hash-based
counter RNGs.  Both a vectorized numpy path and a scalar numba path are
provided; they implement the same integer arithmetic but are never required
to agree bit-for-bit with each other (each engine uses exactly one of them).
"""

from __future__ import annotations

import numba
import numpy as np

_GOLD1 = np.uint64(0x9E3779B97F4A7C15)
_GOLD2 = np.uint64(0xC2B2AE3D27D4EB4F)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SH30 = np.uint64(30)
_SH27 = np.uint64(27)
_SH31 = np.uint64(31)
_SH11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_TWO_PI = 2.0 * np.pi

_MASK64 = (1 << 64) - 1


def _mix64_py(x: int) -> int:
    x &= _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


def derive_key(seed: int, *tags: int) -> int:
    """Derive an independent 64-bit stream key from a seed and integer tags.

    Used to give each module / term / run its own stream; tags are folded in
    one at a time so (seed, tag_a) and (seed, tag_b) never collide by
    accident.
    """
    h = _mix64_py(seed & _MASK64)
    for t in tags:
        h = _mix64_py(h ^ ((t + 0x9E3779B97F4A7C15) & _MASK64))
    return h


def _mix64(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> _SH30)
    x = x * _MIX1
    x = x ^ (x >> _SH27)
    x = x * _MIX2
    x = x ^ (x >> _SH31)
    return x


def uniforms(key: int, idx_a: np.ndarray, idx_b: np.ndarray) -> np.ndarray:
    """Vectorized uniform draws in the open interval (0, 1).

    ``idx_a`` and ``idx_b`` broadcast against each other; a draw depends only
    on (key, a, b).
    """
    a = np.asarray(idx_a, dtype=np.uint64)
    b = np.asarray(idx_b, dtype=np.uint64)
    h = _mix64(np.uint64(key) ^ (a + _GOLD1))
    h = _mix64(h ^ (b + _GOLD2))
    # 53 significant bits, offset by half an ulp: never exactly 0 or 1
    return ((h >> _SH11).astype(np.float64) + 0.5) * _INV53


def normals(key: int, idx_a: np.ndarray, n_normals: int) -> np.ndarray:
    """Standard normals of shape (len(idx_a), n_normals) via Box-Muller.

    Normal ``m`` of index ``a`` consumes uniform lanes (2m, 2m+1); lane ids
    are the ``idx_b`` axis of :func:`uniforms`.
    """
    a = np.asarray(idx_a, dtype=np.uint64)[:, None]
    lanes = np.arange(n_normals, dtype=np.uint64)[None, :]
    u1 = uniforms(key, a, 2 * lanes)
    u2 = uniforms(key, a, 2 * lanes + 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


@numba.njit(numba.uint64(numba.uint64), cache=True, inline="always")
def _mix64_nb(x):  # pragma: no cover - exercised through jitted callers
    x ^= x >> numba.uint64(30)
    x *= numba.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> numba.uint64(27)
    x *= numba.uint64(0x94D049BB133111EB)
    x ^= x >> numba.uint64(31)
    return x


@numba.njit(numba.float64(numba.uint64, numba.uint64, numba.uint64),
            cache=True, inline="always")
def uniform_nb(key, idx_a, idx_b):  # pragma: no cover
    h = _mix64_nb(key ^ (idx_a + numba.uint64(0x9E3779B97F4A7C15)))
    h = _mix64_nb(h ^ (idx_b + numba.uint64(0xC2B2AE3D27D4EB4F)))
    return (np.float64(h >> numba.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@numba.njit(numba.float64(numba.uint64, numba.uint64, numba.uint64),
            cache=True, inline="always")
def normal_nb(key, idx_a, normal_id):  # pragma: no cover
    u1 = uniform_nb(key, idx_a, numba.uint64(2) * normal_id)
    u2 = uniform_nb(key, idx_a, numba.uint64(2) * normal_id + numba.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(6.283185307179586 * u2)
