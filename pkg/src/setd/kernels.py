"""Low-level numerical kernels with numba and pure-numpy backends.

Two families live here:

* CSR matrix-vector products (the inner loop of every Arnoldi phi action),
* counter-based normal draws (Philox4x32-10), which make every noise sample
  a pure function of ``(seed, realization, mode_i, mode_j, step, stream)``.
  That keying is what guarantees bit-exact path refinement and makes results
  independent of how realizations are scheduled across workers.

The numba backend is used when numba imports cleanly and the environment
variable ``SETD_DISABLE_NUMBA`` is unset/empty/"0"; otherwise the numpy
fallback (identical semantics, same bits for the integer pipeline) is used.
Both implementations are importable under explicit names for tests and for
``benchmarks/kernel_bench.py``.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via SETD_DISABLE_NUMBA
    nb = None
    HAVE_NUMBA = False

_DISABLE = os.environ.get("SETD_DISABLE_NUMBA", "") not in ("", "0")
USING_NUMBA = HAVE_NUMBA and not _DISABLE

_MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_TWO_PI = 6.283185307179586
_INV_2_53 = 2.0 ** -53


def splitmix64(x):
    """One SplitMix64 scramble of a 64-bit integer (returns uint64).

    Wraparound is the point; numpy's overflow warning is silenced.
    """
    with np.errstate(over="ignore"):
        x = np.uint64(x & 0xFFFFFFFFFFFFFFFF)
        x = x + np.uint64(0x9E3779B97F4A7C15)
        z = x
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def derive_key(seed, realization):
    """Derive the Philox key pair (k0, k1) for one (seed, realization).

    Parameters
    ----------
    seed : int
        Master seed, any Python int.
    realization : int
        Realization index >= 0.

    Returns
    -------
    (int, int)
        Two 32-bit key words.
    """
    if realization < 0:
        raise ValueError("realization index must be >= 0")
    h = splitmix64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    mixed = splitmix64(int(h) ^ ((realization * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF))
    return int(mixed) & 0xFFFFFFFF, int(mixed) >> 32


def philox4x32(k0, k1, c0, c1, c2, c3):
    """Philox4x32-10 block function (vectorized numpy reference).

    All inputs are 32-bit words (scalars or equal-shape arrays). Returns the
    four 32-bit output words as uint64 arrays holding 32-bit values. This is
    the reference used by the known-answer tests; the hot paths below inline
    the same rounds.
    """
    c0 = np.asarray(c0, dtype=np.uint64)
    c1 = np.asarray(c1, dtype=np.uint64)
    c2 = np.asarray(c2, dtype=np.uint64)
    c3 = np.asarray(c3, dtype=np.uint64)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & _MASK32
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & _MASK32
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


def normals_from_words(x0, x1, x2, x3):
    """Map four Philox output words to one standard normal (Box-Muller).

    Two 64-bit uniforms come from the four 32-bit words;
    (u >> 11) + 0.5 scaled by 2^-53 lies strictly inside (0, 1).
    """
    ua = (x0 << np.uint64(32)) | x1
    ub = (x2 << np.uint64(32)) | x3
    u1 = ((ua >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53
    u2 = ((ub >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def normal_block_numpy(k0, k1, n1, n2, step, stream):
    """Standard-normal draws for all modes (i, j), i < n1, j < n2.

    The draw at [i, j] is a pure function of (key, i, j, step, stream);
    ``stream`` separates the main Wiener draws (0) from auxiliary draws (1).
    """
    i = np.repeat(np.arange(n1, dtype=np.uint64), n2)
    j = np.tile(np.arange(n2, dtype=np.uint64), n1)
    x0, x1, x2, x3 = philox4x32(k0, k1, i, j, np.uint64(step), np.uint64(stream))
    return normals_from_words(x0, x1, x2, x3).reshape(n1, n2)


def csr_matvec_numpy(indptr, indices, data, x):
    """y = A @ x for CSR arrays; row entries accumulate left-to-right."""
    n = indptr.shape[0] - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    return np.bincount(rows, weights=data * x[indices], minlength=n)


if HAVE_NUMBA:

    @nb.njit(cache=True, nogil=True)
    def csr_matvec_numba(indptr, indices, data, x):  # pragma: no cover - numba
        n = indptr.shape[0] - 1
        y = np.empty(n, dtype=np.float64)
        for i in range(n):
            acc = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                acc += data[p] * x[indices[p]]
            y[i] = acc
        return y

    @nb.njit(cache=True, nogil=True)
    def normal_block_numba(k0, k1, n1, n2, step, stream):  # pragma: no cover - numba
        mask = np.uint64(0xFFFFFFFF)
        m0 = np.uint64(0xD2511F53)
        m1 = np.uint64(0xCD9E8D57)
        w0 = np.uint64(0x9E3779B9)
        w1 = np.uint64(0xBB67AE85)
        out = np.empty((n1, n2), dtype=np.float64)
        for i in range(n1):
            for j in range(n2):
                c0 = np.uint64(i)
                c1 = np.uint64(j)
                c2 = np.uint64(step)
                c3 = np.uint64(stream)
                kk0 = np.uint64(k0)
                kk1 = np.uint64(k1)
                for _ in range(10):
                    p0 = m0 * c0
                    p1 = m1 * c2
                    hi0 = p0 >> np.uint64(32)
                    lo0 = p0 & mask
                    hi1 = p1 >> np.uint64(32)
                    lo1 = p1 & mask
                    c0 = hi1 ^ c1 ^ kk0
                    c1 = lo1
                    c2 = hi0 ^ c3 ^ kk1
                    c3 = lo0
                    kk0 = (kk0 + w0) & mask
                    kk1 = (kk1 + w1) & mask
                ua = (c0 << np.uint64(32)) | c1
                ub = (c2 << np.uint64(32)) | c3
                u1 = np.float64(ua >> np.uint64(11)) + 0.5
                u2 = np.float64(ub >> np.uint64(11)) + 0.5
                u1 *= 2.0 ** -53
                u2 *= 2.0 ** -53
                out[i, j] = math.sqrt(-2.0 * math.log(u1)) * math.cos(6.283185307179586 * u2)
        return out

else:  # pragma: no cover - numba missing entirely
    csr_matvec_numba = None
    normal_block_numba = None


if USING_NUMBA:
    csr_matvec = csr_matvec_numba
    normal_block = normal_block_numba
else:
    csr_matvec = csr_matvec_numpy
    normal_block = normal_block_numpy
