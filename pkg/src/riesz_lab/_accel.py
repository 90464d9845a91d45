"""Hot numeric kernels: numba-jitted loops with a pure-numpy fallback.

The fallback is selected by setting the environment variable
``RIESZ_LAB_DISABLE_NUMBA=1`` before import (or automatically when numba
is not installed).  Both paths accumulate pairwise sums per outer index
and reduce in fixed chunk order, so results are reproducible and do not
depend on the thread schedule.
"""

from __future__ import annotations

import math
import os

import numpy as np

_DISABLE = os.environ.get("RIESZ_LAB_DISABLE_NUMBA", "0") not in ("0", "", "false", "False")

USING_NUMBA = False
if not _DISABLE:
    try:
        import numba
        from numba import njit, prange

        USING_NUMBA = True
    except ImportError:
        USING_NUMBA = False


def set_threads(n: int) -> None:
    """Set the worker thread count for the jitted backend (no-op for numpy)."""
    if USING_NUMBA and n >= 1:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


# ---------------------------------------------------------------------------
# pure-numpy reference implementations
# ---------------------------------------------------------------------------


def _min_pairwise_distance_np(x: np.ndarray) -> float:
    n = x.shape[0]
    if n < 2:
        return np.inf
    best = np.inf
    # chunk the outer index to bound memory at O(chunk * n)
    step = max(1, 2_000_000 // max(n, 1))
    for a in range(0, n - 1, step):
        b = min(a + step, n - 1)
        block = x[a:b, None, :] - x[None, a + 1 :, :]
        d2 = np.einsum("ijk,ijk->ij", block, block)
        # mask the lower triangle (j <= i) within the block
        rows = np.arange(a, b)[:, None]
        cols = np.arange(a + 1, n)[None, :]
        d2[cols <= rows] = np.inf
        best = min(best, float(d2.min()))
    return math.sqrt(best)


def _nearest_neighbor_np(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    out = np.full(n, np.inf)
    step = max(1, 2_000_000 // max(n, 1))
    for a in range(0, n, step):
        b = min(a + step, n)
        block = x[a:b, None, :] - x[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", block, block)
        idx = np.arange(a, b)
        d2[np.arange(b - a), idx] = np.inf
        out[a:b] = np.sqrt(d2.min(axis=1))
    return out


def _pair_sum_g_free_np(x: np.ndarray, s: float) -> float:
    n = x.shape[0]
    total = 0.0
    step = max(1, 2_000_000 // max(n, 1))
    for a in range(0, n, step):
        b = min(a + step, n)
        block = x[a:b, None, :] - x[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", block, block)
        idx = np.arange(a, b)
        d2[np.arange(b - a), idx] = 1.0  # placeholder, masked below
        r = np.sqrt(d2)
        if s == 0.0:
            vals = -np.log(r)
        else:
            vals = r ** (-s) / s
        vals[np.arange(b - a), idx] = 0.0
        total += float(vals.sum())
    return total


def _pair_force_free_np(x: np.ndarray, s: float) -> np.ndarray:
    """Sum over j != i of grad g(x_i - x_j) = -(x_i-x_j)|x_i-x_j|^(-s-2)."""
    n, d = x.shape
    out = np.zeros((n, d))
    step = max(1, 2_000_000 // max(n, 1))
    for a in range(0, n, step):
        b = min(a + step, n)
        block = x[a:b, None, :] - x[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", block, block)
        idx = np.arange(a, b)
        d2[np.arange(b - a), idx] = 1.0
        w = d2 ** (-(s + 2.0) / 2.0)
        w[np.arange(b - a), idx] = 0.0
        out[a:b] = -np.einsum("ij,ijk->ik", w, block)
    return out


def _pair_a1_free_np(x: np.ndarray, v: np.ndarray, s: float) -> float:
    """Sum over i != j of grad g(x_i-x_j) . (v_i - v_j)."""
    n = x.shape[0]
    total = 0.0
    step = max(1, 1_000_000 // max(n, 1))
    for a in range(0, n, step):
        b = min(a + step, n)
        block = x[a:b, None, :] - x[None, :, :]
        dv = v[a:b, None, :] - v[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", block, block)
        idx = np.arange(a, b)
        d2[np.arange(b - a), idx] = 1.0
        w = d2 ** (-(s + 2.0) / 2.0)
        w[np.arange(b - a), idx] = 0.0
        total += float(-(w * np.einsum("ijk,ijk->ij", block, dv)).sum())
    return total


def _sf_1d_np(x: np.ndarray, L: float, K: int) -> np.ndarray:
    """S[k-1] = sum_i exp(-2 pi i k x_i / L) for k = 1..K."""
    z = np.exp(-2j * np.pi * x / L)
    out = np.empty(K, dtype=np.complex128)
    zk = z.copy()
    for k in range(K):
        out[k] = zk.sum()
        zk *= z
    return out


def _sf_weighted_1d_np(x: np.ndarray, w: np.ndarray, L: float, K: int) -> np.ndarray:
    z = np.exp(-2j * np.pi * x / L)
    out = np.empty(K, dtype=np.complex128)
    zk = z.copy()
    for k in range(K):
        out[k] = (w * zk).sum()
        zk *= z
    return out


def _eval_modes_1d_np(coef: np.ndarray, x: np.ndarray, L: float) -> np.ndarray:
    """f(x_i) = 2 Re sum_{k=1..K} coef[k-1] exp(+2 pi i k x_i / L)."""
    K = coef.shape[0]
    z = np.exp(2j * np.pi * x / L)
    acc = np.zeros(x.shape[0], dtype=np.complex128)
    zk = z.copy()
    for k in range(K):
        acc += coef[k] * zk
        zk *= z
    return 2.0 * acc.real


def _sf_nd_np(x: np.ndarray, kvecs: np.ndarray, L: float) -> np.ndarray:
    phase = -2j * np.pi * (x @ kvecs.T) / L
    return np.exp(phase).sum(axis=0)


def _eval_modes_nd_np(coef: np.ndarray, kvecs: np.ndarray, x: np.ndarray, L: float) -> np.ndarray:
    phase = 2j * np.pi * (x @ kvecs.T) / L
    return 2.0 * (np.exp(phase) @ coef).real


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if USING_NUMBA:

    @njit(cache=True, parallel=True)
    def _min_pairwise_distance_nb(x):
        n = x.shape[0]
        d = x.shape[1]
        per_i = np.full(n, np.inf)
        for i in prange(n - 1):
            best = np.inf
            for j in range(i + 1, n):
                acc = 0.0
                for c in range(d):
                    diff = x[i, c] - x[j, c]
                    acc += diff * diff
                if acc < best:
                    best = acc
            per_i[i] = best
        return math.sqrt(per_i.min())

    @njit(cache=True, parallel=True)
    def _nearest_neighbor_nb(x):
        n = x.shape[0]
        d = x.shape[1]
        out = np.full(n, np.inf)
        for i in prange(n):
            best = np.inf
            for j in range(n):
                if j == i:
                    continue
                acc = 0.0
                for c in range(d):
                    diff = x[i, c] - x[j, c]
                    acc += diff * diff
                if acc < best:
                    best = acc
            out[i] = math.sqrt(best)
        return out

    @njit(cache=True, parallel=True)
    def _pair_sum_g_free_nb(x, s):
        n = x.shape[0]
        d = x.shape[1]
        per_i = np.zeros(n)
        for i in prange(n):
            acc = 0.0
            for j in range(n):
                if j == i:
                    continue
                r2 = 0.0
                for c in range(d):
                    diff = x[i, c] - x[j, c]
                    r2 += diff * diff
                if s == 0.0:
                    acc += -0.5 * math.log(r2)
                else:
                    acc += r2 ** (-0.5 * s) / s
            per_i[i] = acc
        return per_i.sum()

    @njit(cache=True, parallel=True)
    def _pair_force_free_nb(x, s):
        n = x.shape[0]
        d = x.shape[1]
        out = np.zeros((n, d))
        for i in prange(n):
            for j in range(n):
                if j == i:
                    continue
                r2 = 0.0
                for c in range(d):
                    diff = x[i, c] - x[j, c]
                    r2 += diff * diff
                w = r2 ** (-0.5 * (s + 2.0))
                for c in range(d):
                    out[i, c] -= (x[i, c] - x[j, c]) * w
        return out

    @njit(cache=True, parallel=True)
    def _pair_a1_free_nb(x, v, s):
        n = x.shape[0]
        d = x.shape[1]
        per_i = np.zeros(n)
        for i in prange(n):
            acc = 0.0
            for j in range(n):
                if j == i:
                    continue
                r2 = 0.0
                dot = 0.0
                for c in range(d):
                    diff = x[i, c] - x[j, c]
                    r2 += diff * diff
                    dot += diff * (v[i, c] - v[j, c])
                acc -= dot * r2 ** (-0.5 * (s + 2.0))
            per_i[i] = acc
        return per_i.sum()

    @njit(cache=True, parallel=True)
    def _sf_1d_nb(x, L, K):
        n = x.shape[0]
        nchunk = 16
        size = (n + nchunk - 1) // nchunk
        partial = np.zeros((nchunk, K), dtype=np.complex128)
        for c in prange(nchunk):
            lo = c * size
            hi = min(lo + size, n)
            for i in range(lo, hi):
                theta = -2.0 * math.pi * x[i] / L
                z = complex(math.cos(theta), math.sin(theta))
                zk = z
                for k in range(K):
                    partial[c, k] += zk
                    zk *= z
        out = np.zeros(K, dtype=np.complex128)
        for c in range(nchunk):
            out += partial[c]
        return out

    @njit(cache=True, parallel=True)
    def _sf_weighted_1d_nb(x, w, L, K):
        n = x.shape[0]
        nchunk = 16
        size = (n + nchunk - 1) // nchunk
        partial = np.zeros((nchunk, K), dtype=np.complex128)
        for c in prange(nchunk):
            lo = c * size
            hi = min(lo + size, n)
            for i in range(lo, hi):
                theta = -2.0 * math.pi * x[i] / L
                z = complex(math.cos(theta), math.sin(theta))
                zk = z
                for k in range(K):
                    partial[c, k] += w[i] * zk
                    zk *= z
        out = np.zeros(K, dtype=np.complex128)
        for c in range(nchunk):
            out += partial[c]
        return out

    @njit(cache=True, parallel=True)
    def _eval_modes_1d_nb(coef, x, L):
        n = x.shape[0]
        K = coef.shape[0]
        out = np.empty(n)
        for i in prange(n):
            theta = 2.0 * math.pi * x[i] / L
            z = complex(math.cos(theta), math.sin(theta))
            zk = z
            acc = 0.0 + 0.0j
            for k in range(K):
                acc += coef[k] * zk
                zk *= z
            out[i] = 2.0 * acc.real
        return out

    @njit(cache=True, parallel=True)
    def _sf_nd_nb(x, kvecs, L):
        n = x.shape[0]
        d = x.shape[1]
        m = kvecs.shape[0]
        nchunk = 16
        size = (n + nchunk - 1) // nchunk
        partial = np.zeros((nchunk, m), dtype=np.complex128)
        for c in prange(nchunk):
            lo = c * size
            hi = min(lo + size, n)
            for i in range(lo, hi):
                for q in range(m):
                    dot = 0.0
                    for cc in range(d):
                        dot += kvecs[q, cc] * x[i, cc]
                    theta = -2.0 * math.pi * dot / L
                    partial[c, q] += complex(math.cos(theta), math.sin(theta))
        out = np.zeros(m, dtype=np.complex128)
        for c in range(nchunk):
            out += partial[c]
        return out

    @njit(cache=True, parallel=True)
    def _eval_modes_nd_nb(coef, kvecs, x, L):
        n = x.shape[0]
        d = x.shape[1]
        m = kvecs.shape[0]
        out = np.empty(n)
        for i in prange(n):
            acc = 0.0 + 0.0j
            for q in range(m):
                dot = 0.0
                for cc in range(d):
                    dot += kvecs[q, cc] * x[i, cc]
                theta = 2.0 * math.pi * dot / L
                acc += coef[q] * complex(math.cos(theta), math.sin(theta))
            out[i] = 2.0 * acc.real
        return out

    min_pairwise_distance = _min_pairwise_distance_nb
    nearest_neighbor_distances = _nearest_neighbor_nb
    pair_sum_g_free = _pair_sum_g_free_nb
    pair_force_free = _pair_force_free_nb
    pair_a1_free = _pair_a1_free_nb
    sf_1d = _sf_1d_nb
    sf_weighted_1d = _sf_weighted_1d_nb
    eval_modes_1d = _eval_modes_1d_nb
    sf_nd = _sf_nd_nb
    eval_modes_nd = _eval_modes_nd_nb
else:
    min_pairwise_distance = _min_pairwise_distance_np
    nearest_neighbor_distances = _nearest_neighbor_np
    pair_sum_g_free = _pair_sum_g_free_np
    pair_force_free = _pair_force_free_np
    pair_a1_free = _pair_a1_free_np
    sf_1d = _sf_1d_np
    sf_weighted_1d = _sf_weighted_1d_np
    eval_modes_1d = _eval_modes_1d_np
    sf_nd = _sf_nd_np
    eval_modes_nd = _eval_modes_nd_np
