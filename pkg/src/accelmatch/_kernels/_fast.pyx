# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels.

Mirrors ``pure.py``: same tie-breaks (first maximum in (accelerator,
startup) scan order) and a log Phi accurate to ~1e-12 relative, so the two
backends agree to floating-point summation order.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, erfc, log

cnp.import_array()

BACKEND_NAME = "cython"

cdef double INV_SQRT2 = 0.7071067811865476
cdef double SQRT_PI = 1.7724538509055159
cdef double LOG_HALF = -0.6931471805599453


cdef inline double _log_phi(double x) noexcept nogil:
    """log of the standard normal CDF.

    Plain erfc is exact enough on [-8, 6]; beyond 6 the complement is tiny
    and log1p collapses to its first term; below the -8 crossover erfc
    itself underflows in relative terms, so the scaled-complement
    asymptotic series takes over.
    """
    cdef double t, s, term, inv2t2
    cdef int k
    if x > 6.0:
        return -0.5 * erfc(x * INV_SQRT2)
    if x >= -8.0:
        return log(0.5 * erfc(-x * INV_SQRT2))
    t = -x * INV_SQRT2  # t >= 5.65
    inv2t2 = 0.5 / (t * t)
    s = 1.0
    term = 1.0
    for k in range(1, 13):
        term *= -(2 * k - 1) * inv2t2
        s += term
    return LOG_HALF + log(s / (t * SQRT_PI)) - t * t


def log_phi(x):
    """Elementwise log Phi (exposed for cross-backend accuracy tests)."""
    arr = np.ascontiguousarray(x, dtype=np.float64).ravel()
    out_arr = np.empty_like(arr)
    cdef double[::1] inp = arr
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    for i in range(inp.shape[0]):
        out[i] = _log_phi(inp[i])
    return out_arr.reshape(np.shape(x))


def greedy_assign(const double[:, ::1] u, const cnp.int64_t[::1] quotas):
    cdef Py_ssize_t A = u.shape[0], S = u.shape[1]
    out_arr = np.full(S, -1, dtype=np.int64)
    spare_arr = np.asarray(quotas).copy()
    cdef cnp.int64_t[::1] out = out_arr
    cdef cnp.int64_t[::1] spare = spare_arr
    _greedy_one(u, spare, out, A, S)
    return out_arr


cdef inline void _greedy_one(const double[:, ::1] u, cnp.int64_t[::1] spare,
                             cnp.int64_t[:] out, Py_ssize_t A,
                             Py_ssize_t S) noexcept:
    cdef Py_ssize_t step, a, s, best_a, best_s
    cdef double best, v
    for step in range(S):
        best = -INFINITY
        best_a = -1
        best_s = -1
        for a in range(A):
            if spare[a] == 0:
                continue
            for s in range(S):
                if out[s] >= 0:
                    continue
                v = u[a, s]
                if v > best:
                    best = v
                    best_a = a
                    best_s = s
        out[best_s] = best_a
        spare[best_a] -= 1


def greedy_assign_batch(const double[:, ::1] ubar, const cnp.int64_t[::1] quotas,
                        const double[:, :, ::1] eps):
    cdef Py_ssize_t T = eps.shape[0], A = ubar.shape[0], S = ubar.shape[1]
    out_arr = np.full((T, S), -1, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    u_arr = np.empty((A, S))
    spare_arr = np.empty(A, dtype=np.int64)
    cdef double[:, ::1] u = u_arr
    cdef cnp.int64_t[::1] spare = spare_arr
    cdef Py_ssize_t t, a, s
    for t in range(T):
        for a in range(A):
            spare[a] = quotas[a]
            for s in range(S):
                u[a, s] = ubar[a, s] + eps[t, a, s]
        _greedy_one(u, spare, out[t], A, S)
    return out_arr


def stability_logprob_batch(const double[:, ::1] ubar, const cnp.int64_t[::1] assign,
                            const double[:, ::1] eps_matched):
    cdef Py_ssize_t T = eps_matched.shape[0]
    cdef Py_ssize_t A = ubar.shape[0], S = ubar.shape[1]
    g_arr = np.zeros(T)
    cdef double[::1] g = g_arr
    um_arr = np.empty(S)
    mins_arr = np.empty(A)
    cdef double[::1] um = um_arr
    cdef double[::1] mins = mins_arr
    cdef Py_ssize_t t, a, s
    cdef double thr, acc
    for t in range(T):
        for s in range(S):
            um[s] = ubar[assign[s], s] + eps_matched[t, s]
        for a in range(A):
            mins[a] = INFINITY
        for s in range(S):
            a = assign[s]
            if um[s] < mins[a]:
                mins[a] = um[s]
        acc = 0.0
        for a in range(A):
            for s in range(S):
                if assign[s] == a:
                    continue
                thr = um[s] if um[s] > mins[a] else mins[a]
                acc += _log_phi(thr - ubar[a, s])
        g[t] = acc
    return g_arr


def stability_logprob_multi(const double[::1] ubar_matched,
                            const cnp.int64_t[::1] assign_global,
                            const double[:, ::1] draws,
                            const cnp.int64_t[::1] pair_a,
                            const cnp.int64_t[::1] pair_s,
                            const double[::1] pair_ubar,
                            const cnp.int64_t[::1] pair_offsets,
                            Py_ssize_t n_acc_total):
    """Per-draw log stability probabilities for several markets at once.

    Markets are concatenated: startups and accelerators carry global
    indices, unmatched pairs are grouped per market by ``pair_offsets``.
    Returns (n_markets, T).
    """
    cdef Py_ssize_t T = draws.shape[0], S = draws.shape[1]
    cdef Py_ssize_t K = pair_offsets.shape[0] - 1
    g_arr = np.zeros((K, T))
    cdef double[:, ::1] g = g_arr
    um_arr = np.empty(S)
    mins_arr = np.empty(n_acc_total)
    cdef double[::1] um = um_arr
    cdef double[::1] mins = mins_arr
    cdef Py_ssize_t t, s, a, k, p
    cdef double acc, thr
    for t in range(T):
        for s in range(S):
            um[s] = ubar_matched[s] + draws[t, s]
        for a in range(n_acc_total):
            mins[a] = INFINITY
        for s in range(S):
            a = assign_global[s]
            if um[s] < mins[a]:
                mins[a] = um[s]
        for k in range(K):
            acc = 0.0
            for p in range(pair_offsets[k], pair_offsets[k + 1]):
                thr = um[pair_s[p]]
                if mins[pair_a[p]] > thr:
                    thr = mins[pair_a[p]]
                acc += _log_phi(thr - pair_ubar[p])
            g[k, t] = acc
    return g_arr
