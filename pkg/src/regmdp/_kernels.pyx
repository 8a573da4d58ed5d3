# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rollout kernels; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _first_above(const double[:, ::1] table, Py_ssize_t row, double u) noexcept nogil:
    cdef Py_ssize_t j = 0
    cdef Py_ssize_t n = table.shape[1]
    while j < n and table[row, j] <= u:
        j += 1
    return j


def sample_starts(const double[::1] nu_cdf, const double[:, ::1] pi_cdf, const double[:, ::1] p_cdf,
                  Py_ssize_t num_actions, double accept, Py_ssize_t horizon,
                  const double[:, ::1] U, Py_ssize_t col0):
    cdef Py_ssize_t n = U.shape[0]
    cdef Py_ssize_t S = nu_cdf.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] res = out
    cdef Py_ssize_t i, k, j, s, a, c
    with nogil:
        for i in range(n):
            j = 0
            while j < S and nu_cdf[j] <= U[i, col0]:
                j += 1
            s = j
            for k in range(horizon):
                c = col0 + 1 + 3 * k
                if U[i, c] < accept:
                    break
                a = _first_above(pi_cdf, s, U[i, c + 1])
                s = _first_above(p_cdf, s * num_actions + a, U[i, c + 2])
            res[i] = s
    return out


def rollout(const long long[::1] s0, const long long[::1] a0, const double[:, ::1] reward,
            const double[:, ::1] pi_cdf, const double[:, ::1] p_cdf, Py_ssize_t num_actions,
            const double[::1] pen, const double[::1] disc, Py_ssize_t horizon,
            const double[:, ::1] U, Py_ssize_t col0, bint include_t0):
    cdef Py_ssize_t n = U.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    cdef Py_ssize_t i, t, s, a
    cdef double q
    with nogil:
        for i in range(n):
            s = s0[i]
            a = a0[i]
            q = reward[s, a]
            if include_t0:
                q = q - pen[s]
            if horizon > 1:
                s = _first_above(p_cdf, s * num_actions + a, U[i, col0])
                for t in range(1, horizon):
                    a = _first_above(pi_cdf, s, U[i, col0 + 2 * t - 1])
                    q = q + disc[t] * (reward[s, a] - pen[s])
                    if t < horizon - 1:
                        s = _first_above(p_cdf, s * num_actions + a, U[i, col0 + 2 * t])
            res[i] = q
    return out
