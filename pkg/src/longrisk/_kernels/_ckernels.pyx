# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path kernels; same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport fabs

cnp.import_array()


def sample_paths(const double[:, :, ::1] cum, long x0, const double[:, ::1] u):
    cdef Py_ssize_t N = u.shape[0], H = u.shape[1], K = cum.shape[0], n = cum.shape[1]
    cdef Py_ssize_t i, s, y, kk
    cdef int x
    cdef double ui
    out = np.empty((N, H + 1), dtype=np.int32)
    cdef int[:, ::1] o = out
    for i in range(N):
        x = <int>x0
        o[i, 0] = x
        for s in range(H):
            kk = 0 if K == 1 else s
            ui = u[i, s]
            y = 0
            while y < n and cum[kk, x, y] <= ui:
                y += 1
            x = <int>y
            o[i, s + 1] = x
    return out


def strategy_gains(const int[:, ::1] states, const double[:, ::1] incr, const double[::1] weights,
                   const signed char[:, :, ::1] strategies, const double[::1] a_grid, int num_threads=1):
    cdef Py_ssize_t N = incr.shape[0], H = incr.shape[1], K = strategies.shape[0], A = a_grid.shape[0]
    cdef Py_ssize_t i, s, k, j
    cdef double g, sup, v, w
    trunc = np.zeros(K)
    trunc_sq = np.zeros(K)
    exceed = np.zeros((K, A))
    cdef double[::1] tr = trunc
    cdef double[::1] tq = trunc_sq
    cdef double[:, ::1] ex = exceed
    if num_threads < 1:
        num_threads = 1
    # one strategy per thread; each sum runs over paths in order
    for k in prange(K, nogil=True, num_threads=num_threads, schedule="static"):
        for i in range(N):
            g = 0.0
            sup = 0.0
            for s in range(H):
                g = g + strategies[k, s, states[i, s]] * incr[i, s]
                if fabs(g) > sup:
                    sup = fabs(g)
            v = fabs(g)
            if v > 1.0:
                v = 1.0
            w = weights[i]
            tr[k] += w * v
            tq[k] += w * v * v
            for j in range(A):
                if sup > a_grid[j]:
                    ex[k, j] += w
    return trunc, trunc_sq, exceed
