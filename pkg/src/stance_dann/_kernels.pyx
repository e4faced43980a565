# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled fused conv1d + ReLU + max-over-time kernels.

Same contract as the pure backend in kernels.py. The forward pass never
materializes the [positions, maps] activation matrix; it streams positions
and keeps the per-map running max, which is also why it wins on the short
sequences that dominate test and benchmark workloads.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv1d_maxpool_forward(
    const double[:, ::1] x,
    const double[:, :, ::1] filt,
    const double[::1] bias,
):
    cdef Py_ssize_t L = x.shape[0]
    cdef Py_ssize_t D = x.shape[1]
    cdef Py_ssize_t W = filt.shape[0]
    cdef Py_ssize_t M = filt.shape[2]
    cdef Py_ssize_t Lp = L if L >= W else W
    cdef Py_ssize_t P = Lp - W + 1
    cdef Py_ssize_t p, w, d, m, row
    cdef double a, v

    pooled_arr = np.zeros(M, dtype=np.float64)
    argmax_arr = np.zeros(M, dtype=np.int64)
    zrow_arr = np.empty(M, dtype=np.float64)
    cdef double[::1] pooled = pooled_arr
    cdef cnp.int64_t[::1] argmax = argmax_arr
    cdef double[::1] zrow = zrow_arr

    for p in range(P):
        for m in range(M):
            zrow[m] = 0.0
        for w in range(W):
            row = p + w
            if row >= L:
                continue  # implicit zero padding for short inputs
            for d in range(D):
                a = x[row, d]
                if a == 0.0:
                    continue
                for m in range(M):
                    zrow[m] += a * filt[w, d, m]
        for m in range(M):
            v = zrow[m] + bias[m]
            if v < 0.0:
                v = 0.0
            if p == 0 or v > pooled[m]:
                pooled[m] = v
                argmax[m] = p
    return pooled_arr, argmax_arr


def conv1d_maxpool_backward(
    const double[::1] dpooled,
    const double[:, ::1] x,
    const double[:, :, ::1] filt,
    const cnp.int64_t[::1] argmax,
    const double[::1] active,
):
    cdef Py_ssize_t L = x.shape[0]
    cdef Py_ssize_t D = x.shape[1]
    cdef Py_ssize_t W = filt.shape[0]
    cdef Py_ssize_t M = filt.shape[2]
    cdef Py_ssize_t w, d, m, row, p
    cdef double g

    dx_arr = np.zeros((L, D), dtype=np.float64)
    dfilt_arr = np.zeros((W, D, M), dtype=np.float64)
    dbias_arr = np.zeros(M, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[:, :, ::1] dfilt = dfilt_arr
    cdef double[::1] dbias = dbias_arr

    for m in range(M):
        g = dpooled[m] * active[m]
        dbias[m] = g
        if g == 0.0:
            continue
        p = argmax[m]
        for w in range(W):
            row = p + w
            if row >= L:
                continue
            for d in range(D):
                dfilt[w, d, m] = g * x[row, d]
                dx[row, d] += g * filt[w, d, m]
    return dx_arr, dfilt_arr, dbias_arr
