# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: valid-mode conv2d forward/backward, 2x2 maxpool,
and the boosted-tree split scan.  A numpy implementation of the same API
lives in kernels_numpy.py; the backend module picks one at import time.
"""

import numpy as np

cimport numpy as cnp

ctypedef fused real:
    float
    double


def conv2d_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] w, real[::1] b):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t O = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t Ho = H - K + 1, Wo = W - K + 1
    dtype = np.float32 if real is float else np.float64
    y_arr = np.empty((N, O, Ho, Wo), dtype=dtype)
    cdef real[:, :, :, ::1] y = y_arr
    cdef Py_ssize_t n, o, c, i, j, ki, kj
    cdef real acc
    with nogil:
        for n in range(N):
            for o in range(O):
                for i in range(Ho):
                    for j in range(Wo):
                        acc = b[o]
                        for c in range(C):
                            for ki in range(K):
                                for kj in range(K):
                                    acc = acc + x[n, c, i + ki, j + kj] * w[o, c, ki, kj]
                        y[n, o, i, j] = acc
    return y_arr


def conv2d_backward(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                    real[:, :, :, ::1] gy):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t O = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t Ho = gy.shape[2], Wo = gy.shape[3]
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.zeros((N, C, H, W), dtype=dtype)
    gw_arr = np.zeros((O, C, K, K), dtype=dtype)
    gb_arr = np.zeros(O, dtype=dtype)
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef real[:, :, :, ::1] gw = gw_arr
    cdef real[::1] gb = gb_arr
    cdef Py_ssize_t n, o, c, i, j, ki, kj
    cdef real g
    with nogil:
        for n in range(N):
            for o in range(O):
                for i in range(Ho):
                    for j in range(Wo):
                        g = gy[n, o, i, j]
                        gb[o] += g
                        for c in range(C):
                            for ki in range(K):
                                for kj in range(K):
                                    gw[o, c, ki, kj] += x[n, c, i + ki, j + kj] * g
                                    gx[n, c, i + ki, j + kj] += w[o, c, ki, kj] * g
    return gx_arr, gw_arr, gb_arr


def maxpool2_forward(real[:, :, :, ::1] x):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = H // 2, Wo = W // 2
    dtype = np.float32 if real is float else np.float64
    y_arr = np.empty((N, C, Ho, Wo), dtype=dtype)
    arg_arr = np.empty((N, C, Ho, Wo), dtype=np.int8)
    cdef real[:, :, :, ::1] y = y_arr
    cdef signed char[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t n, c, i, j, di, dj
    cdef real best, v
    cdef signed char bi
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(Ho):
                    for j in range(Wo):
                        best = x[n, c, 2 * i, 2 * j]
                        bi = 0
                        for di in range(2):
                            for dj in range(2):
                                v = x[n, c, 2 * i + di, 2 * j + dj]
                                if v > best:
                                    best = v
                                    bi = <signed char> (2 * di + dj)
                        y[n, c, i, j] = best
                        arg[n, c, i, j] = bi
    return y_arr, arg_arr


def maxpool2_backward(real[:, :, :, ::1] gy, signed char[:, :, :, ::1] arg,
                      Py_ssize_t H, Py_ssize_t W):
    cdef Py_ssize_t N = gy.shape[0], C = gy.shape[1]
    cdef Py_ssize_t Ho = gy.shape[2], Wo = gy.shape[3]
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.zeros((N, C, H, W), dtype=dtype)
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t n, c, i, j
    cdef signed char a
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(Ho):
                    for j in range(Wo):
                        a = arg[n, c, i, j]
                        gx[n, c, 2 * i + a // 2, 2 * j + a % 2] += gy[n, c, i, j]
    return gx_arr


def split_scan(double[:, ::1] xs, double[:, ::1] gs, double[:, ::1] hs,
               double lam):
    """Scan presorted per-feature columns for the best second-order split.

    xs/gs/hs are (m, f): feature values sorted ascending per column with
    the sample gradients/hessians gathered in the same order.  Returns
    (raw_gain, feature, threshold) where raw_gain is the unhalved,
    unsubtracted score GL^2/(HL+lam) + GR^2/(HR+lam); the caller subtracts
    the parent score and halves.
    """
    cdef Py_ssize_t m = xs.shape[0], f = xs.shape[1]
    cdef Py_ssize_t i, j
    cdef double G = 0.0, H = 0.0
    cdef double gl, hl, score, best = -1e308, best_thr = 0.0
    cdef Py_ssize_t best_feat = -1
    for i in range(m):
        G += gs[i, 0]
        H += hs[i, 0]
    with nogil:
        for j in range(f):
            gl = 0.0
            hl = 0.0
            for i in range(m - 1):
                gl += gs[i, j]
                hl += hs[i, j]
                if xs[i, j] < xs[i + 1, j]:
                    score = gl * gl / (hl + lam) + (G - gl) * (G - gl) / (H - hl + lam)
                    if score > best:
                        best = score
                        best_feat = j
                        best_thr = 0.5 * (xs[i, j] + xs[i + 1, j])
    return best, best_feat, best_thr
