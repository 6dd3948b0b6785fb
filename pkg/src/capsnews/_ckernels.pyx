# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: valid 1-D convolution and global max pooling.

Same contracts as the numpy fallbacks in ``capsnews.kernels``; all arrays
are C-contiguous float64.  The convolutions pack the sliding windows into
one matrix and run a single BLAS dgemm, which is what dominates; the
pooling scan is a plain typed loop.
"""

from libc.string cimport memcpy

import numpy as np

from scipy.linalg.cython_blas cimport dgemm


cdef void _gemm_rowmajor(char ta, char tb, int m, int n, int k,
                         double* a, int lda, double* b, int ldb,
                         double* c, int ldc) noexcept nogil:
    # Row-major C(m,n) = op(A)(m,k) . op(B)(k,n), phrased for Fortran BLAS
    # by computing C^T = op(B)^T . op(A)^T in column-major.
    cdef double one = 1.0, zero = 0.0
    dgemm(&tb, &ta, &n, &m, &k, &one, b, &ldb, a, &lda, &zero, c, &ldc)


cdef void _pack_windows(double[:, ::1] x, double[:, ::1] win,
                        Py_ssize_t T, Py_ssize_t S, Py_ssize_t D) noexcept nogil:
    # win[t] = x[t:t+S] flattened; rows stay contiguous so each segment is a memcpy
    cdef Py_ssize_t t, i
    for t in range(T):
        for i in range(S):
            memcpy(&win[t, i * D], &x[t + i, 0], D * sizeof(double))


def conv1d_forward(double[:, ::1] x, double[:, :, ::1] w, double[::1] b):
    """out[t, k] = b[k] + sum_{i,d} x[t+i, d] * w[k, i, d]"""
    cdef Py_ssize_t L = x.shape[0], D = x.shape[1]
    cdef Py_ssize_t K = w.shape[0], S = w.shape[1]
    cdef Py_ssize_t T = L - S + 1
    cdef Py_ssize_t N = S * D
    win_arr = np.empty((T, N), dtype=np.float64)
    out_arr = np.empty((T, K), dtype=np.float64)
    cdef double[:, ::1] win = win_arr
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t t, k
    with nogil:
        _pack_windows(x, win, T, S, D)
        # out = win (T,N) . w^T (N,K); w is (K,S,D) which flattens to (K,N)
        _gemm_rowmajor(b'N', b'T', <int>T, <int>K, <int>N,
                       &win[0, 0], <int>N, &w[0, 0, 0], <int>N, &out[0, 0], <int>K)
        for t in range(T):
            for k in range(K):
                out[t, k] += b[k]
    return out_arr


def conv1d_backward(double[:, ::1] x, double[:, :, ::1] w, double[:, ::1] gout):
    """Gradients of conv1d_forward w.r.t. input, filters and bias."""
    cdef Py_ssize_t L = x.shape[0], D = x.shape[1]
    cdef Py_ssize_t K = w.shape[0], S = w.shape[1]
    cdef Py_ssize_t T = gout.shape[0]
    cdef Py_ssize_t N = S * D
    win_arr = np.empty((T, N), dtype=np.float64)
    spread_arr = np.empty((T, N), dtype=np.float64)
    gx_arr = np.zeros((L, D), dtype=np.float64)
    gw_arr = np.empty((K, S, D), dtype=np.float64)
    gb_arr = np.zeros(K, dtype=np.float64)
    cdef double[:, ::1] win = win_arr
    cdef double[:, ::1] spread = spread_arr
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t t, k, i, d
    with nogil:
        _pack_windows(x, win, T, S, D)
        # gw = gout^T (K,T) . win (T,N)
        _gemm_rowmajor(b'T', b'N', <int>K, <int>N, <int>T,
                       &gout[0, 0], <int>K, &win[0, 0], <int>N, &gw[0, 0, 0], <int>N)
        # spread = gout (T,K) . w (K,N); row t holds the window-t input gradient
        _gemm_rowmajor(b'N', b'N', <int>T, <int>N, <int>K,
                       &gout[0, 0], <int>K, &w[0, 0, 0], <int>N, &spread[0, 0], <int>N)
        for t in range(T):
            for k in range(K):
                gb[k] += gout[t, k]
            for i in range(S):
                for d in range(D):
                    gx[t + i, d] += spread[t, i * D + d]
    return gx_arr, gw_arr, gb_arr


def maxpool_forward(double[:, ::1] x):
    """Per-column max over rows; returns (values, first argmax indices)."""
    cdef Py_ssize_t L = x.shape[0], K = x.shape[1]
    out_arr = np.empty(K, dtype=np.float64)
    idx_arr = np.zeros(K, dtype=np.int64)
    cdef double[::1] out = out_arr
    cdef long long[::1] idx = idx_arr
    cdef Py_ssize_t t, k
    cdef double v
    for k in range(K):
        out[k] = x[0, k]
    for t in range(1, L):
        for k in range(K):
            v = x[t, k]
            if v > out[k]:
                out[k] = v
                idx[k] = t
    return out_arr, idx_arr
