# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the dense-network hot path.

Same surface as `_kernels_py`: matrix products go through BLAS dgemm,
bias/ReLU/mask passes are fused C loops. Row-major operands are handled
with the usual transpose trick (row-major C = A @ B equals column-major
C^T = B^T @ A^T).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "compiled"


cdef void _dgemm_rowmajor(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                          bint trans_a, bint trans_b) noexcept nogil:
    # c (m, n) = op(a) @ op(b), all row-major: swap operands for Fortran BLAS
    cdef char ta = b'T' if trans_b else b'N'
    cdef char tb = b'T' if trans_a else b'N'
    cdef int m = c.shape[1]
    cdef int n = c.shape[0]
    cdef int k = a.shape[0] if trans_a else a.shape[1]
    cdef int lda = b.shape[1]
    cdef int ldb = a.shape[1]
    cdef int ldc = c.shape[1]
    cdef double one = 1.0, zero = 0.0
    if m == 0 or n == 0:
        return
    dgemm(&ta, &tb, &m, &n, &k, &one, &b[0, 0], &lda, &a[0, 0], &ldb, &zero, &c[0, 0], &ldc)


def affine_act(cnp.ndarray[double, ndim=2] x, cnp.ndarray[double, ndim=2] w,
               cnp.ndarray[double, ndim=1] b, bint relu):
    """y = x @ w + b, clamped at zero when `relu` is set.

    x (n, din), w (din, dout), b (dout,).
    """
    cdef Py_ssize_t n = x.shape[0], dout = w.shape[1]
    cdef cnp.ndarray[double, ndim=2] y = np.empty((n, dout), dtype=np.float64)
    cdef double[:, ::1] xv = x, wv = w, yv = y
    cdef double[::1] bv = b
    cdef Py_ssize_t i, j
    cdef double val
    with nogil:
        _dgemm_rowmajor(xv, wv, yv, False, False)
        for i in range(n):
            for j in range(dout):
                val = yv[i, j] + bv[j]
                if relu and val < 0.0:
                    val = 0.0
                yv[i, j] = val
    return y


def affine_backward_masked(cnp.ndarray[double, ndim=2] x, cnp.ndarray[double, ndim=2] w,
                           cnp.ndarray[double, ndim=2] dout, act):
    """Gradients of affine_act: returns (dx, dw, db).

    When `act` (the ReLU output) is given, `dout` is first zeroed in
    place wherever the unit was dead (act <= 0, i.e. pre-activation <= 0).
    """
    cdef Py_ssize_t n = x.shape[0], din = x.shape[1], dcols = w.shape[1]
    cdef cnp.ndarray[double, ndim=2] dx = np.empty((n, din), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] dw = np.empty((din, dcols), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] db = np.zeros(dcols, dtype=np.float64)
    cdef double[:, ::1] xv = x, wv = w, dov = dout, dxv = dx, dwv = dw
    cdef double[::1] dbv = db
    cdef double[:, ::1] av
    cdef bint masked = act is not None
    cdef Py_ssize_t i, j
    if masked:
        av = act
    with nogil:
        if masked:
            for i in range(n):
                for j in range(dcols):
                    if av[i, j] <= 0.0:
                        dov[i, j] = 0.0
        for i in range(n):
            for j in range(dcols):
                dbv[j] += dov[i, j]
        _dgemm_rowmajor(dov, wv, dxv, False, True)   # dx = dout @ w.T
        _dgemm_rowmajor(xv, dov, dwv, True, False)   # dw = x.T @ dout
    return dx, dw, db


def adam_update(cnp.ndarray[double, ndim=1] param, cnp.ndarray[double, ndim=1] grad,
                cnp.ndarray[double, ndim=1] m, cnp.ndarray[double, ndim=1] v,
                long t, double lr, double beta1, double beta2, double eps):
    """One bias-corrected Adam update, in place on flat float64 arrays."""
    cdef double[::1] pv = param, gv = grad, mv = m, vv = v
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    cdef Py_ssize_t i
    cdef double g
    with nogil:
        for i in range(pv.shape[0]):
            g = gv[i]
            mv[i] = beta1 * mv[i] + (1.0 - beta1) * g
            vv[i] = beta2 * vv[i] + (1.0 - beta2) * g * g
            pv[i] -= lr * (mv[i] / c1) / (sqrt(vv[i] / c2) + eps)
