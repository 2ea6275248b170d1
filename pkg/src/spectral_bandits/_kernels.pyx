# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-round kernels. Same contract as ``_kernels_py``."""
import numpy as np

from libc.math cimport hypot
from scipy.linalg.cython_blas cimport ddot, dger, dgemv, dsymv

BACKEND = "cython"


def sherman_morrison(double[:, ::1] v_inv, const double[::1] x, double[::1] u_out):
    cdef int n = x.shape[0]
    cdef int one = 1
    cdef double alpha = 1.0, beta = 0.0, s, scale
    cdef char uplo = b'U'
    # symmetric: row-major upper == column-major lower, dsymv reads one triangle
    dsymv(&uplo, &n, &alpha, &v_inv[0, 0], &n, <double*>&x[0], &one, &beta, &u_out[0], &one)
    s = ddot(&n, <double*>&x[0], &one, &u_out[0], &one)
    scale = -1.0 / (1.0 + s)
    dger(&n, &n, &scale, &u_out[0], &one, &u_out[0], &one, &v_inv[0, 0], &n)
    return s


def chol_update(double[:, ::1] upper, double[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t k, j
    cdef double ukk, xk, r, c, s, uj
    for k in range(n):
        ukk = upper[k, k]
        xk = x[k]
        r = hypot(ukk, xk)
        c = r / ukk
        s = xk / ukk
        upper[k, k] = r
        for j in range(k + 1, n):
            uj = (upper[k, j] + s * x[j]) / c
            upper[k, j] = uj
            x[j] = c * x[j] - s * uj
    return upper


def quad_form(double[:, ::1] a, const double[::1] x):
    cdef int n = x.shape[0]
    cdef int one = 1
    cdef double alpha = 1.0, beta = 0.0
    cdef char uplo = b'U'
    cdef double[::1] tmp = np.empty(n, dtype=np.float64)
    dsymv(&uplo, &n, &alpha, &a[0, 0], &n, <double*>&x[0], &one, &beta, &tmp[0], &one)
    return ddot(&n, <double*>&x[0], &one, &tmp[0], &one)


def downdate_sq_widths(const double[:, ::1] arms, const double[::1] u, double s,
                       double[::1] sq_widths):
    cdef int n_arms = arms.shape[0]
    cdef int dim = arms.shape[1]
    cdef int one = 1
    cdef double alpha = 1.0, beta = 0.0, inv = 1.0 / (1.0 + s), val
    cdef char trans = b'T'
    cdef Py_ssize_t a
    z_arr = np.empty(n_arms, dtype=np.float64)
    cdef double[::1] z = z_arr
    # row-major (n_arms, dim) is column-major (dim, n_arms): z = A^T u in Fortran terms
    dgemv(&trans, &dim, &n_arms, &alpha, <double*>&arms[0, 0], &dim,
          <double*>&u[0], &one, &beta, &z[0], &one)
    for a in range(n_arms):
        val = sq_widths[a] - z[a] * z[a] * inv
        sq_widths[a] = val if val > 0.0 else 0.0
    return z_arr



def rank_one_add(double[:, ::1] a, const double[::1] x, double alpha):
    cdef int n = x.shape[0]
    cdef int one = 1
    dger(&n, &n, &alpha, <double*>&x[0], &one, <double*>&x[0], &one, &a[0, 0], &n)
