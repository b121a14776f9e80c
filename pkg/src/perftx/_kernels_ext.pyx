"""Compiled squared-exponential kernel core (mirrors ``_kernels_py``)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def se_cross(const double[:, ::1] X1, const double[:, ::1] X2, const double[::1] inv_ls):
    cdef Py_ssize_t n1 = X1.shape[0], n2 = X2.shape[0], d = X1.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double s, t
    out = np.empty((n1, n2))
    cdef double[:, ::1] K = out
    for i in range(n1):
        for j in range(n2):
            s = 0.0
            for k in range(d):
                t = (X1[i, k] - X2[j, k]) * inv_ls[k]
                s += t * t
            K[i, j] = exp(-0.5 * s)
    return out


def se_gram(const double[:, ::1] X, const double[::1] inv_ls):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double s, t, v
    out = np.empty((n, n))
    cdef double[:, ::1] K = out
    for i in range(n):
        K[i, i] = 1.0
        for j in range(i):
            s = 0.0
            for k in range(d):
                t = (X[i, k] - X[j, k]) * inv_ls[k]
                s += t * t
            v = exp(-0.5 * s)
            K[i, j] = v
            K[j, i] = v
    return out


def weighted_sqdist_sums(const double[:, ::1] M, const double[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double m, t
    out = np.zeros(d)
    cdef double[::1] acc = out
    for i in range(n):
        for j in range(i):
            m = M[i, j] + M[j, i]
            if m == 0.0:
                continue
            for k in range(d):
                t = X[i, k] - X[j, k]
                acc[k] += m * t * t
    return out
