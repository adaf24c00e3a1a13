# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair-table kernels.

Same contracts as _pairops_np; dispatches p in {2, 3, 1.5} to cheap
arithmetic and everything else to libc pow.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt

cnp.import_array()


cdef inline double _abs_pow(double d, double p, int mode) nogil:
    cdef double a = fabs(d)
    if mode == 1:
        return d * d
    if mode == 2:
        return a * a * a
    if mode == 3:
        return a * sqrt(a)
    return pow(a, p)


cdef inline double _signed_pow(double d, double q, int mode) nogil:
    # mode keyed on p = q + 1 to share dispatch with _abs_pow
    if mode == 1:
        return d
    if mode == 2:
        return d * fabs(d)
    if mode == 3:
        if d >= 0:
            return sqrt(d)
        return -sqrt(-d)
    if d >= 0:
        return pow(d, q)
    return -pow(-d, q)


cdef inline int _mode(double p) nogil:
    if p == 2.0:
        return 1
    if p == 3.0:
        return 2
    if p == 1.5:
        return 3
    return 0


def pair_power_sum(const double[:, ::1] W, const double[::1] u, double p):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i, j
    cdef double total = 0.0, d
    cdef int mode = _mode(p)
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                d = u[i] - u[j]
                total += W[i, j] * _abs_pow(d, p, mode)
    return total


def pair_grad(const double[:, ::1] W, const double[::1] u, double p):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i, j
    cdef double q = p - 1.0
    cdef double s, d
    cdef int mode = _mode(p)
    out = np.zeros(n)
    cdef double[::1] g = out
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                d = u[i] - u[j]
                s = W[i, j] * _signed_pow(d, q, mode)
                g[i] += 2.0 * s
                g[j] -= 2.0 * s
    return out


def pair_pairing(const double[:, ::1] W, const double[::1] u, const double[::1] v, double p):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i, j
    cdef double q = p - 1.0
    cdef double total = 0.0
    cdef int mode = _mode(p)
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                total += 2.0 * W[i, j] * _signed_pow(u[i] - u[j], q, mode) * (v[i] - v[j])
    return total
