# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled destination-balancing sweep. Mirrors ``_fallback.balance_columns``."""

from libc.math cimport fabs, log, exp, INFINITY

import numpy as np


def balance_columns(const double[:, ::1] W, const double[::1] R, const double[::1] target,
                    double[::1] b, double tol, long max_iter):
    cdef Py_ssize_t N = W.shape[0]
    cdef Py_ssize_t i, j
    cdef long it = 0
    cdef double res, r, s, g
    cdef Py_ssize_t nact
    cdef double[::1] q = np.empty(N)
    cdef double[::1] col = np.empty(N)

    while True:
        for i in range(N):
            if R[i] > 0.0:
                s = 0.0
                for j in range(N):
                    s += W[i, j] * b[j]
                q[i] = R[i] / s if s > 0.0 else INFINITY
            else:
                q[i] = 0.0
        for j in range(N):
            col[j] = 0.0
        for i in range(N):
            if q[i] != 0.0:
                for j in range(N):
                    col[j] += q[i] * W[i, j]
        res = 0.0
        for j in range(N):
            col[j] *= b[j]
            if target[j] > 0.0:
                r = fabs(col[j] - target[j]) / target[j]
            else:
                r = fabs(col[j])
            if r != r:
                r = INFINITY
            if r > res:
                res = r
        if res <= tol or it >= max_iter or res == INFINITY:
            return it, res
        g = 0.0
        nact = 0
        for j in range(N):
            if target[j] > 0.0:
                b[j] *= target[j] / col[j]
                g += log(b[j])
                nact += 1
            else:
                b[j] = 0.0
        g = exp(g / nact)
        for j in range(N):
            b[j] /= g
        it += 1
