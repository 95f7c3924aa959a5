# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled grid kernels for the teaching loop.

Both functions return ``(argmax, sumsq)`` for the residual ``f - t`` where
argmax is the first index of the largest absolute residual.  Summation runs
in grid order so results are reproducible run to run.
"""
from libc.math cimport exp, fabs


def residual_stats(const double[::1] f, const double[::1] t):
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t j, best = 0
    cdef double r, a, best_abs = -1.0, ss = 0.0
    for j in range(n):
        r = f[j] - t[j]
        ss += r * r
        a = fabs(r)
        if a > best_abs:
            best_abs = a
            best = j
    return best, ss


def kernel_step(double[::1] f, const double[::1] t, const double[:, ::1] coords,
                Py_ssize_t center, double scale, double inv_b2):
    """In place ``f[z] -= scale * exp(-|coords[center] - coords[z]|^2 * inv_b2)``."""
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t dim = coords.shape[1]
    cdef Py_ssize_t j, k, best = 0
    cdef double r, a, diff, d2, best_abs = -1.0, ss = 0.0
    cdef double c0 = coords[center, 0]
    cdef double c1 = coords[center, 1] if dim > 1 else 0.0
    for j in range(n):
        diff = coords[j, 0] - c0
        d2 = diff * diff
        if dim > 1:
            diff = coords[j, 1] - c1
            d2 = d2 + diff * diff
            for k in range(2, dim):
                diff = coords[j, k] - coords[center, k]
                d2 = d2 + diff * diff
        f[j] = f[j] - scale * exp(-d2 * inv_b2)
        r = f[j] - t[j]
        ss += r * r
        a = fabs(r)
        if a > best_abs:
            best_abs = a
            best = j
    return best, ss
