# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled power-diagram assignment kernels.

Must stay bitwise identical to ``_pykernels``: per-site dot products are
accumulated dimension by dimension, starting from the first coordinate.
"""
import numpy as np

from libc.math cimport INFINITY


def _offsets(const double[:, ::1] sites, const double[::1] weights):
    cdef Py_ssize_t t = sites.shape[0], d = sites.shape[1], j, a
    cdef double acc
    out = np.empty(t, dtype=np.float64)
    cdef double[::1] o = out
    for j in range(t):
        acc = sites[j, 0] * sites[j, 0]
        for a in range(1, d):
            acc = acc + sites[j, a] * sites[j, a]
        o[j] = acc - weights[j]
    return out


def assign(const double[:, ::1] points, const double[:, ::1] sites,
           const double[::1] weights):
    """Return (labels, hmin): lowest-index argmin of power and its value."""
    cdef Py_ssize_t n = points.shape[0], d = points.shape[1], t = sites.shape[0]
    cdef Py_ssize_t k, j, a, arg
    cdef double g, gmin, dot, xx
    cdef double[::1] off = _offsets(sites, weights)
    labels = np.empty(n, dtype=np.intp)
    hmin = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t[::1] lab = labels
    cdef double[::1] hm = hmin
    with nogil:
        for k in range(n):
            gmin = INFINITY
            arg = 0
            for j in range(t):
                dot = points[k, 0] * sites[j, 0]
                for a in range(1, d):
                    dot = dot + points[k, a] * sites[j, a]
                g = off[j] - 2.0 * dot
                if g < gmin:
                    gmin = g
                    arg = j
            xx = points[k, 0] * points[k, 0]
            for a in range(1, d):
                xx = xx + points[k, a] * points[k, a]
            lab[k] = arg
            hm[k] = xx + gmin
    return labels, hmin


def assign_pair(const double[:, ::1] points, const double[:, ::1] sites,
                const double[::1] weights):
    """Return (labels, second, hmin, gap) where gap = h_second - h_best >= 0."""
    cdef Py_ssize_t n = points.shape[0], d = points.shape[1], t = sites.shape[0]
    cdef Py_ssize_t k, j, a, arg, arg2
    cdef double g, g1, g2, dot, xx
    cdef double[::1] off = _offsets(sites, weights)
    labels = np.empty(n, dtype=np.intp)
    second = np.empty(n, dtype=np.intp)
    hmin = np.empty(n, dtype=np.float64)
    gap = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t[::1] lab = labels
    cdef Py_ssize_t[::1] sec = second
    cdef double[::1] hm = hmin
    cdef double[::1] gp = gap
    with nogil:
        for k in range(n):
            g1 = INFINITY
            g2 = INFINITY
            arg = 0
            arg2 = -1
            for j in range(t):
                dot = points[k, 0] * sites[j, 0]
                for a in range(1, d):
                    dot = dot + points[k, a] * sites[j, a]
                g = off[j] - 2.0 * dot
                if g < g1:
                    g2 = g1
                    arg2 = arg if j > 0 else -1
                    g1 = g
                    arg = j
                elif g < g2:
                    g2 = g
                    arg2 = j
            xx = points[k, 0] * points[k, 0]
            for a in range(1, d):
                xx = xx + points[k, a] * points[k, a]
            lab[k] = arg
            sec[k] = arg2
            hm[k] = xx + g1
            gp[k] = g2 - g1
    return labels, second, hmin, gap
