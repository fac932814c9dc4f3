"""Pure numpy versions of the assignment kernels.

Arithmetic order mirrors ``_ckernels.pyx`` so both backends label every
point identically.
"""
import numpy as np

_CHUNK = 1 << 16


def _offsets(sites, weights):
    acc = sites[:, 0] * sites[:, 0]
    for a in range(1, sites.shape[1]):
        acc = acc + sites[:, a] * sites[:, a]
    return acc - weights


def _dot(points, site):
    dot = points[:, 0] * site[0]
    for a in range(1, points.shape[1]):
        dot = dot + points[:, a] * site[a]
    return dot


def _sqnorm(points):
    xx = points[:, 0] * points[:, 0]
    for a in range(1, points.shape[1]):
        xx = xx + points[:, a] * points[:, a]
    return xx


def assign(points, sites, weights):
    """Return (labels, hmin): lowest-index argmin of power and its value."""
    n = points.shape[0]
    off = _offsets(sites, weights)
    labels = np.empty(n, dtype=np.intp)
    hmin = np.empty(n, dtype=np.float64)
    for lo in range(0, n, _CHUNK):
        pts = points[lo:lo + _CHUNK]
        gmin = np.full(pts.shape[0], np.inf)
        arg = np.zeros(pts.shape[0], dtype=np.intp)
        for j in range(sites.shape[0]):
            g = off[j] - 2.0 * _dot(pts, sites[j])
            better = g < gmin
            gmin = np.where(better, g, gmin)
            arg[better] = j
        labels[lo:lo + _CHUNK] = arg
        hmin[lo:lo + _CHUNK] = _sqnorm(pts) + gmin
    return labels, hmin


def assign_pair(points, sites, weights):
    """Return (labels, second, hmin, gap) where gap = h_second - h_best >= 0."""
    n = points.shape[0]
    off = _offsets(sites, weights)
    labels = np.empty(n, dtype=np.intp)
    second = np.empty(n, dtype=np.intp)
    hmin = np.empty(n, dtype=np.float64)
    gap = np.empty(n, dtype=np.float64)
    for lo in range(0, n, _CHUNK):
        pts = points[lo:lo + _CHUNK]
        m = pts.shape[0]
        g1 = np.full(m, np.inf)
        g2 = np.full(m, np.inf)
        arg = np.zeros(m, dtype=np.intp)
        arg2 = np.full(m, -1, dtype=np.intp)
        for j in range(sites.shape[0]):
            g = off[j] - 2.0 * _dot(pts, sites[j])
            better = g < g1
            runner = ~better & (g < g2)
            g2 = np.where(better, g1, np.where(runner, g, g2))
            arg2 = np.where(better, arg if j > 0 else -1, np.where(runner, j, arg2))
            g1 = np.where(better, g, g1)
            arg = np.where(better, j, arg)
        labels[lo:lo + _CHUNK] = arg
        second[lo:lo + _CHUNK] = arg2
        hmin[lo:lo + _CHUNK] = _sqnorm(pts) + g1
        gap[lo:lo + _CHUNK] = g2 - g1
    return labels, second, hmin, gap
