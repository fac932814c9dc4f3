"""Power diagrams: weighted squared-distance cells, halfspaces and 2-d polygons.

Cell ``i`` of ``(sites, w)`` is the set where ``|x - s_i|^2 - w_i`` is minimal.
Ties go to the lowest site index everywhere in this package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .measures import ConvexBody, Measure

MERGE_EPSILON_REL = 1e-9
COLLINEAR_TOL = 1e-12


def merge_epsilon(lo, hi) -> float:
    """Pairwise distance below which two sites count as merged."""
    return MERGE_EPSILON_REL * float(np.linalg.norm(np.asarray(hi) - np.asarray(lo)))


def min_pairwise_distance(sites: np.ndarray) -> float:
    sites = np.asarray(sites, dtype=float)
    if sites.shape[0] < 2:
        return np.inf
    diff = sites[:, None, :] - sites[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    dist[np.diag_indices_from(dist)] = np.inf
    return float(dist.min())


@dataclass(frozen=True)
class SiteConfig:
    """Distinct sites with strictly positive capacities."""

    sites: np.ndarray
    capacities: np.ndarray

    def __post_init__(self):
        sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        caps = np.atleast_1d(np.asarray(self.capacities, dtype=float))
        if caps.shape != (sites.shape[0],):
            raise ValueError("need exactly one capacity per site")
        if np.any(caps <= 0):
            raise ValueError("capacities must be strictly positive")
        if min_pairwise_distance(sites) <= 0:
            raise ValueError("sites must be pairwise distinct")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "capacities", caps)

    @property
    def dimension(self) -> int:
        return self.sites.shape[1]

    def __len__(self):
        return self.sites.shape[0]


def normalize_weights(weights, capacities) -> np.ndarray:
    """Shift ``weights`` along the diagonal so that ``weights . capacities == 0``."""
    w = np.asarray(weights, dtype=float)
    c = np.asarray(capacities, dtype=float)
    total = c.sum()
    for _ in range(2):
        w = w - np.dot(w, c) / total
    return w


@dataclass(frozen=True)
class PowerPartition:
    """Sites plus weights; cells are implicit argmin regions of power."""

    sites: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.shape != (sites.shape[0],):
            raise ValueError("need exactly one weight per site")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "weights", w)

    @property
    def dimension(self) -> int:
        return self.sites.shape[1]

    def __len__(self):
        return self.sites.shape[0]


def power_value(p: PowerPartition, i: int, x) -> float | np.ndarray:
    """``|x - s_i|^2 - w_i`` for a point or an ``(n, d)`` array of points."""
    x = np.asarray(x, dtype=float)
    diff = x - p.sites[i]
    return np.sum(diff * diff, axis=-1) - p.weights[i]


def classify(p: PowerPartition, x) -> int | np.ndarray:
    """Index of the cell containing ``x`` (an array of indices for many points)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    labels, _ = kernels.assign(np.atleast_2d(x), p.sites, p.weights)
    return int(labels[0]) if single else labels


def cell_halfspaces(p: PowerPartition, i: int) -> list:
    """Closed halfspaces ``n.x <= o`` whose intersection is cell ``i``.

    From ``h_i(x) <= h_j(x)``: ``2 (s_j - s_i).x <= |s_j|^2 - |s_i|^2 + w_i - w_j``.
    """
    si = p.sites[i]
    out = []
    for j in range(len(p)):
        if j == i:
            continue
        sj = p.sites[j]
        normal = 2.0 * (sj - si)
        offset = float(sj @ sj - si @ si + p.weights[i] - p.weights[j])
        out.append((normal, offset))
    return out


def cell_measure(p: PowerPartition, m: Measure) -> np.ndarray:
    """Mass of ``m`` in every cell, by classifying the cached samples."""
    if m.dimension != p.dimension:
        raise ValueError("measure and sites have different dimensions")
    labels, _ = kernels.assign(m.samples, p.sites, p.weights)
    return m.label_masses(labels, len(p))


# --- planar geometry ---------------------------------------------------------


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area; positive for counterclockwise vertex order."""
    poly = np.asarray(poly, dtype=float)
    if poly.shape[0] < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_polygon(poly: np.ndarray, normal, offset: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon to ``normal.x <= offset``."""
    poly = np.asarray(poly, dtype=float)
    if poly.shape[0] == 0:
        return poly
    normal = np.asarray(normal, dtype=float)
    scale = max(float(np.linalg.norm(normal)), 1e-300)
    vals = (poly @ normal - offset) / scale
    # absorb near-boundary vertices so collinear fragments do not survive
    vals[np.abs(vals) <= COLLINEAR_TOL] = 0.0
    out = []
    n = poly.shape[0]
    for k in range(n):
        a, b = poly[k], poly[(k + 1) % n]
        va, vb = vals[k], vals[(k + 1) % n]
        if va <= 0:
            out.append(a)
        if (va < 0 < vb) or (vb < 0 < va):
            s = va / (va - vb)
            out.append(a + s * (b - a))
    if len(out) < 3:
        return np.zeros((0, 2))
    out = np.array(out)
    keep = np.ones(len(out), dtype=bool)
    for k in range(len(out)):
        if np.linalg.norm(out[k] - out[(k + 1) % len(out)]) <= COLLINEAR_TOL * scale:
            keep[k] = False
    out = out[keep]
    if out.shape[0] < 3 or abs(polygon_area(out)) <= COLLINEAR_TOL:
        return np.zeros((0, 2))
    return out


def body_polygon(body: ConvexBody, segments: int = 256) -> np.ndarray:
    """Counterclockwise polygon for a planar body (balls are inscribed polygons)."""
    if body.dimension != 2:
        raise ValueError("polygons exist only in the plane")
    if body.kind == "box":
        (x0, y0), (x1, y1) = body.lo, body.hi
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
    if body.kind == "ball":
        c = np.asarray(body.params["center"])
        r = body.params["radius"]
        ang = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
        return c + r * np.c_[np.cos(ang), np.sin(ang)]
    poly = body_polygon(ConvexBody.box(body.lo - 1.0, body.hi + 1.0))
    for n, o in body.params["halfspaces"]:
        poly = clip_polygon(poly, n, o)
    return poly


def clip_to_cell(clip: ConvexBody | np.ndarray, halfspaces) -> np.ndarray:
    """Polygon of ``clip`` intersected with every halfspace (possibly empty)."""
    poly = body_polygon(clip) if isinstance(clip, ConvexBody) else np.asarray(clip, dtype=float)
    for n, o in halfspaces:
        poly = clip_polygon(poly, n, o)
        if poly.shape[0] == 0:
            break
    return poly


def extract_polygons_2d(p: PowerPartition, clip: ConvexBody) -> list:
    """Counterclockwise polygon of every cell inside ``clip``.

    Cells that miss the clip region come back as empty ``(0, 2)`` arrays.
    """
    if p.dimension != 2:
        raise ValueError("polygon extraction requires d = 2")
    base = body_polygon(clip)
    if len(p) == 1:
        return [base]
    return [clip_to_cell(base, cell_halfspaces(p, i)) for i in range(len(p))]
