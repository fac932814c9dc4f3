"""Independent checks of a claimed partition, and the brute-force line oracle.

Nothing here looks at solver state: part membership is recomputed from the
halfspace lists on the measures' sample caches.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .measures import Measure, in_halfspaces


@dataclass
class PartitionReport:
    """Recomputed masses of every part under every measure.

    ``masses[j, i]`` is the mass of part ``j`` under measure ``i``; each
    column sums to that measure's total when coverage is clean.
    """

    masses: np.ndarray
    max_deviation: float
    coverage_defects: int
    convexity_ok: bool
    convexity_counterexample: tuple | None = None
    fresh_max_deviation: float | None = None
    target: float = 1.0
    defects_per_measure: list = field(default_factory=list)

    def ok(self, tolerance: float) -> bool:
        return self.coverage_defects == 0 and self.convexity_ok and self.max_deviation <= tolerance

    def to_dict(self) -> dict:
        return {
            "parts": int(self.masses.shape[0]),
            "measures": int(self.masses.shape[1]),
            "target": self.target,
            "masses": self.masses.tolist(),
            "max_deviation": self.max_deviation,
            "fresh_max_deviation": self.fresh_max_deviation,
            "coverage_defects": self.coverage_defects,
            "defects_per_measure": self.defects_per_measure,
            "convexity_ok": self.convexity_ok,
            "convexity_counterexample": None if self.convexity_counterexample is None
            else [np.asarray(v).tolist() for v in self.convexity_counterexample],
        }


def _membership(samples, parts):
    return np.array([in_halfspaces(samples, hs) for hs in parts]).reshape(len(parts), samples.shape[0])


def _spot_check_convexity(parts, measures, rng, pairs=20, steps=100):
    ts = np.linspace(0.0, 1.0, steps)[:, None]
    for j, hs in enumerate(parts):
        if not hs:
            continue
        for m in measures:
            inside = m.samples[in_halfspaces(m.samples, hs)]
            if inside.shape[0] < 2:
                continue
            for _ in range(pairs):
                a, b = inside[rng.integers(inside.shape[0], size=2)]
                seg = a + ts * (b - a)
                ok = in_halfspaces(seg, hs)
                if not ok.all():
                    return False, (j, a, b)
    return True, None


def masses_and_defects(parts, measures):
    """Mass matrix ``(parts, measures)`` and per-measure coverage defects."""
    masses = np.zeros((len(parts), len(measures)))
    defects = []
    for i, m in enumerate(measures):
        member = _membership(m.samples, parts)
        for j in range(len(parts)):
            masses[j, i] = m.mass_of(member[j])
        defects.append(int(np.count_nonzero(member.sum(axis=0) != 1)))
    return masses, defects


def verify_partition(
    parts: Sequence[list],
    measures: Sequence[Measure],
    target: float = 1.0,
    fresh_measures: Sequence[Measure] | None = None,
    seed: int = 0,
) -> PartitionReport:
    """Recompute masses, coverage and convexity of halfspace-list parts.

    A part given as an empty list is the whole space.  Samples lying in no
    part or in two or more parts are counted as coverage defects.
    """
    if not parts:
        raise ValueError("need at least one part")
    dims = {m.dimension for m in measures}
    if len(dims) != 1:
        raise ValueError("measures have inconsistent dimensions")
    parts = [[(np.asarray(n, dtype=float), float(o)) for n, o in hs] for hs in parts]
    masses, defects = masses_and_defects(parts, measures)
    max_dev = float(np.max(np.abs(masses - target)))
    convex, example = _spot_check_convexity(parts, measures, np.random.default_rng(seed))
    fresh = None
    if fresh_measures is not None:
        fm, _ = masses_and_defects(parts, fresh_measures)
        fresh = float(np.max(np.abs(fm - target)))
    return PartitionReport(masses, max_dev, int(sum(defects)), convex, example, fresh, target, defects)


@dataclass
class HyperplaneOracleResult:
    normal: np.ndarray
    offset: float
    deviation: float
    angles: int
    offsets: int


def brute_force_hyperplane(
    measures: Sequence[Measure],
    angles: int = 720,
    offsets: int = 500,
) -> HyperplaneOracleResult:
    """Exhaustive angle x offset search for a line halving every measure.

    Lines are ``n(theta).x <= o`` with ``theta = pi * k / angles`` and ``o`` on
    an evenly spaced grid spanning the samples' projections, so doubling
    ``angles`` and using ``2 * offsets - 1`` offsets refines the grid.  The
    score is ``max_i |mu_i(halfplane) - mu_i(R^2) / 2|``.
    """
    if any(m.dimension != 2 for m in measures):
        raise ValueError("the hyperplane oracle is implemented for d = 2")
    best = (np.inf, None, None)
    halves = [m.total_mass / 2.0 for m in measures]
    frac = np.arange(offsets) / (offsets - 1)
    for k in range(angles):
        theta = np.pi * (k / angles)
        n = np.array([np.cos(theta), np.sin(theta)])
        projs = [m.samples @ n for m in measures]
        lo = min(float(p.min()) for p in projs)
        hi = max(float(p.max()) for p in projs)
        grid = lo + (hi - lo) * frac
        score = np.zeros(offsets)
        for m, p, half in zip(measures, projs, halves):
            # mass with projection <= grid[g] for every g
            idx = np.searchsorted(grid, p, side="left")
            w = m.sample_weights
            hist = np.bincount(idx, weights=w, minlength=offsets + 1)[:offsets]
            below = np.cumsum(hist)
            if w is None:
                below = below * m.unit_mass
            score = np.maximum(score, np.abs(below - half))
        g = int(np.argmin(score))
        if score[g] < best[0]:
            best = (float(score[g]), n, float(grid[g]))
    return HyperplaneOracleResult(best[1], best[2], best[0], angles, offsets)
