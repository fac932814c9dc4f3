"""Convex equipartitions of several measures by power diagrams.

A ``p``-tuple of points ``x`` (repetitions allowed) is collapsed to its
distinct sites ``S(x)`` with multiplicities ``alpha``.  For each measure the
capacity solver yields weights realizing masses proportional to ``alpha``;
expanding them back to the tuple gives a weight profile in R^p summing to 0.
The discrepancy map stacks ``profile_1 - profile_i`` over the other measures.
A zero means one power diagram splits every measure in the ratios ``alpha``,
and a derivative-free search hunts for it.

Composite counts split as ``k = a * b`` (``a`` the smallest prime factor):
first ``a`` parts of ``b`` units, then each part recursively.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .capacity import CapacityProblem, CapacitySolveError, solve_capacities
from .measures import Measure, joint_bounds, restrict
from .power_diagram import PowerPartition, SiteConfig, cell_halfspaces, cell_measure, merge_epsilon
from .verify import PartitionReport, verify_partition

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 2e-2
SNAP_RADIUS = 5e-2
_PENALTY = 1e6


class EquipartitionError(RuntimeError):
    """A recursion stage failed; carries the stage, path and best residual."""

    def __init__(self, message, stage="", path=(), residual=np.inf, best_point=None):
        super().__init__(message)
        self.stage = stage
        self.path = tuple(path)
        self.residual = residual
        self.best_point = best_point


@dataclass
class SearchParams:
    """Settings for the zero search of the discrepancy map.

    ``tolerance`` bounds ``||f||`` in squared-length units and defaults to
    ``1e-3 * p * L**2`` with ``L`` the largest extent of the samples.
    ``mass_tolerance`` caps the per-level mass error in units of one part.
    """

    restarts: int = 32
    max_iterations: int = 2000
    tolerance: float | None = None
    seed: int = 0
    mass_tolerance: float = 2.5e-3
    coarse_samples_per_mass: int = 20_000
    polish_iterations: int = 8
    refine_iterations: int = 40
    capacity_rel_tolerance: float = 1e-4
    allow_composite: bool = False


def smallest_prime_factor(k: int) -> int:
    if k < 2:
        raise ValueError("k must be at least 2")
    f = 2
    while f * f <= k:
        if k % f == 0:
            return f
        f += 1
    return k


def is_prime(k: int) -> bool:
    return k >= 2 and smallest_prime_factor(k) == k


def prime_factor_count(k: int) -> int:
    """Number of prime factors counted with multiplicity."""
    n = 0
    while k > 1:
        k //= smallest_prime_factor(k)
        n += 1
    return n


# --- tuples and their collapse ------------------------------------------------


@dataclass(frozen=True)
class CollapsedConfig:
    """Distinct sites in order of first appearance with multiplicities.

    ``index[j]`` is the site that tuple entry ``j`` was merged into.
    """

    sites: np.ndarray
    multiplicities: np.ndarray
    index: np.ndarray

    @property
    def t(self) -> int:
        return self.sites.shape[0]

    def expand(self, values) -> np.ndarray:
        return np.asarray(values)[self.index]


def collapse(points, eps: float = 0.0) -> CollapsedConfig:
    """Merge tuple entries closer than ``eps`` to an earlier distinct site."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    sites: list = []
    index = np.empty(points.shape[0], dtype=np.intp)
    for j, x in enumerate(points):
        for h, s in enumerate(sites):
            if np.linalg.norm(x - s) <= eps:
                index[j] = h
                break
        else:
            index[j] = len(sites)
            sites.append(x)
    mult = np.bincount(index, minlength=len(sites))
    return CollapsedConfig(np.array(sites), mult, index)


def cyclic_shift(points) -> np.ndarray:
    """``(x_1, ..., x_p) -> (x_2, ..., x_p, x_1)``."""
    return np.roll(np.asarray(points), -1, axis=0)


def _capacity_tolerance(m: Measure, caps, rel: float) -> float:
    floor = 4.0 * (m.unit_mass if m.unit_mass is not None else float(np.max(m.sample_weights)))
    return max(rel * float(np.min(caps)), floor)


def weight_profile(
    x,
    m: Measure,
    eps: float | None = None,
    tolerance: float | None = None,
    warm_start=None,
    _return_solution: bool = False,
):
    """Per-entry weights of the tuple ``x`` for measure ``m`` (sums to 0).

    Capacities are the multiplicities scaled so they sum to ``m``'s mass.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p = x.shape[0]
    if eps is None:
        eps = merge_epsilon(*m.bounds)
    col = collapse(x, eps)
    if col.t < 2 and p > 1:
        raise ValueError("tuple points must not all coincide")
    caps = col.multiplicities * (m.total_mass / p)
    prob = CapacityProblem(SiteConfig(col.sites, caps), m, tolerance)
    sol = solve_capacities(prob, warm_start)
    y = col.expand(sol.weights)
    if _return_solution:
        return y, col, sol
    return y


class DiscrepancyMap:
    """``x -> (f_1 - f_2, ..., f_1 - f_d)`` with warm-started capacity solves.

    Warm starts are keyed by the collapse pattern, so repeated evaluations
    along a search path reuse nearby weights.  Use ``warm=False`` for a map
    whose value depends only on ``x``.
    """

    def __init__(self, measures: Sequence[Measure], rel_tolerance: float = 1e-3,
                 eps: float | None = None, warm: bool = True):
        self.measures = list(measures)
        if eps is None:
            lo, hi = joint_bounds(self.measures)
            eps = merge_epsilon(lo, hi)
        self.eps = eps
        self.rel_tolerance = rel_tolerance
        self.warm = warm
        self._cache: dict = {}
        self.evaluations = 0

    def solve(self, x):
        """Collapsed config plus one capacity solution per measure."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p = x.shape[0]
        col = collapse(x, self.eps)
        if col.t < 2:
            raise ValueError("tuple points must not all coincide")
        sols = []
        key_base = tuple(col.index)
        for i, m in enumerate(self.measures):
            caps = col.multiplicities * (m.total_mass / p)
            tol = _capacity_tolerance(m, caps, self.rel_tolerance)
            key = (i, key_base)
            warm = self._cache.get(key) if self.warm else None
            try:
                sol = solve_capacities(CapacityProblem(SiteConfig(col.sites, caps), m, tol), warm)
            except CapacitySolveError as exc:
                raise CapacitySolveError(f"measure {i}: {exc}", exc.best) from None
            if self.warm:
                self._cache[key] = sol.weights
            sols.append(sol)
        self.evaluations += 1
        return col, sols

    def profiles(self, x) -> list:
        col, sols = self.solve(x)
        return [col.expand(s.weights) for s in sols]

    def __call__(self, x) -> np.ndarray:
        prof = self.profiles(x)
        if len(prof) == 1:
            return np.zeros(0)
        return np.concatenate([prof[0] - q for q in prof[1:]])


def discrepancy_map(x, measures: Sequence[Measure], rel_tolerance: float = 1e-3) -> np.ndarray:
    """Stacked weight-profile differences; zero iff one diagram fits all measures."""
    if len(measures) == 1:
        return np.zeros(0)
    return DiscrepancyMap(measures, rel_tolerance, warm=False)(x)


# --- prime case -------------------------------------------------------------------


@dataclass
class PrimeSolution:
    """A power diagram whose cells hold integer unit counts in every measure.

    ``masses[h, i]`` is the mass of cell ``h`` under measure ``i``, in units
    of that measure's total divided by ``p``.
    """

    p: int
    partition: PowerPartition
    multiplicities: np.ndarray
    masses: np.ndarray
    residual_norm: float
    mass_deviation: float
    point: np.ndarray
    restart: int
    evaluations: int

    @property
    def r(self) -> int:
        return len(self.multiplicities)

    def parts(self) -> list:
        return [cell_halfspaces(self.partition, h) for h in range(self.r)]


class _Found(Exception):
    def __init__(self, z):
        self.z = z


def _unit_masses(partition: PowerPartition, measures, p):
    out = np.empty((len(partition), len(measures)))
    for i, m in enumerate(measures):
        out[:, i] = cell_measure(partition, m) / (m.total_mass / p)
    return out


def _assess(fmap: DiscrepancyMap, x, p):
    """Residual norm, mass deviation and the diagram built from measure 0."""
    norm, dev, part, col, masses, _ = _evaluate(fmap, x, p)
    return norm, dev, part, col, masses


def _evaluate(fmap: DiscrepancyMap, x, p):
    col, sols = fmap.solve(x)
    prof = [col.expand(s.weights) for s in sols]
    f = np.concatenate([prof[0] - q for q in prof[1:]]) if len(prof) > 1 else np.zeros(0)
    part = PowerPartition(col.sites, sols[0].weights)
    masses = _unit_masses(part, fmap.measures, p)
    excess = masses - col.multiplicities[:, None]
    dev = float(np.max(np.abs(excess)))
    return float(np.linalg.norm(f)), dev, part, col, masses, (f, excess[:, 1:].ravel())


def _scaled_residual(parts, ftol, mscale):
    """``f`` and the other measures' cell-mass errors, each in tolerance units.

    ``f`` alone is in squared-length units; it can be tiny while masses are
    off (nearly equal measures, nearly merged sites), so the search drives
    both to zero.
    """
    f, excess = parts
    return np.concatenate([f / ftol, excess / mscale])


def solve_prime(
    p: int,
    measures: Sequence[Measure],
    search: SearchParams | None = None,
    mass_tolerance: float | None = None,
    path=(),
) -> PrimeSolution:
    """Find a zero of the discrepancy map over ``p``-tuples.

    Multi-start Nelder-Mead on ``||f||^2`` plus the squared cell-mass errors
    (both in tolerance units): each restart seeds the tuple at
    samples of the measures, searches on a coarse prefix of the sample
    caches, then polishes on the full caches.  Success needs
    ``||f|| <= search.tolerance`` and every cell mass within
    ``mass_tolerance`` units of its multiplicity.
    """
    search = search or SearchParams()
    if not search.allow_composite and not is_prime(p):
        raise ValueError(f"{p} is not prime")
    measures = list(measures)
    d = measures[0].dimension
    lo, hi = joint_bounds(measures)
    extent = float(np.max(hi - lo)) or 1.0
    ftol = search.tolerance if search.tolerance is not None else 1e-3 * p * extent**2
    mtol = search.mass_tolerance if mass_tolerance is None else mass_tolerance
    eps = merge_epsilon(lo, hi)
    rng = np.random.default_rng(search.seed)

    coarse = [m.prefix(int(search.coarse_samples_per_mass * max(m.total_mass, 1.0))) for m in measures]
    best_norm, best_x = np.inf, None
    evaluations = 0

    for restart in range(search.restarts):
        seeds = np.array([measures[j % len(measures)].samples[rng.integers(measures[j % len(measures)].n_samples)]
                          for j in range(p)])
        fmap = DiscrepancyMap(coarse, search.capacity_rel_tolerance, eps)
        # the coarse caches only have to locate the basin; their cell masses are
        # mostly sampling noise, so an infinite mass tolerance leaves them out
        z = _nelder_mead(fmap, seeds.ravel(), p, d, lo, hi, ftol, np.inf, 0.1 * extent,
                         search.max_iterations)
        evaluations += fmap.evaluations
        fmap = DiscrepancyMap(measures, search.capacity_rel_tolerance, eps)
        x = _polish(fmap, np.clip(z.reshape(p, d), lo, hi), p, lo, hi, ftol, mtol, 1e-3 * extent,
                    search.polish_iterations)
        try:
            norm, dev, part, col, masses = _assess(fmap, x, p)
        except (CapacitySolveError, ValueError):
            norm, dev = np.inf, np.inf
        if not (norm <= ftol and dev <= mtol):
            snapped = _snap_closest(x, SNAP_RADIUS * extent)
            if snapped is not None:
                try:
                    found = _assess(fmap, snapped, p)
                except (CapacitySolveError, ValueError):
                    found = None
                if found is not None and found[0] <= ftol and found[1] <= mtol:
                    x = snapped
                    norm, dev, part, col, masses = found
        if not (norm <= ftol and dev <= mtol):
            # kept short: a fresh seed is cheaper than a long crawl through sampling noise
            z = _nelder_mead(fmap, x.ravel(), p, d, lo, hi, ftol, mtol, 0.01 * extent,
                             search.refine_iterations)
            x = np.clip(z.reshape(p, d), lo, hi)
            try:
                norm, dev, part, col, masses = _assess(fmap, x, p)
            except (CapacitySolveError, ValueError):
                continue
        evaluations += fmap.evaluations
        log.info("prime p=%d restart=%d |f|=%.3g deviation=%.3g evaluations=%d",
                 p, restart, norm, dev, evaluations)
        if norm < best_norm:
            best_norm, best_x = norm, x
        if norm <= ftol and dev <= mtol:
            return PrimeSolution(p, part, col.multiplicities, masses, norm, dev, x, restart, evaluations)
    raise EquipartitionError(
        f"no zero of the discrepancy map found for p={p} after {search.restarts} restarts "
        f"(best |f| = {best_norm:.3g})",
        stage="prime", path=path, residual=best_norm, best_point=best_x,
    )


def _snap_closest(x, radius):
    """Copy of ``x`` with its closest pair merged at their midpoint, if within ``radius``.

    Near a merge the map is badly conditioned in mass terms: the facet
    between two close sites moves by ``dw / (2 |s_i - s_j|)``.  Weights agree
    in the limit, so the merged tuple is the natural candidate.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 3:
        return None
    dist = np.linalg.norm(x[:, None] - x[None], axis=2)
    dist[np.diag_indices_from(dist)] = np.inf
    i, j = np.unravel_index(np.argmin(dist), dist.shape)
    if dist[i, j] > radius:
        return None
    out = x.copy()
    out[i] = out[j] = 0.5 * (x[i] + x[j])
    return out


def _polish(fmap, x, p, lo, hi, ftol, mtol, h, iterations=8):
    """Gauss-Newton steps on the scaled residual with a forward-difference Jacobian.

    Merged tuple entries move together, so a collapsed configuration stays
    collapsed.  The system is underdetermined, so each step is the
    minimum-norm solution.  Returns the last point that lowered the residual.
    """
    col = collapse(x, fmap.eps)
    index = col.index
    d = x.shape[1]

    def value(y):
        try:
            norm, dev, _, _, _, parts = _evaluate(fmap, np.clip(y, lo, hi)[index], p)
        except (CapacitySolveError, ValueError):
            return None, False
        return _scaled_residual(parts, ftol, mtol), norm <= ftol and dev <= mtol

    y = col.sites.copy()
    rx, done = value(y)
    if rx is None:
        return x
    n = y.size
    max_step = 100 * h
    for _ in range(iterations):
        if done:
            break
        norm = np.linalg.norm(rx)
        jac = np.empty((rx.size, n))
        for a in range(n):
            z = y.ravel().copy()
            z[a] += h if z[a] + h <= hi[a % d] else -h
            rz, _ = value(z.reshape(y.shape))
            if rz is None:
                return y[index]
            jac[:, a] = (rz - rx) / (z[a] - y.ravel()[a])
        step, *_ = np.linalg.lstsq(jac, -rx, rcond=1e-8)
        length = np.linalg.norm(step)
        if length > max_step:
            step *= max_step / length
        tau = 1.0
        for _ in range(6):
            z = np.clip(y + tau * step.reshape(y.shape), lo, hi)
            rz, ok = value(z)
            if rz is not None and np.linalg.norm(rz) < norm:
                y, rx, done = z, rz, ok
                break
            tau *= 0.5
        else:
            break
    return y[index]


def _nelder_mead(fmap, z0, p, d, lo, hi, ftol, mtol, spread, max_iter):
    """One Nelder-Mead run on the scaled residual.

    Stops early once the point (or its snapped variant) meets both
    tolerances.
    """
    span = hi - lo

    def objective(z):
        x = z.reshape(p, d)
        xc = np.clip(x, lo, hi)
        penalty = float(np.sum(((x - xc) / span) ** 2)) * _PENALTY
        try:
            norm, dev, _, _, _, parts = _evaluate(fmap, xc, p)
        except (CapacitySolveError, ValueError):
            return _PENALTY + penalty
        if penalty == 0.0 and norm <= ftol:
            if dev <= mtol:
                raise _Found(z.copy())
            snapped = _snap_closest(xc, SNAP_RADIUS * float(np.max(span)))
            if snapped is not None:
                try:
                    norm_s, dev_s, *_ = _assess(fmap, snapped, p)
                except (CapacitySolveError, ValueError):
                    norm_s = dev_s = np.inf
                if norm_s <= ftol and dev_s <= mtol:
                    raise _Found(snapped.ravel())
        r = _scaled_residual(parts, ftol, mtol)
        return float(r @ r) + penalty

    n = z0.size
    simplex = np.empty((n + 1, n))
    simplex[0] = z0
    for a in range(n):
        simplex[a + 1] = z0
        simplex[a + 1, a] += spread if z0[a] + spread <= hi[a % d] else -spread
    try:
        res = minimize(
            objective, z0, method="Nelder-Mead",
            options={"initial_simplex": simplex, "maxiter": max_iter, "xatol": 1e-9 * spread,
                     "fatol": 1e-6, "adaptive": True},
        )
        return res.x
    except _Found as hit:
        return hit.z


# --- recursion ----------------------------------------------------------------


@dataclass
class PartitionTree:
    """One recursion step: ``leaf``, ``prime`` or ``composite``.

    Prime nodes keep the power diagram that split their region; composite
    nodes keep the ``a``-way split in ``split`` and the refined parts in
    ``children``.  ``halfspaces`` are global (they include the region).
    """

    kind: str
    k: int
    path: tuple
    halfspaces: list
    sites: np.ndarray | None = None
    weights: np.ndarray | None = None
    multiplicities: np.ndarray | None = None
    residual: float | None = None
    mass_deviation: float | None = None
    split: "PartitionTree | None" = None
    children: list = field(default_factory=list)

    def leaves(self) -> list:
        if self.kind == "leaf":
            return [self]
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "k": self.k, "path": list(self.path)}
        if self.kind == "leaf":
            return out
        if self.sites is not None:
            out["sites"] = np.asarray(self.sites).tolist()
            out["weights"] = np.asarray(self.weights).tolist()
            out["multiplicities"] = np.asarray(self.multiplicities).tolist()
            out["r"] = len(self.multiplicities)
            out["residual"] = self.residual
            out["mass_deviation"] = self.mass_deviation
        if self.split is not None:
            out["split"] = self.split.to_dict()
        out["children"] = [c.to_dict() for c in self.children]
        return out


@dataclass
class Part:
    halfspaces: list
    masses: np.ndarray
    path: tuple


@dataclass
class EquipartitionResult:
    k: int
    parts: list
    tree: PartitionTree
    max_deviation: float
    report: PartitionReport


def _quantile_cuts(k, m: Measure, region, path) -> PartitionTree:
    """Exact split of a measure on the line into ``k`` equal-mass intervals."""
    x = m.samples[:, 0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    w = np.full(xs.size, m.unit_mass) if m.sample_weights is None else m.sample_weights[order]
    cum = np.cumsum(w)
    cuts = []
    for j in range(1, k):
        idx = int(np.searchsorted(cum, m.total_mass * j / k - 0.5 * w.min()))
        idx = min(idx, xs.size - 2)
        cuts.append(0.5 * (xs[idx] + xs[idx + 1]))
    node = PartitionTree("prime" if is_prime(k) else "composite", k, path, list(region))
    bounds = [None] + cuts + [None]
    for j in range(k):
        hs = []
        if bounds[j] is not None:
            hs.append((np.array([-1.0]), -bounds[j]))
        if bounds[j + 1] is not None:
            hs.append((np.array([1.0]), bounds[j + 1]))
        node.children.append(PartitionTree("leaf", 1, path + (j,), list(region) + hs))
    return node


def _solve(k, measures, region, path, budget, search) -> PartitionTree:
    if k == 1:
        return PartitionTree("leaf", 1, path, list(region))
    if measures[0].dimension == 1:
        return _quantile_cuts(k, measures[0], region, path)
    a = smallest_prime_factor(k)
    if a < k:
        b = k // a
        levels = prime_factor_count(k)
        top_budget = budget * prime_factor_count(a) / levels
        split = _solve(a, [m.scaled(1.0 / b) for m in measures], region, path + ("split",),
                       top_budget, search)
        node = PartitionTree("composite", k, path, list(region), split=split)
        for h, leaf in enumerate(split.leaves()):
            local = leaf.halfspaces[len(region):]
            sub = _restrict_all(measures, local, path + (h,))
            node.children.append(_solve(b, sub, leaf.halfspaces, path + (h,), budget - top_budget, search))
        return node

    level_tol = min(search.mass_tolerance, budget / 2.0 if k > 2 else budget)
    sol = solve_prime(k, measures, search, level_tol, path)
    node = PartitionTree("prime", k, path, list(region), sites=sol.partition.sites,
                         weights=sol.partition.weights, multiplicities=sol.multiplicities,
                         residual=sol.residual_norm, mass_deviation=sol.mass_deviation)
    for h, local in enumerate(sol.parts()):
        alpha = int(sol.multiplicities[h])
        child_region = list(region) + local
        if alpha == 1:
            node.children.append(PartitionTree("leaf", 1, path + (h,), child_region))
            continue
        sub = _restrict_all(measures, local, path + (h,))
        node.children.append(_solve(alpha, sub, child_region, path + (h,),
                                    budget - sol.mass_deviation, search))
    return node


def _restrict_all(measures, halfspaces, path):
    try:
        return [restrict(m, halfspaces) for m in measures]
    except ValueError as exc:
        raise EquipartitionError(f"degenerate cell at {path}: {exc}", stage="restrict", path=path) from None


def solve_composite(a: int, b: int, measures: Sequence[Measure], search: SearchParams | None = None,
                    tolerance: float = DEFAULT_TOLERANCE) -> EquipartitionResult:
    """Split into ``a`` parts of ``b`` units, then split every part into ``b``."""
    return equipartition(a * b, measures, search, tolerance, _factors=(a, b))


def equipartition(
    k: int,
    measures: Sequence[Measure],
    search: SearchParams | None = None,
    tolerance: float = DEFAULT_TOLERANCE,
    _factors: tuple | None = None,
) -> EquipartitionResult:
    """Partition space into ``k`` convex parts of unit mass under every measure.

    Measures whose total mass is not ``k`` are rescaled to mass ``k`` first.
    Raises :class:`EquipartitionError` naming the failing stage.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    measures = list(measures)
    if not measures:
        raise ValueError("need at least one measure")
    dims = {m.dimension for m in measures}
    if len(dims) != 1:
        raise ValueError("measures have inconsistent dimensions")
    d = dims.pop()
    if len(measures) > d:
        raise ValueError(f"{len(measures)} measures in dimension {d}: at most d measures are supported")
    search = search or SearchParams()
    scaled = [m if abs(m.total_mass - k) <= 1e-12 * k else m.scaled(k / m.total_mass) for m in measures]

    if _factors is not None and k > 1:
        a, b = _factors
        split = _solve(a, [m.scaled(1.0 / b) for m in scaled], [], ("split",), tolerance / 2, search)
        tree = PartitionTree("composite", k, (), [], split=split)
        for h, leaf in enumerate(split.leaves()):
            sub = _restrict_all(scaled, leaf.halfspaces, (h,))
            tree.children.append(_solve(b, sub, leaf.halfspaces, (h,), tolerance / 2, search))
    else:
        tree = _solve(k, scaled, [], (), tolerance, search)

    leaves = tree.leaves()
    report = verify_partition([leaf.halfspaces for leaf in leaves], scaled, target=1.0)
    parts = [Part(leaf.halfspaces, report.masses[j], leaf.path) for j, leaf in enumerate(leaves)]
    return EquipartitionResult(k, parts, tree, report.max_deviation, report)
