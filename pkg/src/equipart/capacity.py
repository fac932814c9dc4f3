"""Weights that give each power cell a prescribed mass.

For sites ``s_i`` and capacities ``c_i`` summing to the measure's mass, the
concave dual

    Phi(w) = sum_i c_i w_i + integral of min_i (|x - s_i|^2 - w_i) dmu(x)

has gradient ``c_i - mu(C_i(w))``, so its maximizers are exactly the
capacity-realizing weights.  We ascend it with damped Newton steps whose
Hessian is estimated from the samples lying in thin bands around each facet.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .measures import Measure
from .power_diagram import PowerPartition, SiteConfig, normalize_weights

log = logging.getLogger(__name__)

DEFAULT_REL_TOLERANCE = 1e-3
DEFAULT_MAX_ITERATIONS = 10_000
BAND_QUANTILE = 0.02
_MAX_HALVINGS = 40


class CapacitySolveError(RuntimeError):
    """The iteration limit was reached; ``best`` holds the closest iterate."""

    def __init__(self, message, best: "CapacitySolution"):
        super().__init__(message)
        self.best = best


@dataclass
class CapacityProblem:
    config: SiteConfig
    measure: Measure
    tolerance: float | None = None
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        c = self.config.capacities
        mass = self.measure.total_mass
        if self.measure.dimension != self.config.dimension:
            raise ValueError("measure and sites have different dimensions")
        if np.any(c > mass * (1 + 1e-12)):
            raise ValueError("a capacity exceeds the total mass")
        if abs(c.sum() - mass) > 1e-9 * max(1.0, mass):
            raise ValueError(f"capacities sum to {c.sum()!r}, measure has mass {mass!r}")
        if self.tolerance is None:
            self.tolerance = DEFAULT_REL_TOLERANCE * float(c.min())
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class CapacitySolution:
    weights: np.ndarray
    residual: float
    iterations: int
    objective_trace: list = field(default_factory=list)
    cell_masses: np.ndarray | None = None
    converged: bool = True

    def partition(self, config: SiteConfig) -> PowerPartition:
        return PowerPartition(config.sites, self.weights)


def _integral(m: Measure, values: np.ndarray) -> float:
    if m.sample_weights is None:
        return m.unit_mass * float(np.sum(values))
    return float(np.dot(m.sample_weights, values))


def dual_objective(problem: CapacityProblem, w) -> float:
    """The concave dual ``Phi(w)`` on the measure's sample cache."""
    w = np.asarray(w, dtype=float)
    _, hmin = kernels.assign(problem.measure.samples, problem.config.sites, w)
    return float(np.dot(problem.config.capacities, w)) + _integral(problem.measure, hmin)


def dual_gradient(problem: CapacityProblem, w) -> np.ndarray:
    """Gradient of the dual: ``c_i - mu(C_i(w))``."""
    labels, _ = kernels.assign(problem.measure.samples, problem.config.sites, np.asarray(w, float))
    return problem.config.capacities - problem.measure.label_masses(labels, len(problem.config))


class _State:
    __slots__ = ("w", "masses", "grad", "objective", "pair", "hmin")

    def __init__(self, problem, w, pair):
        m = problem.measure
        sites = problem.config.sites
        c = problem.config.capacities
        if pair:
            labels, second, hmin, gap = kernels.assign_pair(m.samples, sites, w)
            self.pair = (labels, second, gap)
        else:
            labels, hmin = kernels.assign(m.samples, sites, w)
            self.pair = None
        self.w = w
        self.hmin = hmin
        self.masses = m.label_masses(labels, len(c))
        self.grad = c - self.masses
        self.objective = float(np.dot(c, w)) + _integral(m, hmin)

    @property
    def residual(self) -> float:
        return float(np.max(np.abs(self.grad)))


def _site_distances(sites):
    diff = sites[:, None, :] - sites[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def facet_laplacian(m: Measure, sites: np.ndarray, labels, second, gap, scale: float) -> np.ndarray:
    """Sample estimate of the Jacobian of cell masses with respect to weights.

    Samples within spatial distance ``eta`` of the facet between their cell
    and the runner-up cell give the facet's surface mass; moving ``w_j`` by
    ``delta`` shifts facet ``ij`` by ``delta / (2 |s_i - s_j|)``.
    """
    t = sites.shape[0]
    dist = _site_distances(sites)
    ok = second >= 0
    lab = labels[ok]
    sec = second[ok]
    spatial = gap[ok] / (2.0 * dist[lab, sec])
    if spatial.size == 0:
        return np.zeros((t, t))
    stride = max(1, spatial.size // 50_000)
    eta = float(np.quantile(spatial[::stride], BAND_QUANTILE))
    eta = max(eta, 1e-3 * scale)
    band = spatial < eta
    w = None if m.sample_weights is None else m.sample_weights[ok][band]
    counts = np.bincount(lab[band] * t + sec[band], weights=w, minlength=t * t).reshape(t, t)
    if m.sample_weights is None:
        counts = counts * m.unit_mass
    band_mass = counts + counts.T
    with np.errstate(divide="ignore", invalid="ignore"):
        coupling = np.where(band_mass > 0, band_mass / (4.0 * eta * dist), 0.0)
    np.fill_diagonal(coupling, 0.0)
    return np.diag(coupling.sum(axis=1)) - coupling


def _entry_gaps(m: Measure, sites, state, cells) -> np.ndarray:
    """Weight increase at which each empty cell first captures a sample."""
    out = np.zeros(len(sites))
    for i in cells:
        diff = m.samples - sites[i]
        out[i] = float(np.min(np.sum(diff * diff, axis=1) - state.w[i] - state.hmin))
    return np.maximum(out, 0.0)


def _newton_direction(lap: np.ndarray, grad: np.ndarray, mass: float, scale: float,
                      entry: np.ndarray | None = None) -> np.ndarray:
    step, *_ = np.linalg.lstsq(lap, grad, rcond=1e-10)
    diag = np.diag(lap)
    isolated = diag <= 0
    if isolated.any():
        # cells with no detected neighbours get a plain gradient step, empty
        # ones first jump to where they start capturing mass
        typical = np.median(diag[~isolated]) if (~isolated).any() else mass / scale**2
        step[isolated] = grad[isolated] / typical
        if entry is not None:
            step[isolated] += entry[isolated]
    return step


def solve_capacities(
    problem: CapacityProblem,
    warm_start: Sequence[float] | None = None,
    *,
    verbose: bool = False,
) -> CapacitySolution:
    """Find weights whose power cells carry the prescribed capacities.

    Returned weights satisfy ``w . c == 0``.  Raises
    :class:`CapacitySolveError` when the iteration limit is reached.
    """
    cfg = problem.config
    m = problem.measure
    c = cfg.capacities
    t = len(cfg)
    if t == 1:
        return CapacitySolution(np.zeros(1), 0.0, 0, [0.0], np.array([m.total_mass]))
    w0 = np.zeros(t) if warm_start is None else np.asarray(warm_start, dtype=float).copy()
    if w0.shape != (t,):
        raise ValueError("warm start has the wrong length")
    w0 = normalize_weights(w0, c)
    lo, hi = m.bounds
    scale = float(np.linalg.norm(hi - lo)) or 1.0

    state = _State(problem, w0, pair=False)
    trace = [state.objective]
    it = 0
    while True:
        if verbose:
            log.info("iteration=%d objective=%.17g residual=%.6g", it, state.objective, state.residual)
        if state.residual <= problem.tolerance:
            return CapacitySolution(state.w, state.residual, it, trace, state.masses, True)
        if it >= problem.max_iterations:
            best = CapacitySolution(state.w, state.residual, it, trace, state.masses, False)
            raise CapacitySolveError(
                f"capacity solve stopped at iteration limit with residual {state.residual:.3g}", best)
        it += 1
        if state.pair is None:
            state = _State(problem, state.w, pair=True)
        labels, second, gap = state.pair
        lap = facet_laplacian(m, cfg.sites, labels, second, gap, scale)
        gnorm = np.linalg.norm(state.grad)
        empty = np.flatnonzero(state.masses <= 0)
        had_empty = empty.size > 0
        entry = _entry_gaps(m, cfg.sites, state, empty) if had_empty else None
        nxt = None
        for direction in (_newton_direction(lap, state.grad, m.total_mass, scale, entry),
                          state.grad * (scale**2 / m.total_mass)):
            tau = 1.0
            for _ in range(_MAX_HALVINGS):
                w_try = normalize_weights(state.w + tau * direction, c)
                cand = _State(problem, w_try, pair=False)
                cnorm = np.linalg.norm(cand.grad)
                # a strict rise with an unchanged gradient is progress across a
                # flat stretch where no facet has entered the support yet
                if (cand.objective >= state.objective
                        and (cnorm < gnorm or (cnorm <= gnorm and cand.objective > state.objective))
                        and (had_empty or np.all(cand.masses > 0))):
                    nxt = cand
                    break
                tau *= 0.5
            if nxt is not None:
                break
        if nxt is None:
            best = CapacitySolution(state.w, state.residual, it, trace, state.masses, False)
            raise CapacitySolveError(
                f"capacity solve stalled with residual {state.residual:.3g}", best)
        state = nxt
        trace.append(state.objective)


def solve_weights(
    sites,
    capacities,
    measure: Measure,
    tolerance: float | None = None,
    warm_start=None,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> CapacitySolution:
    """Convenience wrapper building the :class:`CapacityProblem`."""
    problem = CapacityProblem(SiteConfig(sites, capacities), measure, tolerance, max_iterations)
    return solve_capacities(problem, warm_start)


@dataclass
class ContinuityReport:
    """Weight gaps ``|w_a - w_b|`` along a trajectory of merging sites."""

    distances: list
    gaps: list
    applicable: bool

    @property
    def passed(self) -> bool:
        if not self.applicable:
            return True
        return self.gaps[-1] <= self.gaps[0] or self.gaps[-1] <= 1e-12


def merge_continuity_probe(
    trajectory: Sequence[np.ndarray],
    capacities,
    measure: Measure,
    pair: tuple = (0, 1),
    tolerance: float | None = None,
    approach_ratio: float = 0.1,
) -> ContinuityReport:
    """Track the weight gap of two sites as they move together.

    ``trajectory`` is a sequence of ``(t, d)`` site arrays.  Each step is
    warm-started from the previous solve.  The probe applies only if the
    designated pair's distance shrinks by ``approach_ratio`` or more.
    """
    a, b = pair
    dists, gaps = [], []
    warm = None
    for sites in trajectory:
        sites = np.asarray(sites, dtype=float)
        sol = solve_weights(sites, capacities, measure, tolerance, warm_start=warm)
        warm = sol.weights
        dists.append(float(np.linalg.norm(sites[a] - sites[b])))
        gaps.append(float(abs(sol.weights[a] - sol.weights[b])))
    applicable = len(dists) > 1 and dists[-1] <= approach_ratio * dists[0]
    return ContinuityReport(dists, gaps, applicable)
