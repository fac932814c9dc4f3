"""Finite measures on bounded convex bodies, integrated by frozen Monte Carlo.

Every measure owns a cached sample set drawn once at construction.  All mass
queries are answered on that cache, so downstream solvers see a
deterministic, piecewise-constant objective.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.special import gamma

DEFAULT_SAMPLES_PER_MASS = 200_000

Halfspace = tuple  # (normal: ndarray, offset: float), membership normal.x <= offset


class MeasureError(ValueError):
    """Invalid measure description or unusable sample data."""


class DegenerateCellError(MeasureError):
    """Restriction to a cell that carries no mass."""


def halfspace_matrix(halfspaces: Sequence[Halfspace], dimension: int):
    """Stack ``(normal, offset)`` pairs into ``(A, b)`` with rows ``A x <= b``."""
    if len(halfspaces) == 0:
        return np.zeros((0, dimension)), np.zeros(0)
    A = np.array([np.asarray(n, dtype=float) for n, _ in halfspaces], dtype=float)
    b = np.array([float(o) for _, o in halfspaces], dtype=float)
    if A.shape[1] != dimension:
        raise MeasureError(f"halfspace normals have dimension {A.shape[1]}, expected {dimension}")
    return A, b


def in_halfspaces(points: np.ndarray, halfspaces: Sequence[Halfspace]) -> np.ndarray:
    """Boolean mask of points lying in every closed halfspace."""
    points = np.asarray(points, dtype=float)
    A, b = halfspace_matrix(halfspaces, points.shape[1])
    mask = np.ones(points.shape[0], dtype=bool)
    for row, off in zip(A, b):
        mask &= points @ row <= off
    return mask


@dataclass(frozen=True)
class ConvexBody:
    """Bounded convex set: an axis box, a ball, or a halfspace polytope."""

    kind: str
    params: dict
    lo: np.ndarray = field(repr=False)
    hi: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.lo.shape[0]

    @classmethod
    def box(cls, lo, hi) -> "ConvexBody":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise MeasureError("box corners must be vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise MeasureError("unbounded support")
        if np.any(hi <= lo):
            raise MeasureError("box has empty interior")
        return cls("box", {"lo": lo.tolist(), "hi": hi.tolist()}, lo, hi)

    @classmethod
    def ball(cls, center, radius) -> "ConvexBody":
        c = np.asarray(center, dtype=float)
        r = float(radius)
        if not np.all(np.isfinite(c)) or not math.isfinite(r):
            raise MeasureError("unbounded support")
        if r <= 0:
            raise MeasureError("ball radius must be positive")
        return cls("ball", {"center": c.tolist(), "radius": r}, c - r, c + r)

    @classmethod
    def polytope(cls, halfspaces) -> "ConvexBody":
        """Bounded intersection of ``n.x <= o``, given as pairs or ``{"normal", "offset"}`` records."""
        halfspaces = [(h["normal"], h["offset"]) if isinstance(h, dict) else h for h in halfspaces]
        halfspaces = [(np.asarray(n, dtype=float), float(o)) for n, o in halfspaces]
        if not halfspaces:
            raise MeasureError("unbounded support")
        d = halfspaces[0][0].shape[0]
        A, b = halfspace_matrix(halfspaces, d)
        lo = np.empty(d)
        hi = np.empty(d)
        for a in range(d):
            for sign, store in ((1.0, lo), (-1.0, hi)):
                cost = np.zeros(d)
                cost[a] = sign
                res = linprog(cost, A_ub=A, b_ub=b, bounds=[(None, None)] * d, method="highs")
                if res.status == 3:
                    raise MeasureError("unbounded support")
                if res.status != 0:
                    raise MeasureError("polytope is empty")
                store[a] = sign * res.fun
        # Chebyshev ball radius > 0 iff interior is nonempty
        norms = np.linalg.norm(A, axis=1)
        res = linprog(
            np.r_[np.zeros(d), -1.0],
            A_ub=np.c_[A, norms],
            b_ub=b,
            bounds=[(None, None)] * d + [(0, None)],
            method="highs",
        )
        if res.status != 0 or -res.fun <= 1e-12:
            raise MeasureError("polytope has empty interior")
        params = {
            "halfspaces": [[n.tolist(), o] for n, o in halfspaces],
            "interior_point": res.x[:d].tolist(),
        }
        return cls("polytope", params, lo, hi)

    @classmethod
    def from_dict(cls, spec: dict) -> "ConvexBody":
        kind = spec.get("kind")
        if kind == "box":
            return cls.box(spec["lo"], spec["hi"])
        if kind == "ball":
            return cls.ball(spec["center"], spec["radius"])
        if kind == "polytope":
            return cls.polytope(spec["halfspaces"])
        raise MeasureError(f"unknown support kind {kind!r}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        out.update({k: v for k, v in self.params.items() if k != "interior_point"})
        return out

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.kind == "box":
            return np.all((points >= self.lo) & (points <= self.hi), axis=1)
        if self.kind == "ball":
            c = np.asarray(self.params["center"])
            return np.sum((points - c) ** 2, axis=1) <= self.params["radius"] ** 2
        return in_halfspaces(points, [(np.asarray(n), o) for n, o in self.params["halfspaces"]])

    def volume(self) -> float:
        if self.kind == "box":
            return float(np.prod(self.hi - self.lo))
        if self.kind == "ball":
            d = self.dimension
            return math.pi ** (d / 2) / gamma(d / 2 + 1) * self.params["radius"] ** d
        if self.dimension == 1:
            return float(self.hi[0] - self.lo[0])
        from scipy.spatial import ConvexHull, HalfspaceIntersection

        hs = np.array([list(n) + [-o] for n, o in self.params["halfspaces"]])
        inter = HalfspaceIntersection(hs, np.asarray(self.params["interior_point"]))
        return float(ConvexHull(inter.intersections).volume)

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Rejection-sample ``n`` uniform points from the bounding box."""
        d = self.dimension
        out = np.empty((n, d))
        filled = 0
        while filled < n:
            batch = max(1024, int(1.3 * (n - filled) / max(self._fill_ratio(), 1e-3)))
            pts = rng.uniform(self.lo, self.hi, size=(batch, d))
            pts = pts[self.contains(pts)]
            take = min(n - filled, pts.shape[0])
            out[filled:filled + take] = pts[:take]
            filled += take
        return out

    def _fill_ratio(self) -> float:
        if self.kind == "box":
            return 1.0
        return min(1.0, self.volume() / float(np.prod(self.hi - self.lo)))


def _bounding_box(bodies: Sequence[ConvexBody]) -> ConvexBody:
    lo = np.min([b.lo for b in bodies], axis=0)
    hi = np.max([b.hi for b in bodies], axis=0)
    if len(bodies) == 1:
        return bodies[0]
    return ConvexBody.box(lo, hi)


class Measure:
    """A finite measure represented by a frozen Monte Carlo sample cache.

    ``integrate`` returns ``total_mass`` times the (weighted) fraction of
    cached samples accepted by an indicator.  Instances are treated as
    immutable; the sample array is read-only.
    """

    def __init__(
        self,
        samples: np.ndarray,
        total_mass: float,
        *,
        sample_weights: np.ndarray | None = None,
        unit_mass: float | None = None,
        density: Callable[[np.ndarray], np.ndarray] | None = None,
        support: ConvexBody | None = None,
        empirical: bool = False,
        label: str = "",
    ):
        samples = np.ascontiguousarray(samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] == 0:
            raise MeasureError("sample cache must be a nonempty (n, d) array")
        if not total_mass > 0 or not math.isfinite(total_mass):
            raise MeasureError("total mass must be positive")
        samples.setflags(write=False)
        self.samples = samples
        self.total_mass = float(total_mass)
        if sample_weights is not None:
            sample_weights = np.ascontiguousarray(sample_weights, dtype=np.float64)
            sample_weights.setflags(write=False)
            self.unit_mass = None
        else:
            self.unit_mass = float(unit_mass) if unit_mass is not None else self.total_mass / samples.shape[0]
        self.sample_weights = sample_weights
        self._density = density
        self.support = support
        self.empirical = empirical
        self.label = label

    def __repr__(self):
        kind = "empirical" if self.empirical else "density"
        return (f"Measure({kind}, d={self.dimension}, mass={self.total_mass:.6g}, "
                f"n={self.n_samples})")

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def sample_budget(self) -> int:
        return self.n_samples

    @property
    def bounds(self):
        """Axis box ``(lo, hi)`` of the cached samples."""
        if getattr(self, "_bounds", None) is None:
            self._bounds = (self.samples.min(axis=0), self.samples.max(axis=0))
        return self._bounds

    def density(self, x) -> np.ndarray:
        if self._density is None:
            raise MeasureError("density is unavailable for empirical measures")
        return self._density(np.atleast_2d(np.asarray(x, dtype=float)))

    def mass_of(self, mask: np.ndarray) -> float:
        """Mass of the cached samples selected by a boolean mask."""
        if self.sample_weights is None:
            return int(np.count_nonzero(mask)) * self.unit_mass
        return float(np.sum(self.sample_weights[mask]))

    def label_masses(self, labels: np.ndarray, count: int) -> np.ndarray:
        """Mass per label for integer labels in ``range(count)``."""
        if self.sample_weights is None:
            return np.bincount(labels, minlength=count)[:count] * self.unit_mass
        return np.bincount(labels, weights=self.sample_weights, minlength=count)[:count]

    def scaled(self, factor: float) -> "Measure":
        """Same samples, every mass multiplied by ``factor``."""
        factor = float(factor)
        dens = self._density
        return Measure(
            self.samples,
            self.total_mass * factor,
            sample_weights=None if self.sample_weights is None else self.sample_weights * factor,
            unit_mass=None if self.unit_mass is None else self.unit_mass * factor,
            density=None if dens is None else (lambda x: factor * dens(x)),
            support=self.support,
            empirical=self.empirical,
            label=self.label,
        )

    def prefix(self, n: int) -> "Measure":
        """The first ``n`` cached samples reweighted to the full total mass.

        Caches are stored in i.i.d. order, so a prefix is a smaller sample.
        """
        n = min(int(n), self.n_samples)
        if n == self.n_samples:
            return self
        w = None
        if self.sample_weights is not None:
            w = self.sample_weights[:n]
            w = w * (self.total_mass / w.sum())
        return Measure(
            self.samples[:n],
            self.total_mass,
            sample_weights=w,
            density=self._density,
            support=self.support,
            empirical=self.empirical,
            label=self.label,
        )


class CellRestriction(Measure):
    """A measure restricted to an intersection of closed halfspaces."""

    def __init__(self, base: Measure, halfspaces: Sequence[Halfspace]):
        halfspaces = [(np.asarray(n, dtype=float), float(o)) for n, o in halfspaces]
        mask = in_halfspaces(base.samples, halfspaces)
        if not mask.any():
            raise DegenerateCellError("restriction to a cell of zero measure")
        mass = base.mass_of(mask)
        if not mass > 0:
            raise DegenerateCellError("restriction to a cell of zero measure")
        base_density = base._density
        density = None
        if base_density is not None:
            def density(x, _hs=halfspaces, _f=base_density):
                return _f(x) * in_halfspaces(x, _hs)
        super().__init__(
            base.samples[mask],
            mass,
            sample_weights=None if base.sample_weights is None else base.sample_weights[mask],
            unit_mass=base.unit_mass,
            density=density,
            support=base.support,
            empirical=base.empirical,
            label=base.label,
        )
        self.base = base
        self.halfspaces = halfspaces


def restrict(m: Measure, halfspaces: Sequence[Halfspace]) -> CellRestriction:
    """Restrict ``m`` to the cell ``{x : n.x <= o for every (n, o)}``."""
    return CellRestriction(m, halfspaces)


def integrate(m: Measure, indicator: Callable[[np.ndarray], np.ndarray]) -> float:
    """Monte Carlo mass of the set accepted by a vectorized point predicate."""
    mask = np.asarray(indicator(m.samples), dtype=bool)
    if mask.shape != (m.n_samples,):
        mask = np.broadcast_to(mask, (m.n_samples,))
    if mask.all():
        return m.total_mass
    return m.mass_of(mask)


# --- construction from specs -------------------------------------------------


@dataclass
class MeasureSpec:
    """Description of a measure: ``uniform``, ``gaussian`` or ``mixture``.

    ``parameters`` holds ``support`` (a ConvexBody dict) for the first two
    kinds, plus ``mean`` and ``cov`` for gaussians; mixtures list
    ``components`` each carrying ``weight``, ``kind`` and ``parameters``.
    """

    kind: str
    dimension: int
    parameters: dict
    total_mass: float = 1.0
    seed: int = 0
    sample_budget: int | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "MeasureSpec":
        try:
            return cls(
                kind=data["kind"],
                dimension=int(data["dimension"]),
                parameters=dict(data.get("parameters", {})),
                total_mass=float(data.get("total_mass", 1.0)),
                seed=int(data.get("seed", 0)),
                sample_budget=None if data.get("sample_budget") is None else int(data["sample_budget"]),
            )
        except KeyError as exc:
            raise MeasureError(f"measure spec is missing field {exc.args[0]!r}") from None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dimension": self.dimension,
            "parameters": self.parameters,
            "total_mass": self.total_mass,
            "seed": self.seed,
            "sample_budget": self.sample_budget,
        }


class _Component:
    """One density term: uniform or truncated gaussian on a convex body."""

    def __init__(self, kind: str, params: dict, d: int):
        if "support" not in params:
            raise MeasureError("unbounded support")
        self.body = ConvexBody.from_dict(params["support"])
        if self.body.dimension != d:
            raise MeasureError("support dimension does not match measure dimension")
        self.kind = kind
        if kind == "uniform":
            self.volume = self.body.volume()
        elif kind == "gaussian":
            self.mean = np.asarray(params["mean"], dtype=float)
            self.cov = np.atleast_2d(np.asarray(params.get("cov", np.eye(d)), dtype=float))
            if self.mean.shape != (d,) or self.cov.shape != (d, d):
                raise MeasureError("gaussian mean/cov shape mismatch")
            try:
                self.chol = np.linalg.cholesky(self.cov)
            except np.linalg.LinAlgError:
                raise MeasureError("gaussian covariance must be positive definite") from None
            self.prec = np.linalg.inv(self.cov)
            self.norm = 1.0 / math.sqrt((2 * math.pi) ** d * np.linalg.det(self.cov))
            self.accept_rate = None
        else:
            raise MeasureError(f"unknown density kind {kind!r}")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "uniform":
            return self.body.sample_uniform(n, rng)
        d = self.mean.shape[0]
        out = np.empty((n, d))
        filled = proposed = accepted = 0
        while filled < n:
            batch = max(4096, int(1.2 * (n - filled) / max(self.accept_rate or 0.5, 1e-4)))
            z = rng.standard_normal((batch, d)) @ self.chol.T + self.mean
            ok = self.body.contains(z)
            proposed += batch
            accepted += int(ok.sum())
            self.accept_rate = accepted / proposed
            if proposed > 10_000 and self.accept_rate < 1e-4:
                raise MeasureError("truncated gaussian has negligible mass on its support")
            z = z[ok]
            take = min(n - filled, z.shape[0])
            out[filled:filled + take] = z[:take]
            filled += take
        return out

    def density(self, x: np.ndarray) -> np.ndarray:
        """Probability density (integrates to 1 over the body)."""
        inside = self.body.contains(x)
        if self.kind == "uniform":
            return inside / self.volume
        diff = x - self.mean
        q = np.einsum("ij,jk,ik->i", diff, self.prec, diff)
        rate = self.accept_rate if self.accept_rate else 1.0
        return inside * self.norm * np.exp(-0.5 * q) / rate


def build_measure(spec: MeasureSpec | dict) -> Measure:
    """Draw and freeze the sample cache for a measure spec.

    Mixture components get multinomial sample counts, and the concatenated
    cache is shuffled so every prefix is itself an i.i.d. sample.
    """
    if isinstance(spec, dict):
        spec = MeasureSpec.from_dict(spec)
    d = spec.dimension
    if d < 1:
        raise MeasureError("dimension must be at least 1")
    if not spec.total_mass > 0 or not math.isfinite(spec.total_mass):
        raise MeasureError("total mass must be positive")
    n = spec.sample_budget or max(1, int(round(DEFAULT_SAMPLES_PER_MASS * spec.total_mass)))
    if n < 1:
        raise MeasureError("sample budget must be positive")
    rng = np.random.default_rng(spec.seed)

    if spec.kind == "mixture":
        comps = spec.parameters.get("components") or []
        if not comps:
            raise MeasureError("mixture needs at least one component")
        weights = np.array([float(c.get("weight", 1.0)) for c in comps])
        if np.any(weights < 0):
            raise MeasureError("mixture weights must be nonnegative")
        if not weights.sum() > 0:
            raise MeasureError("mixture weights must not all vanish")
        parts = [_Component(c["kind"], c.get("parameters", {}), d) for c in comps]
        probs = weights / weights.sum()
    else:
        parts = [_Component(spec.kind, spec.parameters, d)]
        probs = np.ones(1)

    counts = rng.multinomial(n, probs) if len(parts) > 1 else np.array([n])
    chunks = [p.sample(int(c), rng) if c else np.empty((0, d)) for p, c in zip(parts, counts)]
    samples = np.concatenate(chunks, axis=0)
    if len(parts) > 1:
        samples = samples[rng.permutation(n)]

    mass = spec.total_mass

    def density(x):
        return mass * sum(pr * p.density(x) for pr, p in zip(probs, parts))

    return Measure(
        samples,
        mass,
        density=density,
        support=_bounding_box([p.body for p in parts]),
        label=spec.kind,
    )


def load_sample_cloud(path, total_mass: float, dimension: int | None = None) -> Measure:
    """Empirical measure from a delimited text file, one point per line.

    Each record holds ``dimension`` coordinates and an optional trailing
    weight.  Without ``dimension`` every column is a coordinate.  Commas,
    semicolons and whitespace all separate fields; ``#`` starts a comment.
    """
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.replace(",", " ").replace(";", " ").split()
            try:
                rows.append([float(v) for v in fields])
            except ValueError:
                raise MeasureError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        raise MeasureError(f"{path}: no points")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise MeasureError(f"{path}: inconsistent dimension across records {sorted(widths)}")
    width = widths.pop()
    data = np.array(rows, dtype=float)
    if dimension is None:
        dimension = width
    if width == dimension:
        pts, w = data, None
    elif width == dimension + 1:
        pts, w = data[:, :dimension], data[:, dimension]
        if np.any(w < 0) or not w.sum() > 0:
            raise MeasureError(f"{path}: weights must be nonnegative with positive sum")
    else:
        raise MeasureError(f"{path}: records have {width} fields, expected {dimension} or {dimension + 1}")
    if pts.shape[0] < dimension + 1:
        raise MeasureError(f"{path}: need at least {dimension + 1} points in dimension {dimension}")
    if not total_mass > 0:
        raise MeasureError("total mass must be positive")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 1e-12 * max(1.0, float(np.max(hi - lo)))
    support = ConvexBody.box(lo - pad, hi + pad)
    weights = None if w is None else w * (total_mass / w.sum())
    return Measure(pts, total_mass, sample_weights=weights, support=support, empirical=True, label="cloud")


def joint_bounds(measures: Sequence[Measure]):
    """Axis box ``(lo, hi)`` containing every cached sample of every measure."""
    lo = np.min([m.bounds[0] for m in measures], axis=0)
    hi = np.max([m.bounds[1] for m in measures], axis=0)
    return lo, hi
