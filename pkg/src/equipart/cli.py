"""Command-line entry point.

    equipart equipartition --k 4 --measure a.json --measure b.json --out run/ --svg
    equipart verify --partition run/partition.json --out run/
    equipart capacities --measure a.json --sites sites.csv --out run/
    equipart hamcheck --measure a.json --measure b.json --out run/

Exit status: 0 on success, 1 when a solve fails or a check is out of
tolerance, 2 on unusable input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .capacity import CapacityProblem, CapacitySolveError, solve_capacities
from .equipartition import DEFAULT_TOLERANCE, EquipartitionError, SearchParams, equipartition
from .io import (
    measure_from_spec,
    partition_document,
    polygon_records,
    read_measure_spec,
    read_partition,
    write_json,
)
from .measures import DEFAULT_SAMPLES_PER_MASS, MeasureError, joint_bounds
from .power_diagram import SiteConfig, clip_to_cell
from .svg import render_svg
from .verify import brute_force_hyperplane, verify_partition

log = logging.getLogger("equipart")

HAMCHECK_MARGIN = 5e-3


class InputError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="equipart", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, measures_required=True):
        p.add_argument("--measure", action="append", default=[], required=measures_required,
                       help="measure spec file (repeatable)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES_PER_MASS,
                       help="samples per unit mass when a spec sets no budget")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("equipartition", help="split into k parts of equal mass under every measure")
    common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--restarts", type=int, default=SearchParams.restarts)

    p = sub.add_parser("verify", help="recheck a partition file")
    common(p, measures_required=False)
    p.add_argument("--partition", required=True)
    p.add_argument("--fresh", action="store_true", help="also re-verify on freshly seeded samples")

    p = sub.add_parser("capacities", help="solve power-diagram weights for given capacities")
    common(p)
    p.add_argument("--sites", required=True, help="file with d coordinates and optional capacity per line")

    p = sub.add_parser("hamcheck", help="k = 2 in the plane against the brute-force line oracle")
    common(p)
    p.add_argument("--angles", type=int, default=720)
    p.add_argument("--offsets", type=int, default=500)
    p.add_argument("--restarts", type=int, default=SearchParams.restarts)
    return ap


def _load_specs(paths):
    specs = []
    for path in paths:
        if not Path(path).exists():
            raise InputError(f"measure spec {path} does not exist")
        specs.append(read_measure_spec(path))
    return specs


def _build(specs, samples, mass=None, seed_offset=0):
    measures = []
    for spec in specs:
        if seed_offset:
            spec = dict(spec, seed=int(spec.get("seed", 0)) + seed_offset)
        measures.append(measure_from_spec(spec, samples, mass))
    if len({m.dimension for m in measures}) != 1:
        raise InputError("measures have inconsistent dimensions")
    return measures


def _resolved_specs(specs, measures):
    out = []
    for spec, m in zip(specs, measures):
        spec = dict(spec)
        if spec.get("kind") != "samples":
            spec["sample_budget"] = m.n_samples
        out.append(spec)
    return out


def _rescale(measures, k):
    return [m if abs(m.total_mass - k) <= 1e-12 * k else m.scaled(k / m.total_mass) for m in measures]


def _polygons(parts, measures):
    lo, hi = joint_bounds(measures)
    pad = 0.02 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    box = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    return [clip_to_cell(box, hs) for hs in parts], lo, hi


def cmd_equipartition(args, out: Path) -> int:
    if args.k < 1:
        raise InputError("--k must be a positive integer")
    tol = DEFAULT_TOLERANCE if args.tol is None else args.tol
    specs = _load_specs(args.measure)
    measures = _build(specs, args.samples, mass=args.k)
    d = measures[0].dimension
    search = SearchParams(restarts=args.restarts, seed=args.seed)
    try:
        result = equipartition(args.k, measures, search, tolerance=tol)
    except EquipartitionError as exc:
        failure = {
            "command": "equipartition",
            "stage": exc.stage,
            "path": list(exc.path),
            "residual": None if not np.isfinite(exc.residual) else float(exc.residual),
            "message": str(exc),
        }
        write_json(out / "failure.json", failure)
        print(f"equipartition failed: {exc} (see {out / 'failure.json'})", file=sys.stderr)
        return 1
    parts = [p.halfspaces for p in result.parts]
    polys = None
    if d == 2:
        polys, lo, hi = _polygons(parts, measures)
    doc = partition_document(result, _resolved_specs(specs, measures), tol, d, polys)
    write_json(out / "partition.json", doc)
    write_json(out / "report.json", dict(result.report.to_dict(), tolerance=tol, passed=result.report.ok(tol)))
    if args.svg:
        if d == 2:
            svg = render_svg(polygon_records(polys), _rescale(measures, args.k), lo, hi,
                             title=f"k={args.k} max deviation {result.max_deviation:.3g}")
            (out / "partition.svg").write_text(svg)
        else:
            print(f"note: SVG output is only produced for d = 2 (got d = {d})", file=sys.stderr)
    print(f"k={args.k} parts={len(parts)} max_deviation={result.max_deviation:.6g} "
          f"coverage_defects={result.report.coverage_defects}")
    return 0 if result.report.ok(tol) else 1


def cmd_verify(args, out: Path) -> int:
    try:
        doc = read_partition(args.partition)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read partition file: {exc}") from None
    k = int(doc["k"])
    tol = float(doc.get("tolerance", DEFAULT_TOLERANCE)) if args.tol is None else args.tol
    specs = _load_specs(args.measure) if args.measure else doc["measures"]
    measures = _rescale(_build(specs, args.samples, mass=k), k)
    if any(len(hs) and len(hs[0][0]) != measures[0].dimension for hs in doc["part_halfspaces"]):
        raise InputError("partition dimension does not match the measures")
    fresh = _rescale(_build(specs, args.samples, mass=k, seed_offset=1), k) if args.fresh else None
    report = verify_partition(doc["part_halfspaces"], measures, target=1.0, fresh_measures=fresh)
    passed = report.ok(tol) and len(doc["part_halfspaces"]) == k
    write_json(out / "verify.json", dict(report.to_dict(), tolerance=tol, passed=passed))
    print(f"max_deviation={report.max_deviation:.6g} coverage_defects={report.coverage_defects} "
          f"convexity_ok={report.convexity_ok} passed={passed}")
    return 0 if passed else 1


def _read_sites(path, d):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append([float(v) for v in line.replace(",", " ").split()])
    if not rows or {len(r) for r in rows} - {d, d + 1} or len({len(r) for r in rows}) != 1:
        raise InputError(f"{path}: each line needs {d} coordinates and an optional capacity")
    data = np.array(rows)
    return data[:, :d], (data[:, d] if data.shape[1] == d + 1 else None)


def cmd_capacities(args, out: Path) -> int:
    specs = _load_specs(args.measure)
    if len(specs) != 1:
        raise InputError("capacities takes exactly one --measure")
    (m,) = _build(specs, args.samples)
    try:
        sites, caps = _read_sites(args.sites, m.dimension)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from None
    caps = np.ones(len(sites)) if caps is None else caps
    caps = caps * (m.total_mass / caps.sum())
    try:
        problem = CapacityProblem(SiteConfig(sites, caps), m, args.tol)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    try:
        sol = solve_capacities(problem, verbose=args.verbose)
        status = 0
    except CapacitySolveError as exc:
        sol = exc.best
        status = 1
    write_json(out / "capacities.json", {
        "sites": sites, "capacities": caps, "weights": sol.weights,
        "cell_masses": sol.cell_masses, "residual": sol.residual,
        "tolerance": problem.tolerance, "iterations": sol.iterations, "converged": sol.converged,
    })
    print(f"residual={sol.residual:.3g} iterations={sol.iterations} converged={sol.converged}")
    return status


def cmd_hamcheck(args, out: Path) -> int:
    specs = _load_specs(args.measure)
    measures = _rescale(_build(specs, args.samples, mass=2), 2)
    if measures[0].dimension != 2 or len(measures) != 2:
        raise InputError("hamcheck needs two measures in the plane")
    tol = DEFAULT_TOLERANCE if args.tol is None else args.tol
    try:
        result = equipartition(2, measures, SearchParams(restarts=args.restarts, seed=args.seed), tol)
    except EquipartitionError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 1
    oracle = brute_force_hyperplane(measures, args.angles, args.offsets)
    passed = result.max_deviation <= oracle.deviation + HAMCHECK_MARGIN
    write_json(out / "hamcheck.json", {
        "solver_deviation": result.max_deviation,
        "oracle_deviation": oracle.deviation,
        "oracle_normal": oracle.normal,
        "oracle_offset": oracle.offset,
        "margin": HAMCHECK_MARGIN,
        "passed": passed,
    })
    print(f"solver={result.max_deviation:.6g} oracle={oracle.deviation:.6g} passed={passed}")
    return 0 if passed else 1


COMMANDS = {
    "equipartition": cmd_equipartition,
    "verify": cmd_verify,
    "capacities": cmd_capacities,
    "hamcheck": cmd_hamcheck,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s %(message)s")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, out)
    except (InputError, MeasureError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
