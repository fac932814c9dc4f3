"""Convex equipartitions of measures via capacity-constrained power diagrams."""

__version__ = "0.1.0"

from .capacity import (
    CapacityProblem,
    CapacitySolution,
    CapacitySolveError,
    dual_objective,
    merge_continuity_probe,
    solve_capacities,
)
from .equipartition import (
    EquipartitionError,
    EquipartitionResult,
    SearchParams,
    discrepancy_map,
    equipartition,
    solve_composite,
    solve_prime,
    weight_profile,
)
from .kernels import BACKEND
from .measures import (
    CellRestriction,
    ConvexBody,
    Measure,
    MeasureError,
    MeasureSpec,
    build_measure,
    integrate,
    load_sample_cloud,
    restrict,
)
from .power_diagram import (
    PowerPartition,
    SiteConfig,
    cell_halfspaces,
    cell_measure,
    classify,
    extract_polygons_2d,
    power_value,
)
from .verify import PartitionReport, brute_force_hyperplane, verify_partition
