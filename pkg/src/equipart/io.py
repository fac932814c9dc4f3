"""Spec files, partition files and reports.

Everything is JSON.  Floats in partition files are written with 17
significant digits so halfspaces survive a write/read cycle bit for bit.
"""
from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

from .measures import Measure, MeasureError, MeasureSpec, build_measure, load_sample_cloud

PARTITION_FORMAT = "equipart-partition/1"


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    text = format(x, ".17g")
    if "e" not in text and "." not in text and "n" not in text:
        text += ".0"
    return text


def dumps(obj, indent: int = 1, _level: int = 0) -> str:
    """Deterministic JSON with 17-significant-digit floats.

    Lists of scalars stay on one line; everything else is indented.
    """
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    return json.dumps(str(obj))


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


# --- measures ---------------------------------------------------------------


def read_measure_spec(path) -> dict:
    """Load a measure spec and resolve relative sample-cloud paths."""
    try:
        data = read_json(path)
    except json.JSONDecodeError as exc:
        raise MeasureError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise MeasureError(f"{path}: measure spec must be a JSON object")
    if data.get("kind") == "samples":
        params = dict(data.get("parameters", {}))
        cloud = params.get("path")
        if cloud is None:
            raise MeasureError(f"{path}: sample cloud spec needs parameters.path")
        if not os.path.isabs(cloud):
            params["path"] = str(Path(path).resolve().parent / cloud)
        data = dict(data, parameters=params)
    return data


def measure_from_spec(data: dict, samples_per_mass: int | None = None, mass: float | None = None) -> Measure:
    """Build a measure from a spec dict.

    Without an explicit ``sample_budget`` the budget is ``samples_per_mass``
    times ``mass`` (the mass the measure will be rescaled to).
    """
    data = dict(data)
    if data.get("kind") == "samples":
        params = data.get("parameters", {})
        return load_sample_cloud(params["path"], float(data.get("total_mass", 1.0)),
                                 data.get("dimension"))
    if data.get("sample_budget") is None and samples_per_mass is not None:
        target = mass if mass is not None else float(data.get("total_mass", 1.0))
        data["sample_budget"] = int(round(samples_per_mass * target))
    return build_measure(MeasureSpec.from_dict(data))


# --- partitions -------------------------------------------------------------


def halfspaces_to_records(halfspaces) -> list:
    return [{"normal": [float(v) for v in np.asarray(n)], "offset": float(o)} for n, o in halfspaces]


def records_to_halfspaces(records) -> list:
    return [(np.asarray(r["normal"], dtype=float), float(r["offset"])) for r in records]


def partition_document(result, measure_specs, tolerance: float, dimension: int, polygons=None) -> dict:
    """Serializable record of an :class:`EquipartitionResult`."""
    doc = {
        "format": PARTITION_FORMAT,
        "dimension": dimension,
        "k": result.k,
        "measures": list(measure_specs),
        "tolerance": tolerance,
        "max_deviation": result.max_deviation,
        "coverage_defects": result.report.coverage_defects,
        "parts": [
            {
                "index": j,
                "path": list(part.path),
                "masses": [float(v) for v in part.masses],
                "halfspaces": halfspaces_to_records(part.halfspaces),
            }
            for j, part in enumerate(result.parts)
        ],
        "tree": result.tree.to_dict(),
    }
    if polygons is not None:
        doc["polygons"] = polygon_records(polygons)
    return doc


def read_partition(path) -> dict:
    """Load a partition file; ``parts`` are returned as halfspace lists."""
    doc = read_json(path)
    if doc.get("format") != PARTITION_FORMAT:
        raise ValueError(f"{path}: not an equipart partition file")
    doc["part_halfspaces"] = [records_to_halfspaces(p["halfspaces"]) for p in doc["parts"]]
    return doc


def polygon_records(polygons) -> list:
    return [{"cell": j, "vertices": np.asarray(poly).tolist()} for j, poly in enumerate(polygons)]
