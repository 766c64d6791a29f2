"""Report serialization: stable-order JSON and the simulation CSV tables."""

from __future__ import annotations

import csv
import dataclasses
import json
from typing import Any

import numpy as np

TABLE_COLUMNS = (
    "implementation",
    "ps_model",
    "method",
    "empirical_var",
    "avg_total_var",
    "avg_between_var",
    "avg_within_var",
    "bias",
    "avg_prop_du",
    "coverage",
    "mse",
    "replicates",
    "failures",
)

FIGURE_COLUMNS = (
    "implementation",
    "ps_model",
    "replicate",
    "prop_du",
    "log_between_var",
    "log_within_var",
    "error",
)


def to_jsonable(obj: Any) -> Any:
    """Recursively convert dataclasses / numpy values into JSON types."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dump_json(obj: Any) -> str:
    """Serialize with sorted keys so identical runs yield identical bytes."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=True)


def write_json(obj: Any, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_json(obj))
        fh.write("\n")


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table_csv(rows, path, columns=TABLE_COLUMNS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row.get(c, "")) for c in columns])


def write_figure_csv(rows, path) -> None:
    write_table_csv(rows, path, columns=FIGURE_COLUMNS)
