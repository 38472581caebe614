"""Deterministic CSV / JSON writers shared by the library and the CLI."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    """Shortest round-tripping text for a scalar; complex as ``a+bj``."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (complex, np.complexfloating)):
        return repr(complex(x)).strip("()")
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return repr(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def write_matrix_csv(path, matrix, row_axis, col_axis, row_label: str, col_label: str,
                     metadata: dict) -> Path:
    """Matrix CSV with axis values in the header row / first column and a JSON sidecar.

    The sidecar is written next to the CSV as ``<name>.json``.
    """
    path = Path(path)
    matrix = np.asarray(matrix)
    header = [f"{row_label} \\ {col_label}"] + [fmt(float(v)) for v in col_axis]
    rows = ([float(r)] + list(line) for r, line in zip(row_axis, matrix))
    write_csv(path, header, rows)
    meta = dict(metadata)
    meta.update({"rows": row_label, "columns": col_label, "shape": list(matrix.shape),
                 "dtype": "complex" if np.iscomplexobj(matrix) else "real"})
    write_json(path.with_suffix(".json"), meta)
    return path


def read_matrix_csv(path):
    """Inverse of :func:`write_matrix_csv`: returns (row_axis, col_axis, matrix)."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    dtype = complex if meta.get("dtype") == "complex" else float
    with path.open() as fh:
        r = csv.reader(fh)
        header = next(r)
        body = list(r)
    cols = np.array([float(v) for v in header[1:]])
    rows = np.array([float(line[0]) for line in body])
    mat = np.array([[dtype(v) for v in line[1:]] for line in body])
    return rows, cols, mat
