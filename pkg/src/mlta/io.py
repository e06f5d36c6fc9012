"""CSV/JSON interchange for datasets, models and fit results."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .data import INTERCEPT, CovariateDesign, Dataset, IncidenceMatrix
from .errors import DataError

INCIDENCE_FILE = "incidence.csv"
DESIGN_FILE = "design.csv"
DESIGN_META_FILE = "design_meta.json"


def fmt(x):
    """Shortest round-tripping text for a float."""
    return repr(float(x))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DataError(f"file not found: {path}") from exc


def digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_incidence(incidence, path):
    rows = ([i] + [int(v) for v in row] for i, row in zip(incidence.ids, incidence.values))
    write_csv(path, ["id"] + list(incidence.skills), rows)


def write_design(design, path, meta_path=None):
    rows = ([i] + [fmt(v) if c == INTERCEPT or not float(v).is_integer() else int(v)
                   for c, v in zip(design.columns, row)]
            for i, row in zip(design.ids, design.values))
    write_csv(path, ["id"] + list(design.columns), rows)
    if meta_path is not None:
        write_json(meta_path, {"variables": design.variables,
                               "diagnostics": design.diagnostics})


def _read_matrix(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            body = [row for row in reader if row]
    except FileNotFoundError as exc:
        raise DataError(f"file not found: {path}") from exc
    except StopIteration as exc:
        raise DataError(f"{path}: empty file") from exc
    if not header or header[0] != "id":
        raise DataError(f"{path}: first column must be 'id'")
    ids = [row[0] for row in body]
    try:
        values = np.array([[float(v) for v in row[1:]] for row in body], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric entry ({exc})") from exc
    values = values.reshape(len(ids), len(header) - 1)
    return ids, header[1:], values


def read_incidence(path):
    ids, skills, values = _read_matrix(path)
    return IncidenceMatrix(ids, skills, values.astype(np.int8))


def read_design(path, meta_path=None):
    ids, cols, values = _read_matrix(path)
    variables = {}
    if meta_path is not None and Path(meta_path).exists():
        variables = read_json(meta_path).get("variables", {})
    return CovariateDesign(ids, cols, values, variables)


def write_dataset(dataset, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_incidence(dataset.incidence, d / INCIDENCE_FILE)
    write_design(dataset.design, d / DESIGN_FILE, d / DESIGN_META_FILE)


def read_dataset(directory):
    d = Path(directory)
    incidence = read_incidence(d / INCIDENCE_FILE)
    if (d / DESIGN_FILE).exists():
        design = read_design(d / DESIGN_FILE, d / DESIGN_META_FILE)
    else:
        from .data import intercept_design
        design = intercept_design(incidence.ids)
    return Dataset(incidence, design)
