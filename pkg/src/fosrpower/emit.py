"""Deterministic CSV/JSON writers.

Floats are written with ``repr`` so that reading a file back gives the
same bits, and JSON keys are sorted, so identical inputs produce
byte-identical files.
"""

import csv
import json
import math
import os
import re

import numpy as np

from .exceptions import FosrPowerError


class EmitError(FosrPowerError, OSError):
    pass


def format_cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "NA"
        return repr(v)
    if value is None:
        return "NA"
    return str(value)


def write_csv(path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([format_cell(v) for v in row])
    except OSError as exc:
        raise EmitError(f"{path}: cannot write ({exc.strerror})") from exc
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    return obj


def write_json(path, obj):
    try:
        with open(path, "w") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise EmitError(f"{path}: cannot write ({exc.strerror})") from exc
    return path


def safe_name(name):
    """File-name fragment for a covariate name."""
    s = re.sub(r"[^A-Za-z0-9_.-]+", "_", str(name)).strip("._")
    return s or "covariate"


def ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise EmitError(f"{path}: cannot create output directory ({exc.strerror})") from exc
    return path


def write_dataset(dataset, out_dir, functional_name="functional.csv", covariate_name="covariates.csv"):
    """Write a dataset as a wide functional CSV plus a covariate CSV."""
    ensure_dir(out_dir)
    pts = dataset.original_points()
    fpath = write_csv(
        os.path.join(out_dir, functional_name),
        ["id"] + [format_cell(p) for p in pts],
        ([sid] + list(row) for sid, row in zip(dataset.ids, dataset.Y)),
    )
    cpath = write_csv(
        os.path.join(out_dir, covariate_name),
        ["id"] + list(dataset.covariate_names),
        ([sid] + list(row) for sid, row in zip(dataset.ids, dataset.X)),
    )
    return fpath, cpath
