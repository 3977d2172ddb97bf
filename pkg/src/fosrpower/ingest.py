"""Reading functional and covariate CSV files into a FunctionalDataset.

Functional files come in two layouts:

* wide: ``id, v_1, ..., v_P``.  When every value header parses as a number
  the headers are the observation points; otherwise the points are
  ``P`` equally spaced values on [0, 1].
* long: exactly the columns ``id, s, value``, one row per observation.

Observation points are mapped affinely to [0, 1]; the map is kept on the
dataset.  Covariate files are ``id, X_1, ..., X_Q``.  A covariate column
with non-numeric entries and exactly two levels is coded 0/1 (levels in
sorted order) and the coding is recorded.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .data import FunctionalDataset
from .exceptions import (
    DuplicateIdError,
    IdMismatchError,
    IngestError,
    MissingValueError,
    NonNumericError,
    RaggedRowError,
)
from .fungrid import Grid

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none"})
LONG_HEADER = ("id", "s", "value")


@dataclass(frozen=True)
class DatasetManifest:
    """Where to find a dataset and how to read it.

    ``covariates`` selects and orders covariate columns (all when empty);
    ``binary`` names columns that must be two-level.
    """

    functional_path: str
    covariate_path: str
    covariates: tuple = ()
    binary: tuple = ()


def _read_rows(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IngestError(f"cannot read file: {exc.strerror}", path) from exc
    # (line number, cells); drop blank lines but keep numbering
    out = [(i + 1, [c.strip() for c in r]) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not out:
        raise IngestError("file is empty", path)
    return out


def _parse_float(cell, path, line, column, missing_error=True):
    if cell.lower() in MISSING_TOKENS:
        if missing_error:
            raise MissingValueError(f"missing value in column {column!r}", path, line)
        return math.nan
    try:
        v = float(cell)
    except ValueError:
        raise NonNumericError(f"non-numeric value {cell!r} in column {column!r}", path, line) from None
    if not math.isfinite(v):
        raise NonNumericError(f"non-finite value {cell!r} in column {column!r}", path, line)
    return v


def _try_float(text):
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _check_header(header, path):
    if not header or header[0].lower() != "id":
        raise IngestError("first column must be 'id'", path, 1)
    seen = set()
    for name in header:
        if name in seen:
            raise IngestError(f"duplicate column {name!r}", path, 1)
        seen.add(name)


def _read_wide(rows, path):
    line0, header = rows[0]
    P = len(header) - 1
    if P < 2:
        raise IngestError("need at least two value columns", path, line0)
    points = [_try_float(h) for h in header[1:]]
    explicit = all(p is not None for p in points)
    ids, values, seen = [], [], {}
    bad_rows = []
    for line, cells in rows[1:]:
        if len(cells) != len(header):
            raise RaggedRowError(f"expected {len(header)} cells, found {len(cells)}", path, line)
        sid = cells[0]
        if sid in seen:
            raise DuplicateIdError(f"id {sid!r} already used on line {seen[sid]}", path, line)
        seen[sid] = line
        try:
            row = [_parse_float(c, path, line, header[j + 1]) for j, c in enumerate(cells[1:])]
        except MissingValueError as exc:
            bad_rows.append(str(exc))
            continue
        ids.append(sid)
        values.append(row)
    if bad_rows:
        raise MissingValueError(
            f"{len(bad_rows)} row(s) with missing values:\n  " + "\n  ".join(bad_rows), path
        )
    if not ids:
        raise IngestError("no data rows", path)
    pts = np.array(points, dtype=float) if explicit else None
    return ids, np.array(values, dtype=float), pts


def _read_long(rows, path):
    by_id = {}
    order = []
    for line, cells in rows[1:]:
        if len(cells) != 3:
            raise RaggedRowError(f"expected 3 cells, found {len(cells)}", path, line)
        sid = cells[0]
        s = _parse_float(cells[1], path, line, "s")
        v = _parse_float(cells[2], path, line, "value")
        if sid not in by_id:
            by_id[sid] = {}
            order.append(sid)
        if s in by_id[sid]:
            raise DuplicateIdError(f"id {sid!r} has a second observation at s={cells[1]}", path, line)
        by_id[sid][s] = (v, line)
    if not order:
        raise IngestError("no data rows", path)
    points = sorted(by_id[order[0]])
    ref = set(points)
    for sid in order[1:]:
        obs = by_id[sid]
        if set(obs) != ref:
            extra = sorted(set(obs) - ref)
            line = obs[extra[0]][1] if extra else max(l for _, l in obs.values())
            raise RaggedRowError(
                f"id {sid!r} is observed at {len(obs)} points that differ from the {len(ref)} points of id {order[0]!r}",
                path, line,
            )
    Y = np.array([[by_id[sid][s][0] for s in points] for sid in order], dtype=float)
    return order, Y, np.array(points, dtype=float)


def read_functional(path):
    """Return ``(ids, Y, points or None)`` from a wide or long CSV."""
    rows = _read_rows(path)
    header = rows[0][1]
    _check_header(header, path)
    if tuple(h.lower() for h in header) == LONG_HEADER:
        return _read_long(rows, path)
    return _read_wide(rows, path)


def read_covariates(path, select=(), binary=()):
    """Return ``(ids, X, names, encodings)`` from a covariate CSV."""
    rows = _read_rows(path)
    line0, header = rows[0]
    _check_header(header, path)
    names = list(header[1:])
    if not names:
        raise IngestError("covariate file has no covariate columns", path, line0)
    select = tuple(select) or tuple(names)
    for name in tuple(select) + tuple(binary):
        if name not in names:
            raise IngestError(f"unknown covariate {name!r}; file has {names}", path, line0)
    ids, raw, seen = [], [], {}
    for line, cells in rows[1:]:
        if len(cells) != len(header):
            raise RaggedRowError(f"expected {len(header)} cells, found {len(cells)}", path, line)
        sid = cells[0]
        if sid in seen:
            raise DuplicateIdError(f"id {sid!r} already used on line {seen[sid]}", path, line)
        seen[sid] = line
        ids.append(sid)
        raw.append((line, cells[1:]))
    if not ids:
        raise IngestError("no data rows", path)
    columns, encodings = [], {}
    for name in select:
        j = names.index(name)
        cells = [(line, r[j]) for line, r in raw]
        numeric = [_try_float(c) for _, c in cells]
        levels = sorted({c for _, c in cells})
        if name in binary or any(v is None for v in numeric):
            if len(levels) != 2:
                if any(v is None for v in numeric) and name not in binary:
                    line, cell = next((l, c) for (l, c), v in zip(cells, numeric) if v is None)
                    if cell.lower() in MISSING_TOKENS:
                        raise MissingValueError(f"missing value in column {name!r}", path, line)
                    raise NonNumericError(
                        f"non-numeric value {cell!r} in column {name!r} (not a two-level column)", path, line
                    )
                raise IngestError(f"binary covariate {name!r} has {len(levels)} levels, expected 2", path)
            if all(v is not None for v in numeric):
                levels = sorted(levels, key=float)
            code = {lev: float(k) for k, lev in enumerate(levels)}
            columns.append([code[c] for _, c in cells])
            encodings[name] = {lev: int(k) for lev, k in code.items()}
        else:
            columns.append(numeric)
    X = np.array(columns, dtype=float).T
    return ids, X, tuple(select), encodings


def unit_grid(points):
    """Map increasing points affinely to [0, 1]; returns (Grid, offset, scale)."""
    points = np.asarray(points, dtype=float)
    lo, hi = float(points[0]), float(points[-1])
    if not np.all(np.diff(points) > 0):
        raise IngestError("observation points must be strictly increasing")
    scale = hi - lo
    if lo == 0.0 and hi == 1.0:
        return Grid(points), 0.0, 1.0
    return Grid((points - lo) / scale), lo, scale


def ingest(manifest):
    """Read, validate and align the two files of ``manifest``."""
    fpath, cpath = manifest.functional_path, manifest.covariate_path
    ids, Y, points = read_functional(fpath)
    cids, X, names, enc = read_covariates(cpath, manifest.covariates, manifest.binary)
    cid_set, fid_set = set(cids), set(ids)
    missing_cov = [i for i in ids if i not in cid_set]
    if missing_cov:
        raise IdMismatchError(f"id {missing_cov[0]!r} has no covariate row ({len(missing_cov)} missing)", cpath)
    extra = [i for i in cids if i not in fid_set]
    if extra:
        raise IdMismatchError(f"id {extra[0]!r} has no functional row ({len(extra)} unmatched)", fpath)
    pos = {sid: k for k, sid in enumerate(cids)}
    X = X[[pos[sid] for sid in ids]]
    if points is None:
        points = np.linspace(0.0, 1.0, Y.shape[1])
    grid, offset, scale = unit_grid(points)
    return FunctionalDataset(grid, Y, X, ids=tuple(ids), covariate_names=names,
                             grid_offset=offset, grid_scale=scale, covariate_encodings=enc)
