"""Plain-text serialization: CSV for fields and profiles, JSON for metadata.

Every JSON document carries ``"format": 1``.  Floats are written with 17
significant digits so that a write/read cycle is exact.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .discretization import ScalarField
from .errors import SMSEError
from .solver import ContinuationTrace, TraceStep

FORMAT = 1


class FileFormatError(SMSEError, ValueError):
    """A CSV or JSON artifact is missing, malformed or does not fit the grid."""


def _clean(obj):
    # JSON has no inf/nan: map them to null
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(path, doc):
    text = json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise FileFormatError(f"missing file {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                              f"{exc.msg}") from None


def _write_csv(path, header, columns):
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def _read_csv(path, header):
    path = Path(path)
    if not path.is_file():
        raise FileFormatError(f"missing file {path}")
    with open(path) as fh:
        first = fh.readline().strip()
    if first != ",".join(header):
        raise FileFormatError(f"{path}: expected header {','.join(header)!r}, got {first!r}")
    try:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# nodal fields
# ---------------------------------------------------------------------------

def field_metadata(field, params=None):
    grid = field.grid
    lo, hi = grid.domain.bbox
    meta = {
        "format": FORMAT,
        "h": grid.h,
        "bbox": [list(lo), list(hi)],
        "origin": grid.origin.tolist(),
        "nx": grid.nx,
        "ny": grid.ny,
        "n_active": grid.n_active,
    }
    if params is not None:
        meta["params"] = {"alpha": params.alpha, "n": params.n, "t": params.t}
    return meta


def write_field(path, field, params=None):
    """Write ``path`` (x,y,u rows in unknown order) and ``path`` with .json suffix."""
    path = Path(path)
    _write_csv(path, ("x", "y", "u"), (field.grid.xy[:, 0], field.grid.xy[:, 1], field.values))
    write_json(path.with_suffix(".json"), field_metadata(field, params))


def read_field(path, grid):
    """Load a field written by ``write_field`` onto ``grid``.

    Rows are matched to unknowns by lattice index, so the row order in the
    file is irrelevant; every active node must appear exactly once.
    """
    data = _read_csv(path, ("x", "y", "u"))
    if data.shape[1] != 3:
        raise FileFormatError(f"{path}: expected 3 columns")
    h = grid.h
    i = np.rint((data[:, 0] - grid.origin[0]) / h).astype(int)
    j = np.rint((data[:, 1] - grid.origin[1]) / h).astype(int)
    ok = (i >= 0) & (i < grid.nx) & (j >= 0) & (j < grid.ny)
    if not np.all(ok):
        raise FileFormatError(f"{path}: {int(np.sum(~ok))} rows fall outside the grid")
    k = grid.index[i, j]
    if np.any(k < 0):
        raise FileFormatError(f"{path}: {int(np.sum(k < 0))} rows are not active nodes")
    if len(k) != grid.n_active or len(np.unique(k)) != grid.n_active:
        raise FileFormatError(f"{path}: expected each of {grid.n_active} active nodes once, "
                              f"got {len(k)} rows ({len(np.unique(k))} distinct)")
    values = np.empty(grid.n_active)
    values[k] = data[:, 2]
    return ScalarField(grid, values)


def read_field_metadata(path):
    meta = read_json(Path(path).with_suffix(".json"))
    if meta.get("format") != FORMAT:
        raise FileFormatError(f"{path}: unsupported format {meta.get('format')!r}")
    return meta


# ---------------------------------------------------------------------------
# continuation trace
# ---------------------------------------------------------------------------

def write_trace(path, trace, extra=None):
    doc = {"format": FORMAT, **trace.as_dict()}
    if extra:
        doc.update(extra)
    write_json(path, doc)


def read_trace(path):
    doc = read_json(path)
    if doc.get("format") != FORMAT:
        raise FileFormatError(f"{path}: unsupported format {doc.get('format')!r}")
    steps = []
    for s in doc.get("steps", []):
        res = s["final_residual_norm"]
        steps.append(TraceStep(
            float(s["t"]), int(s["newton_iterations"]),
            math.inf if res is None else float(res),
            math.nan if s["min_u"] is None else float(s["min_u"]),
            math.nan if s["max_grad"] is None else float(s["max_grad"]),
            bool(s["step_accepted"]),
        ))
    return ContinuationTrace(steps=steps, newton_tol=float(doc["newton_tol"]))


# ---------------------------------------------------------------------------
# radial profiles
# ---------------------------------------------------------------------------

def write_profile(path, profile, extra=None):
    """CSV s,r,u,theta plus a JSON sidecar {alpha, n, u0, R}."""
    path = Path(path)
    _write_csv(path, ("s", "r", "u", "theta"),
               (profile.s, profile.r, profile.u, profile.theta))
    doc = {"format": FORMAT, "alpha": profile.params.alpha_t, "n": profile.params.n,
           "u0": profile.u0, "R": profile.R}
    if extra:
        doc.update(extra)
    write_json(path.with_suffix(".json"), doc)


def read_profile_samples(path):
    return _read_csv(path, ("s", "r", "u", "theta"))
