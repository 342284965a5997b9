import json
import math

import numpy as np
import pytest

from smse import geometry as G
from smse import io
from smse.discretization import ScalarField
from smse.radial import PhysicsParams, integrate_profile
from smse.solver import ContinuationTrace, TraceStep


@pytest.fixture(scope="module")
def grid():
    return G.build_grid(G.ellipse(0.6, 0.4, phi="1+0.1*x"), 1 / 16)


def test_field_roundtrip_is_exact(tmp_path, grid, rng):
    u = ScalarField(grid, rng.uniform(0.5, 2.0, grid.n_active) / 3.0)
    io.write_field(tmp_path / "u.csv", u, PhysicsParams(-1.0, t=0.5))
    back = io.read_field(tmp_path / "u.csv", grid)
    np.testing.assert_array_equal(back.values, u.values)
    meta = io.read_field_metadata(tmp_path / "u.csv")
    assert meta["format"] == 1 and meta["h"] == 1 / 16
    assert meta["params"] == {"alpha": -1.0, "n": 2, "t": 0.5}
    assert meta["nx"] == grid.nx and meta["n_active"] == grid.n_active


def test_field_rows_matched_by_lattice_index(tmp_path, grid, rng):
    u = ScalarField(grid, rng.uniform(1, 2, grid.n_active))
    io.write_field(tmp_path / "u.csv", u)
    lines = (tmp_path / "u.csv").read_text().splitlines()
    body = lines[1:]
    rng.shuffle(body)
    (tmp_path / "v.csv").write_text("\n".join([lines[0]] + body) + "\n")
    np.testing.assert_array_equal(io.read_field(tmp_path / "v.csv", grid).values, u.values)


def test_field_errors(tmp_path, grid):
    u = ScalarField(grid, np.ones(grid.n_active))
    io.write_field(tmp_path / "u.csv", u)
    lines = (tmp_path / "u.csv").read_text().splitlines()
    (tmp_path / "short.csv").write_text("\n".join(lines[:-1]) + "\n")
    (tmp_path / "hdr.csv").write_text("\n".join(["a,b,c"] + lines[1:]) + "\n")
    (tmp_path / "far.csv").write_text("\n".join(lines[:-1] + ["9,9,1"]) + "\n")
    for name in ("short.csv", "hdr.csv", "far.csv", "missing.csv"):
        with pytest.raises(io.FileFormatError):
            io.read_field(tmp_path / name, grid)


def test_trace_roundtrip(tmp_path):
    tr = ContinuationTrace(steps=[TraceStep(0.0, 3, 1e-12, 0.9, 0.4, True),
                                  TraceStep(0.5, -1, math.inf, math.nan, math.nan, False),
                                  TraceStep(0.25, 2, 2e-13, 0.95, 0.5, True)])
    io.write_trace(tmp_path / "t.json", tr, {"status": "ok"})
    doc = json.loads((tmp_path / "t.json").read_text())
    assert doc["format"] == 1 and doc["status"] == "ok"
    assert doc["steps"][1]["final_residual_norm"] is None
    back = io.read_trace(tmp_path / "t.json")
    assert back.accepted_t == [0.0, 0.25]
    assert math.isinf(back.steps[1].final_residual_norm)


def test_invalid_json(tmp_path):
    (tmp_path / "bad.json").write_text('{"a": ')
    with pytest.raises(io.FileFormatError, match="line 1"):
        io.read_json(tmp_path / "bad.json")


def test_profile_files(tmp_path):
    p = integrate_profile(PhysicsParams(-2.0), 1.0)
    io.write_profile(tmp_path / "p.csv", p)
    data = io.read_profile_samples(tmp_path / "p.csv")
    np.testing.assert_array_equal(data, p.samples)
    side = json.loads((tmp_path / "p.json").read_text())
    assert set(side) == {"format", "alpha", "n", "u0", "R"}
    assert side["R"] == p.R
