import functools
import math

import numpy as np
import pytest

from smse import geometry as G
from smse.solver import ContinuationOptions, continuation_solve

SQRT3_2 = math.sqrt(3.0) / 2

# filled by test_acceptance; printed at the end of the session
ACCEPTANCE_LINES = {}


def record(number, title, passed, detail=""):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


MATRIX_DOMAINS = {
    ("disk", "const"): lambda: G.disk(0.5, phi=1.0),
    ("disk", "affine"): lambda: G.disk(0.5, phi="1+0.1*x"),
    ("ellipse", "const"): lambda: G.ellipse(0.6, 0.4, phi=1.0),
    ("ellipse", "affine"): lambda: G.ellipse(0.6, 0.4, phi="1+0.1*x"),
}
MATRIX_ALPHAS = (-0.5, -2.0)
MATRIX_H = 1 / 32
MATRIX_CASES = [(s, p, a) for (s, p) in MATRIX_DOMAINS for a in MATRIX_ALPHAS]


SNAPSHOT_T = (0.0, 0.25, 0.5, 0.75, 1.0)


@functools.lru_cache(maxsize=None)
def matrix_solution(shape, phi, alpha, h=MATRIX_H):
    domain = MATRIX_DOMAINS[(shape, phi)]()
    grid = G.build_grid(domain, h)
    u, trace = continuation_solve(domain, grid, alpha, ContinuationOptions(snapshots=SNAPSHOT_T))
    return domain, grid, u, trace


@functools.lru_cache(maxsize=None)
def hemisphere_solution(h):
    domain = G.disk(0.5, phi=SQRT3_2)
    grid = G.build_grid(domain, h)
    u, trace = continuation_solve(domain, grid, -2.0)
    return domain, grid, u, trace


def hemisphere_values(xy, rho=1.0):
    return np.sqrt(rho * rho - np.sum(np.asarray(xy) ** 2, axis=1))


@pytest.fixture
def rng():
    return np.random.default_rng(20241014)
