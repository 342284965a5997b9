import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from smse.errors import ExpressionError
from smse.expr import parse_expression


@pytest.mark.parametrize("text, x, y, expected", [
    ("1+0.1*x", 2.0, 0.0, 1.2),
    ("2^3^2", 0, 0, 512.0),          # right associative
    ("-2^2", 0, 0, -4.0),            # power binds tighter than unary minus
    ("(1+x)*(1-y)", 1.0, 3.0, -4.0),
    ("x/y/2", 8.0, 2.0, 2.0),
    ("sqrt(x^2+y^2)", 3.0, 4.0, 5.0),
    ("exp(log(3))", 0, 0, 3.0),
    ("sin(x)^2+cos(x)^2", 0.7, 0, 1.0),
    ("1.5e-1*10", 0, 0, 1.5),
    (".5 + 1.", 0, 0, 1.5),
])
def test_values(text, x, y, expected):
    f = parse_expression(text)
    assert f(x, y) == pytest.approx(expected, rel=1e-14)


def test_vectorized_constant_broadcasts():
    f = parse_expression("3")
    out = f(np.zeros(5), np.zeros(5))
    assert out.shape == (5,) and np.all(out == 3.0)


def test_source_kept():
    assert parse_expression("x + y").source == "x + y"


@pytest.mark.parametrize("bad", ["", "1+", "(x", "x)", "foo(x)", "2**3", "x $ y", "sin x", "3 4"])
def test_malformed(bad):
    with pytest.raises(ExpressionError):
        parse_expression(bad)


finite = st.floats(-50, 50, allow_nan=False)


@given(finite, finite, finite, finite)
def test_polynomial_matches_python(a, b, x, y):
    f = parse_expression(f"({a!r})*x^2 - ({b!r})*x*y + y")
    expected = a * x * x - b * x * y + y
    assert f(x, y) == pytest.approx(expected, rel=1e-12, abs=1e-9)
