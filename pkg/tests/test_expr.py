import math

import numpy as np
import pytest

from blendcurv.expr import ExpressionError, parse_scalar


def test_arithmetic_and_functions():
    f = parse_scalar("0.2*sin(x1) + x2**2 - exp(-x3)/2 + cos(pi*x1)", 3)
    p = np.array([0.3, 1.5, 0.7])
    want = 0.2 * math.sin(0.3) + 2.25 - math.exp(-0.7) / 2 + math.cos(math.pi * 0.3)
    assert abs(f(p) - want) <= 1e-15


def test_vectorized_and_constant_shapes():
    pts = np.random.default_rng(0).random((4, 5, 2))
    assert parse_scalar("x1*x2", 2)(pts).shape == (4, 5)
    assert np.all(parse_scalar("e", 2)(pts) == math.e)
    assert np.all(parse_scalar("-(+3)", 2)(pts) == -3.0)


@pytest.mark.parametrize(
    "text",
    ["x4", "y", "sin(x1, x2)", "abs(x1)", "x1.real", "lambda: 1", "x1 if x2 else 0", "[x1]", "x1 //2", "'a'", "sin(", "True"],
)
def test_rejected_expressions(text):
    with pytest.raises(ExpressionError):
        parse_scalar(text, 3)
