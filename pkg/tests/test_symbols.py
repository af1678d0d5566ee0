"""Expression DSL: parsing, evaluation, differentiation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triplex.symbols import (
    XI,
    Const,
    EvalDomainError,
    ParseError,
    Var,
    X,
    call,
    differentiate,
    jp_of,
    parse_symbol,
)

CORPUS = [
    "1 - cos(x)",
    "(1 - cos(x))^2",
    "t * sin(x) + 0.5",
    "exp(0 - t) * cos(2 * x)",
    "t^3 - 2 * t + 1",
    "sqrt(1 + t^2)",
    "sin(x) / (2 + cos(x))",
    "jp(2 * xi)",
]


def test_parse_evaluate_matches_numpy():
    t, x = 0.7, 1.3
    expected = [
        1 - math.cos(x),
        (1 - math.cos(x)) ** 2,
        t * math.sin(x) + 0.5,
        math.exp(-t) * math.cos(2 * x),
        t**3 - 2 * t + 1,
        math.sqrt(1 + t**2),
        math.sin(x) / (2 + math.cos(x)),
        math.sqrt(1 + (2 * 1.0) ** 2),
    ]
    for text, val in zip(CORPUS, expected):
        got = parse_symbol(text).evaluate(t, x, 1.0)
        assert np.isclose(got, val, rtol=1e-14, atol=1e-14), text


def test_evaluate_broadcasts_arrays():
    expr = parse_symbol("t * (1 - cos(x)) * xi")
    t = np.linspace(0.1, 1.0, 4)[:, None, None]
    x = np.linspace(0.0, 6.0, 5)[None, :, None]
    xi = np.array([1.0, 2.0])[None, None, :]
    got = expr.evaluate(t, x, xi)
    assert np.broadcast_shapes(got.shape, (4, 5, 2)) == (4, 5, 2)
    assert np.allclose(got, t * (1 - np.cos(x)) * xi)


def test_str_round_trip_preserves_values():
    pts = [(0.3, 0.9, 1.0), (1.0, 4.0, 3.0), (0.05, 2.2, 0.5)]
    for text in CORPUS:
        expr = parse_symbol(text)
        back = parse_symbol(str(expr))
        for t, x, xi in pts:
            assert np.isclose(expr.evaluate(t, x, xi), back.evaluate(t, x, xi),
                              rtol=1e-14, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(CORPUS),
    st.sampled_from(["t", "x"]),
    st.floats(min_value=0.05, max_value=1.0),
    st.floats(min_value=0.1, max_value=6.0),
)
def test_derivative_matches_central_difference(text, var, t, x):
    expr = parse_symbol(text)
    d = differentiate(expr, var, 1)
    h = 1e-5
    if var == "t":
        fd = (expr.evaluate(t + h, x, 1.0) - expr.evaluate(t - h, x, 1.0)) / (2 * h)
    else:
        fd = (expr.evaluate(t, x + h, 1.0) - expr.evaluate(t, x - h, 1.0)) / (2 * h)
    exact = d.evaluate(t, x, 1.0)
    assert abs(exact - fd) <= 1e-7 * (1.0 + abs(exact))


def test_second_derivative_of_polynomial_is_exact():
    expr = parse_symbol("t^3 - 2 * t + 1")
    d2 = differentiate(expr, "t", 2)
    for t in (0.0, 0.5, 2.0):
        assert np.isclose(d2.evaluate(t, 0.0, 1.0), 6 * t, rtol=0, atol=1e-13)


def test_derivative_order_is_capped():
    with pytest.raises(ValueError):
        differentiate(parse_symbol("t^2"), "t", 5)


def test_xi_derivative_of_jp():
    expr = jp_of(XI)
    d = differentiate(expr, "xi", 1)
    for xi in (0.5, 1.0, 8.0):
        assert np.isclose(d.evaluate(0.0, 0.0, xi), xi / math.sqrt(1 + xi**2),
                          rtol=1e-13, atol=0)


def test_operators_build_expressions():
    expr = (Const(2.0) * X - call("sin", X)) / (Const(1.0) + XI**2)
    x, xi = 0.8, 2.0
    assert np.isclose(expr.evaluate(0.0, x, xi),
                      (2 * x - math.sin(x)) / (1 + xi**2), rtol=1e-14)
    neg = -Var("t")
    assert neg.evaluate(3.0, 0.0, 1.0) == -3.0


@pytest.mark.parametrize("bad", ["", "1 +", "cos(", "t $ x", "foo(t)", "(1))"])
def test_parse_errors(bad):
    with pytest.raises(ParseError):
        parse_symbol(bad)


def test_domain_errors_surface():
    with pytest.raises(EvalDomainError):
        parse_symbol("sqrt(t - 2)").evaluate(0.0, 0.0, 1.0)
    with pytest.raises(EvalDomainError):
        parse_symbol("1 / (t - 1)").evaluate(1.0, 0.0, 1.0)


def test_division_derivative_quotient_rule():
    expr = parse_symbol("sin(x) / (2 + cos(x))")
    d = differentiate(expr, "x", 1)
    x = 1.1
    num = math.cos(x) * (2 + math.cos(x)) + math.sin(x) ** 2
    assert np.isclose(d.evaluate(0.0, x, 1.0), num / (2 + math.cos(x)) ** 2,
                      rtol=1e-13)
