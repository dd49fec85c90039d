import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from folia.expr import (
    BinOp,
    DomainError,
    ExprSyntaxError,
    Num,
    UnknownIdentifierError,
    Var,
    diff,
    eval_jet2,
    evaluate,
    free_params,
    parse,
    render,
    scalar,
)

from conftest import fd_grad, fd_hess, value_fn

XYZT = ("x", "y", "z", "t")


def test_variable_node():
    assert parse("z", XYZT) == Var("z", 2)


def test_quotient_with_param():
    e = parse("1/(C*z)", XYZT, {"C": 1.0})
    assert isinstance(e, BinOp) and e.op == "/"
    assert free_params(e) == {"C"}


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("x +* y", XYZT)
    assert info.value.offset == 3


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError):
        parse("1/(C*z)", XYZT)


def test_polynomial_jet():
    v, g, H = scalar(eval_jet2(parse("C*z^2", XYZT, {"C": 1}), (0, 0, 3, 0), {"C": 1.0}))
    assert v == 9 and g[2] == 6 and H[2, 2] == 2


def test_reciprocal_jet():
    v, g, _ = scalar(eval_jet2(parse("1/(C*z)", XYZT, {"C": 1}), (0, 0, 2, 0), {"C": 1.0}))
    assert v == pytest.approx(0.5) and g[2] == pytest.approx(-0.25)


def test_sin_exp_against_fd():
    e = parse("sin(x)*exp(y)", XYZT)
    p = np.array([0.0, 1.0, 0.0, 0.0])
    v, g, H = scalar(eval_jet2(e, p))
    assert v == pytest.approx(0.0, abs=1e-15)
    assert g[0] == pytest.approx(math.e)
    assert H[0, 1] == pytest.approx(math.e)
    assert np.allclose(g, fd_grad(value_fn(e), p), rtol=1e-8)
    assert np.allclose(H, fd_hess(value_fn(e), p), atol=1e-5)


def test_domain_errors():
    with pytest.raises(DomainError):
        eval_jet2(parse("1/z", XYZT), (0, 0, 0, 0))
    with pytest.raises(DomainError):
        eval_jet2(parse("ln(z)", XYZT), (0, 0, -1, 0))
    _, bad = evaluate(parse("sqrt(z)", XYZT), [(0, 0, 1, 0), (0, 0, -1, 0)])
    assert list(bad) == [False, True]


def test_symbolic_diff_matches_jet():
    e = parse("x^3*cos(y) + exp(z*t)/(1 + x^2)", XYZT)
    p = np.array([0.3, -0.4, 0.5, 0.7])
    g = scalar(eval_jet2(e, p))[1]
    for i in range(4):
        assert scalar(eval_jet2(diff(e, i), p))[0] == pytest.approx(g[i], rel=1e-12)


# -- random expressions -----------------------------------------------------------

_LEAVES = ["x", "y", "z", "t", "0.5", "2", "1.5"]


@st.composite
def expressions(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(st.sampled_from(_LEAVES))
    kind = draw(st.sampled_from(["+", "-", "*", "/", "^", "sin", "cos", "exp", "neg"]))
    a = draw(expressions(depth=depth - 1))
    if kind in "+-*":
        return f"({a} {kind} {draw(expressions(depth=depth - 1))})"
    if kind == "/":
        return f"({a} / (2 + cos({draw(expressions(depth=depth - 1))})))"
    if kind == "^":
        return f"({a})^{draw(st.integers(0, 3))}"
    if kind == "neg":
        return f"-({a})"
    if kind == "exp":
        return f"exp(0.3*sin({a}))"
    return f"{kind}({a})"


@settings(max_examples=200, deadline=None)
@given(expressions())
def test_render_parse_round_trip(text):
    e = parse(text, XYZT)
    assert parse(render(e), XYZT) == e


@settings(max_examples=200, deadline=None)
@given(expressions(), st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_random_expression_derivatives_match_fd(text, p):
    e = parse(text, XYZT)
    p = np.array(p)
    v, g, H = scalar(eval_jet2(e, p))
    f = value_fn(e)
    gf = fd_grad(f, p)
    Hf = fd_hess(f, p)
    scale = 1 + abs(v) + np.abs(g).max() + np.abs(H).max()
    assert np.abs(g - gf).max() <= 1e-6 * scale
    assert np.abs(H - Hf).max() <= 1e-4 * scale


def test_num_render_is_exact():
    assert parse(render(Num(0.1)), XYZT) == Num(0.1)
