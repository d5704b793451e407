import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import assume, given, settings, strategies as st

from qlweb.expr import (
    EvalError,
    ExprSyntaxError,
    Tape,
    UnivariateSpec,
    const,
    differentiate,
    evaluate,
    func,
    parse,
    substitute,
    to_string,
    var,
)

N = 3


def exprs(max_leaves=12):
    leaves = st.one_of(
        st.integers(1, N).map(var),
        st.sampled_from([0.5, 1.0, 2.0, 3.0, -1.5, 0.25]).map(const),
    )

    def extend(children):
        return st.one_of(
            st.tuples(children, children).map(lambda t: t[0] + t[1]),
            st.tuples(children, children).map(lambda t: t[0] - t[1]),
            st.tuples(children, children).map(lambda t: t[0] * t[1]),
            st.tuples(children, children).map(lambda t: t[0] / (t[1] * t[1] + const(1.0))),
            st.tuples(children, st.integers(2, 4)).map(lambda t: t[0] ** t[1]),
            children.map(lambda c: -c),
            children.map(lambda c: func("sin", c)),
            children.map(lambda c: func("cos", c)),
            children.map(lambda c: func("exp", func("sin", c))),
            children.map(lambda c: func("sqrt", c * c + const(1.0))),
            children.map(lambda c: func("log", c * c + const(2.0))),
        )

    return st.recursive(leaves, extend, max_leaves=max_leaves)


def to_sympy(e):
    syms = {f"R{i}": sp.Symbol(f"R{i}") for i in range(1, N + 1)}
    return sp.sympify(to_string(e).replace("^", "**"), locals=syms)


points = st.lists(st.floats(-2.0, 2.0), min_size=N, max_size=N)


def test_parse_precedence_and_unary_minus():
    e = parse("-R1^2 + 2*R2/4", 2)
    assert evaluate(e, [3.0, 2.0]) == pytest.approx(-9.0 + 1.0)
    assert evaluate(parse("R1*R1 + 2^3", 2), [3.0, 0.0]) == 17.0
    with pytest.raises(ExprSyntaxError):
        parse("2^3^2", 1)
    with pytest.raises(ExprSyntaxError):
        parse("R1^-1", 1)


def test_scientific_notation_and_names():
    assert evaluate(parse("1.5e-3*u", 1, names={"u": 1}), [2.0]) == pytest.approx(3e-3)
    assert evaluate(parse(".5+R1", 1), [1.0]) == 1.5


@pytest.mark.parametrize("text,pos", [("R1 + * R2", 5), ("sin(R1", 6), ("R1 $ 2", 3), ("", 0)])
def test_syntax_error_reports_position(text, pos):
    with pytest.raises(ExprSyntaxError) as info:
        parse(text, 2)
    assert info.value.pos == pos


def test_variable_beyond_n():
    with pytest.raises(IndexError):
        parse("R1 + R3", 2)


def test_hash_consing_identity():
    assert parse("R1*R2 + sin(R1)", 2) is parse("R1 * R2 + sin( R1 )", 2)


@given(exprs())
@settings(max_examples=150, deadline=None)
def test_print_parse_round_trip(e):
    assert parse(to_string(e), N) is e


@given(exprs(), st.integers(1, N), points)
@settings(max_examples=150, deadline=None)
def test_derivative_matches_sympy(e, i, pt):
    d = differentiate(e, i)
    oracle = sp.diff(to_sympy(e), sp.Symbol(f"R{i}"))
    f = sp.lambdify([sp.Symbol(f"R{k}") for k in range(1, N + 1)], oracle, "math")
    try:
        want = float(f(*pt))
    except (ValueError, ZeroDivisionError, OverflowError):
        assume(False)
    assume(math.isfinite(want) and abs(want) < 1e8)
    got = evaluate(d, pt)
    assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


@given(exprs(max_leaves=6), st.integers(1, N), points)
@settings(max_examples=100, deadline=None)
def test_derivative_matches_finite_difference(e, i, pt):
    h = 1e-5
    up, dn = list(pt), list(pt)
    up[i - 1] += h
    dn[i - 1] -= h
    fd = (evaluate(e, up) - evaluate(e, dn)) / (2 * h)
    got = evaluate(differentiate(e, i), pt)
    assume(abs(got) < 1e4)
    assert got == pytest.approx(fd, rel=1e-5, abs=1e-5)


def test_third_derivative():
    e = parse("sin(R1)*R2^3", 2)
    d3 = differentiate(differentiate(differentiate(e, 1), 1), 2)
    assert evaluate(d3, [0.3, 2.0]) == pytest.approx(-math.sin(0.3) * 12.0, rel=1e-14)


def test_quotient_rule_shares_quotient_node():
    q = parse("R1/R2", 2)
    assert q in differentiate(q, 2).args or any(q in a.args for a in differentiate(q, 2).args)


def test_eval_error_names_subterm():
    e = parse("R1 + log(R2)", 2)
    with pytest.raises(EvalError) as info:
        evaluate(e, [1.0, -1.0])
    assert to_string(info.value.subterm) == "log(R2)"
    out = Tape.compile([e])(np.array([[1.0, -1.0], [1.0, 1.0]]), errors="nan")
    assert np.isnan(out[0, 0]) and out[1, 0] == 1.0


def test_division_by_zero_is_eval_error():
    with pytest.raises(EvalError):
        evaluate(parse("1/(R1-1)", 1), [1.0])


def test_tape_multiple_outputs_match_single():
    es = [parse(s, 3) for s in ("R1*R2", "exp(R3)-R1", "R2^3/R3")]
    X = np.random.default_rng(0).uniform(0.5, 2.0, (50, 3))
    multi = Tape.compile(es)(X)
    for k, e in enumerate(es):
        assert np.allclose(multi[:, k], [evaluate(e, x) for x in X], rtol=0, atol=1e-14)


def test_substitute_and_univariate():
    f = UnivariateSpec.parse("u^2/2")
    phi = UnivariateSpec.parse("1 + 0.1*sin(x)", "profile", placeholder="x")
    g = f.compose(phi)
    s = np.linspace(-1, 1, 7)
    assert np.allclose(g(s), 0.5 * (1 + 0.1 * np.sin(s)) ** 2)
    assert np.allclose(g.derivative()(s), (1 + 0.1 * np.sin(s)) * 0.1 * np.cos(s))
    assert to_string(f.at(3)) == to_string(substitute(f.expr, {1: var(3)}))
    with pytest.raises(ValueError):
        UnivariateSpec(parse("R1+R2", 2))
