"""The compiled and pure-numpy kernels must agree."""
import numpy as np
import pytest

from qlweb import kernels as K
from qlweb._accel import HAVE_NUMBA
from qlweb.connection import build_forms
from qlweb.expr import Tape, UnivariateSpec, parse

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def test_eval_points_agree_including_errors():
    es = [parse(s, 2) for s in ("R1^3 - 2*R2", "log(R1)*sqrt(R2)", "1/(R1-R2)", "exp(sin(R1))*cos(R2)^2")]
    t = Tape.compile(es)
    X = np.random.default_rng(1).uniform(-2, 2, (400, 2))
    X[0] = [1.0, 1.0]
    o1, e1 = K.eval_points_nb(*t.args, X)
    o2, e2 = K.eval_points_np(*t.args, X)
    assert np.array_equal(e1 >= 0, e2 >= 0)
    ok = e1 < 0
    assert np.allclose(o1[ok], o2[ok], rtol=1e-15, atol=1e-15)
    assert (e1 >= 0).sum() > 0


def test_hopf_roots_agree():
    g = UnivariateSpec.parse("u").compose(UnivariateSpec.parse("1 + 0.3*sin(x)", placeholder="x"))
    t = Tape.compile([g.expr, g.derivative().expr])
    xs = np.linspace(-3, 3, 101)
    tau = 0.8
    lo, hi = xs - 1.4 * tau, xs + 1.4 * tau
    s1, st1 = K.hopf_roots_nb(*t.args, xs, tau, lo, hi, xs.copy())
    s2, st2 = K.hopf_roots_np(*t.args, xs, tau, lo, hi, xs.copy())
    assert np.array_equal(st1, st2) and (st1 == K.ROOT_OK).all()
    assert np.allclose(s1, s2, atol=1e-13)
    assert np.max(np.abs(s1 - g(s1) * tau - xs)) < 1e-13


def test_hopf_roots_flags_missing_bracket_and_fold():
    t = Tape.compile([parse("R1", 1), parse("1", 1)])  # g(s) = s
    xs = np.array([0.0, 0.5])
    # t = 2: s - 2 s = x has root s = -x but 1 - g' t < 0
    for fn in (K.hopf_roots_nb, K.hopf_roots_np):
        s, st = fn(*t.args, xs, 2.0, xs - 5.0, xs + 5.0, xs.copy())
        assert (st == K.ROOT_NOT_MONOTONE).all()
        s, st = fn(*t.args, xs, 0.5, xs + 1.0, xs + 2.0, xs.copy())
        assert (st == K.ROOT_NO_BRACKET).all()


def test_transport_agree(generic_sq):
    forms = build_forms(generic_sq.system)
    R0 = np.tile(generic_sq.system.center, (5, 1))
    R1 = R0 + np.random.default_rng(2).uniform(-0.4, 0.4, R0.shape)
    Y0 = np.tile([0.0, 1.0, 1.0, 0.0], (5, 1))
    steps = np.full(5, 300, dtype=np.int64)
    y1, e1 = K.transport_nb(*forms.tape.args, R0, R1, steps, Y0)
    y2, e2 = K.transport_np(*forms.tape.args, R0, R1, steps, Y0)
    assert (e1 < 0).all() and (e2 < 0).all()
    assert np.allclose(y1, y2, rtol=1e-13, atol=1e-13)


def test_trace_agree_and_exact_on_constant_field():
    t = Tape.compile([parse("R1", 1)])
    Rg = np.full((1, 11, 21), 2.0)
    valid = np.ones((11, 21), dtype=bool)
    seeds = np.array([1.5, 1.8])
    args = (Rg, valid, 0.0, 0.1, 0.0, 0.1, seeds, 0.0, 0.05, 10)
    v1, c1 = K.trace_nb(*t.args, *args)
    v2, c2 = K.trace_np(*t.args, *args)
    assert np.array_equal(c1, c2) and (c1 == 11).all()
    assert np.allclose(v1, v2, atol=1e-15)
    assert np.allclose(v1[:, -1, 1], seeds - 2.0 * 0.5, atol=1e-14)


def test_trace_stops_at_invalid_cell():
    t = Tape.compile([parse("R1", 1)])
    Rg = np.full((1, 11, 21), 1.0)
    valid = np.ones((11, 21), dtype=bool)
    valid[6:, :] = False
    for fn in (K.trace_nb, K.trace_np):
        _, c = fn(*t.args, Rg, valid, 0.0, 0.1, 0.0, 0.1, np.array([1.5]), 0.0, 0.1, 10)
        assert 1 <= c[0] < 11
