import numpy as np
import pytest

from qlweb import generator
from qlweb.expr import differentiate, evaluate, parse
from qlweb.system import SpecError, cross_ratio_constancy_residual, linear_degeneracy_residual


def test_generic_image_spot_value(generic_sq):
    lam = generic_sq.system.speeds([1, 2, 3, 4])[0]
    assert np.allclose(lam, [5 / 4, -5 / 4, -15 / 4, -25 / 4], rtol=0, atol=1e-12)


def test_generic_linear_collapse():
    fam = generator.generic_image(["u"] * 4, ["1"] * 4)
    X, _ = fam.system.sample(100, seed=1)
    assert np.max(np.abs(fam.system.speeds(X) + X)) <= 1e-12


def test_lindeg_spot_and_cross_ratio(lindeg):
    lam = lindeg.system.speeds([1, 2, 3, 4])[0]
    assert np.allclose(lam, [-10 / 3, -5, 0, -5 / 3], atol=1e-12)
    X, _ = lindeg.system.sample(100, seed=2)
    assert cross_ratio_constancy_residual(lindeg.system, (0, 1, 2, 3), X) < 1e-10
    assert np.max(linear_degeneracy_residual(lindeg.system, X)) < 1e-10


@pytest.mark.parametrize("fam_name", ["generic", "lindeg"])
def test_pairs_are_conservation_laws_of_base(fam_name, generic_sq, lindeg):
    fam = generic_sq if fam_name == "generic" else lindeg
    A, B, M, N = fam.pairs
    base = fam.base
    X, _ = base.sample(30, seed=4)
    # d_i A = lambda^i d_i B, likewise for (M, N)
    for P, Q in ((A, B), (M, N)):
        for i in range(4):
            lhs = np.array([evaluate(differentiate(P, i + 1), x) for x in X])
            rhs = base.speeds(X)[:, i] * np.array([evaluate(differentiate(Q, i + 1), x) for x in X])
            assert np.allclose(lhs, rhs, atol=1e-12)


def test_image_speeds_follow_reciprocal_formula(generic_sq):
    A, B, M, N = generic_sq.pairs
    X, _ = generic_sq.system.sample(20, seed=5)
    lam = generic_sq.base.speeds(X)
    vals = [np.array([evaluate(e, x) for x in X]) for e in (A, B, M, N)]
    want = (lam * vals[1][:, None] - vals[0][:, None]) / (vals[2][:, None] - lam * vals[3][:, None])
    assert np.allclose(generic_sq.system.speeds(X), want, atol=1e-12)


def test_family_spec_round_trip():
    d = {"family": "generic_image", "n": 4, "f": ["u^2/2"] * 4, "g": ["1"] * 4}
    spec = generator.FamilySpec.from_dict(d)
    assert generator.FamilySpec.from_dict(spec.to_dict()) == spec
    fam = generator.build(spec)
    assert fam.to_dict()["pairs"]["B"]


@pytest.mark.parametrize(
    "d",
    [
        {"family": "nope", "n": 2},
        {"family": "hopf", "n": 2},
        {"family": "generic_image", "n": 2, "f": ["u"], "g": ["1", "1"]},
        {"family": "lindeg_image", "n": 2, "c": [1, 1], "f": ["u", "u"], "g": ["1", "1"]},
        {"family": "hopf", "n": 2, "f": ["u+", "u"]},
        {"n": 2},
    ],
)
def test_family_spec_errors(d):
    with pytest.raises(SpecError):
        generator.build(generator.FamilySpec.from_dict(d))


def test_hopf_rejects_foreign_variable():
    with pytest.raises(SpecError):
        generator.hopf([parse("R1", 2), parse("R1*R2", 2)])


def test_control_shape(control4):
    assert control4.speeds([1, 2, 3, 4])[0].tolist() == [5.0, 2.0, 3.0, 4.0]
