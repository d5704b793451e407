import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qlweb import generator
from qlweb.connection import (
    PathDegeneracy,
    SectionQuad,
    TransformSingular,
    build_forms,
    decouple,
    decoupling_residual,
    reciprocal_speeds,
    structure_residual,
    transformed_speeds,
    transport,
)
from qlweb.system import SpecError, cross_ratio


@pytest.fixture(scope="module")
def forms(generic_sq):
    return build_forms(generic_sq.system)


def _path_pair(sys):
    R0 = sys.center - 0.4 * sys.widths
    R1 = sys.center + 0.4 * sys.widths
    corner = np.concatenate([R1[:2], R0[2:]])
    return R0, R1, corner


def test_structure_residual(forms, control4):
    X, _ = forms.sys.sample(100, seed=1)
    assert np.max(structure_residual(forms, X)) < 1e-8
    Xc, _ = control4.sample(100, seed=1)
    assert np.max(structure_residual(build_forms(control4), Xc)) > 0.1


def test_forms_need_three_components():
    with pytest.raises(SpecError):
        build_forms(generator.euler(2))


def test_path_independence_and_fourth_order(forms):
    R0, R1, corner = _path_pair(forms.sys)
    Y0 = [0.0, 1.0, 1.0, 0.0]
    gap = {}
    for h in (1e-3, 0.2, 0.1, 0.05):
        a = transport(forms, [R0, R1], Y0, h)
        b = transport(forms, [R0, corner, R1], Y0, h)
        gap[h] = np.max(np.abs(a - b))
    assert gap[1e-3] <= 1e-8
    assert 8 <= gap[0.2] / gap[0.1] <= 32
    assert 8 <= gap[0.1] / gap[0.05] <= 32


def test_determinant_trace_law(forms):
    # d(AN - BM) = (AN - BM)(w11 + w22): integrate the trace along the segment
    R0, R1, _ = _path_pair(forms.sys)
    Y0 = np.array([0.3, 1.0, 1.2, -0.4])
    Y = transport(forms, [R0, R1], Y0, 1e-3)
    det = lambda y: y[0] * y[3] - y[1] * y[2]
    s, w = np.polynomial.legendre.leggauss(40)
    s = 0.5 * (s + 1.0)
    pts = R0 + s[:, None] * (R1 - R0)
    c = forms.evaluate(pts)
    trace = (c[:, 0, 0, :] + c[:, 1, 1, :]) @ (R1 - R0)
    integral = 0.5 * np.sum(w * trace)
    assert det(Y) == pytest.approx(det(Y0) * np.exp(integral), rel=1e-10)


def test_reciprocal_speed_decouples(generic_sq):
    sec = SectionQuad.basis(build_forms(generic_sq.system))
    X, _ = generic_sq.system.sample(10, seed=9)
    res = decoupling_residual(generic_sq.system, sec, X)
    assert np.max(res) < 1e-6


def test_basis_sections_leave_speeds_unchanged_at_base(generic_sq):
    sec = SectionQuad.basis(build_forms(generic_sq.system))
    base = sec.base
    assert np.allclose(transformed_speeds(generic_sq.system, sec, base), generic_sq.system.speeds(base)[0])


@given(st.lists(st.floats(-2.0, 2.0), min_size=4, max_size=4))
@settings(max_examples=20, deadline=None)
def test_recombination_is_a_moebius_map(entries):
    mat = np.array(entries).reshape(2, 2)
    if abs(np.linalg.det(mat)) < 0.2:
        mat = mat + np.eye(2) * 3.0
    fam = generator.generic_image(["u^2/2"] * 4, ["1"] * 4)
    sec = SectionQuad.basis(build_forms(fam.system))
    R = fam.system.center + 0.2
    lam0 = transformed_speeds(fam.system, sec, R)
    try:
        lam1 = transformed_speeds(fam.system, sec.recombined(mat), R)
    except TransformSingular:
        return
    assert cross_ratio(*lam1) == pytest.approx(cross_ratio(*lam0), rel=1e-10, abs=1e-10)


def test_singular_transform_reported():
    lam = np.array([[1.0, 2.0]])
    with pytest.raises(TransformSingular) as info:
        reciprocal_speeds(lam, np.array([[0.0, 1.0, 2.0, 1.0]]))
    assert info.value.component == 1


def test_degenerate_path_rejected():
    sys = generator.generic_image(["u"] * 3, ["1"] * 3, box=[(0, 1), (0.5, 1.5), (2, 3)]).system
    forms = build_forms(sys)
    with pytest.raises(PathDegeneracy):
        transport(forms, [[0.2, 0.9, 2.5], [1.0, 0.9, 2.5]], [0, 1, 1, 0])


def test_decouple_reports(generic_sq, control4):
    good = decouple(generic_sq.system, probes=10)
    assert good.max_residual < 1e-6 and not good.horizon
    bad = decouple(control4, probes=10)
    assert bad.max_residual > 1e-2
