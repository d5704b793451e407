import numpy as np
import pytest

from qlweb import generator, hopf
from qlweb.expr import UnivariateSpec, const, parse
from qlweb.hopf import (
    BreakdownDetected,
    Grid,
    InitialData,
    LeftDomain,
    NotClosed,
    pde_residual,
    pushforward,
    sample_characteristics,
    solve_hopf,
    solve_periodic,
)

from conftest import KAPPA, TWO_PI, sine_data, web_grid

U = UnivariateSpec.parse("u")


def burgers(profile, grid, interval=(-10.0, 10.0), **kw):
    return solve_hopf([U], InitialData.parse([profile], interval), grid, **kw)


def test_constant_data():
    grid = Grid(0, 1, 11, -1, 1, 21)
    sol = solve_hopf([U, UnivariateSpec.parse("u^2")], InitialData.parse(["2", "3"], (-20, 20)), grid)
    assert np.all(sol.R[0] == 2.0) and np.all(sol.R[1] == 3.0)
    assert sol.valid.all()


def test_linear_data_oracle():
    grid = Grid(0.0, 0.5, 201, -1.0, 1.0, 201)
    sol = burgers("x", grid)
    T, X = grid.mesh()
    assert sol.valid.all()
    assert np.max(np.abs(sol.R[0] - X / (1 - T))) <= 1e-10
    assert sol.root_residual <= 1e-12
    assert sol.breaking_times[0] == pytest.approx(1.0)


def test_decreasing_data_never_breaks_forward():
    grid = Grid(0.0, 2.0, 41, -1.0, 1.0, 21)
    sol = burgers("-x", grid)
    T, X = grid.mesh()
    assert not sol.breakdown.any()
    assert np.allclose(sol.R[0], -X / (1 + T), atol=1e-12)


def test_breakdown_masked_past_safety_time():
    grid = Grid(0.0, 1.5, 31, -1.0, 1.0, 21)
    sol = burgers("x", grid)
    late = grid.t >= hopf.BREAKING_SAFETY * 1.0
    assert sol.breakdown[late].all() and not sol.breakdown[~late].any()
    assert not sol.valid[late].any()


def test_breakdown_is_absorbing_in_time():
    grid = Grid(0.0, 1.2, 25, -3.0, 3.0, 61)
    sol = burgers("0.5*sin(x)", grid, interval=(-20, 20))
    first = np.argmax(sol.breakdown, axis=0)
    for l in range(grid.nx):
        if sol.breakdown[:, l].any():
            assert sol.breakdown[first[l]:, l].all()


def test_breakdown_raises_when_grid_fully_past():
    with pytest.raises(BreakdownDetected) as info:
        burgers("x", Grid(1.0, 1.5, 11, -1, 1, 11))
    assert info.value.component == 0
    with pytest.raises(BreakdownDetected):
        burgers("x", Grid(0.0, 1.5, 31, -1, 1, 11), on_breakdown="raise")


def test_reach_mask():
    grid = Grid(0.0, 0.5, 11, -1.0, 1.0, 21)
    sol = burgers("1 + 0*x", grid, interval=(-0.5, 0.5))
    # feet are s = x + t; nodes whose foot leaves [-0.5, 0.5] are masked
    T, X = grid.mesh()
    off_edge = np.abs(np.abs(X + T) - 0.5) > 1e-9
    inside = np.abs(X + T) < 0.5
    assert np.array_equal(sol.valid[off_edge], inside[off_edge])


@pytest.mark.parametrize("order", ["row-column", "column-row"])
def test_identity_pair(order):
    grid = Grid(0.2, 0.7, 6, -1.0, 1.0, 9)
    sol = burgers("0.1*x", grid)
    cm = pushforward(sol, (const(0.0), const(1.0), const(1.0), const(0.0)), order=order)
    T, X = grid.mesh()
    assert np.allclose(cm.xt, X - grid.x0, atol=1e-14)
    assert np.allclose(cm.tt, T - grid.t0, atol=1e-14)


def test_euler_identity_pair_scales_coordinates():
    fam = generator.generic_image(["u"] * 4, ["1"] * 4)
    grid = web_grid(17)
    sol = solve_hopf(fam.hopf_speeds, sine_data(), grid)
    cm = pushforward(sol, fam.pairs)
    T, X = grid.mesh()
    assert np.allclose(cm.xt, 4 * (X - grid.x0), atol=1e-12)
    assert np.allclose(cm.tt, -4 * (T - grid.t0), atol=1e-12)


def test_quadrature_orders_agree_at_second_order(generic_sq):
    gaps = []
    for N in (17, 33, 65):
        sol = solve_hopf(generic_sq.hopf_speeds, sine_data(), web_grid(N))
        a = pushforward(sol, generic_sq.pairs)
        b = pushforward(sol, generic_sq.pairs, order="column-row")
        gaps.append(max(np.max(np.abs(a.xt - b.xt)), np.max(np.abs(a.tt - b.tt))))
    orders = np.log2(np.array(gaps[:-1]) / np.array(gaps[1:]))
    assert np.all((orders >= 1.7) & (orders <= 2.3)), orders


def test_not_closed():
    sol = solve_hopf([U, U], InitialData.parse(["1 + 0.1*sin(x)", "2 + 0.1*cos(x)"], (-9, 9)), web_grid(17))
    with pytest.raises(NotClosed):
        pushforward(sol, (const(0.0), parse("R1^2*R2", 2), const(1.0), const(0.0)))


def test_pde_residual_second_order():
    res = []
    for N in (21, 41, 81):
        grid = Grid(0.0, 0.5, N, -1.0, 1.0, N)
        sol = burgers("sin(x)", grid)
        res.append(pde_residual(sol, [parse("R1", 1)]))
    r = np.array(res[:-1]) / np.array(res[1:])
    assert np.all((r > 3.0) & (r < 5.0)), r


def test_transformed_pde_residual_second_order(generic_sq):
    res = []
    for N in (17, 33, 65):
        sol = solve_hopf(generic_sq.hopf_speeds, sine_data(), web_grid(N))
        cm = pushforward(sol, generic_sq.pairs)
        res.append(pde_residual(sol, generic_sq.system, cm))
    r = np.array(res[:-1]) / np.array(res[1:])
    assert np.all((r > 3.0) & (r < 5.0)), r


def test_characteristic_invariance(generic_sq):
    worst = []
    for N in (33, 65):
        sol = solve_hopf(generic_sq.hopf_speeds, sine_data(), web_grid(N))
        cm = pushforward(sol, generic_sq.pairs)
        w = 0.0
        for i in range(4):
            for line in sample_characteristics(sol, generic_sq.base.lambdas[i], i, np.linspace(3.6, 6.0, 4), cmap=cm):
                inc = hopf.characteristic_invariance(line, sol, cm, generic_sq.system.lambdas[i])
                arc = np.sum(np.linalg.norm(np.diff(line.image, axis=0), axis=1))
                w = max(w, inc.max() / arc)
        worst.append(w)
    assert worst[1] < worst[0] / 3.0
    assert worst[1] < 1e-3


def test_linear_system_characteristics_exact():
    c = [0.5, -1.0, 2.0]
    grid = Grid(0.0, 1.0, 11, -5.0, 5.0, 41)
    sol = solve_hopf([UnivariateSpec(const(v)) for v in c], InitialData.parse(["x", "2*x", "1"], (-50, 50)), grid)
    for i, v in enumerate(c):
        for line in sample_characteristics(sol, const(v), i, np.array([-1.0, 0.0, 1.0])):
            t, x = line.tx.T
            assert np.allclose(x - x[0], -v * (t - t[0]), atol=1e-13)


def test_left_domain_strict():
    grid = Grid(0.0, 1.0, 11, 0.0, 1.0, 11)
    sol = solve_hopf([U], InitialData.parse(["3"], (-10, 10)), grid)
    lines = sample_characteristics(sol, parse("R1", 1), 0, np.array([0.5]))
    assert lines[0].truncated
    with pytest.raises(LeftDomain):
        sample_characteristics(sol, parse("R1", 1), 0, np.array([0.5]), strict=True)


def test_spectral_solver_matches_characteristics(euler4):
    grid = Grid(0.0, 0.5, 11, 0.0, TWO_PI * 63 / 64, 64)
    exact = solve_hopf([U] * 4, sine_data(), grid)
    spec = solve_periodic(euler4, sine_data((0.0, TWO_PI)), grid, modes=128, cfl=0.25)
    assert np.max(np.abs(exact.R - spec.R)) < 1e-9


def test_solution_csv_round_trip(tmp_path, generic_sq):
    sol = solve_hopf(generic_sq.hopf_speeds, sine_data(), web_grid(9))
    cm = pushforward(sol, generic_sq.pairs)
    path = tmp_path / "sol.csv"
    hopf.write_solution_csv(path, sol, cm)
    back, bcm = hopf.read_solution_csv(path)
    assert np.array_equal(back.R, sol.R)
    assert np.array_equal(bcm.xt, cm.xt) and np.array_equal(bcm.tt, cm.tt)
    header = path.read_text().splitlines()[0]
    assert header == "t,x,x_tilde,t_tilde,R1,R2,R3,R4,mask"
