"""Solutions on a (t, x) grid and their images under reciprocal transformations.

Sign convention shared by every module: characteristics of family ``i``
satisfy ``dx + lambda^i dt = 0``, i.e. ``dx/dt = -lambda^i``, which is the
direction of the field ``V_i = d_t - lambda^i d_x``.  Along them ``R^i`` is
constant, so a Hopf component is ``R^i(x, t) = phi^i(s)`` with
``x = s - f^i(phi^i(s)) t``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels as K
from .expr import Expression, Tape, UnivariateSpec
from .system import QuasilinearSystem

BREAKING_SAFETY = 0.9


class BreakdownDetected(RuntimeError):
    def __init__(self, component, node, time):
        super().__init__(
            f"component {component + 1} breaks down: earliest masked node {node} (t = {time:.6g})"
        )
        self.component = component
        self.node = node
        self.time = time


class NotClosed(ValueError):
    pass


class LeftDomain(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid; arrays are indexed ``[m, l]`` = ``(t_m, x_l)``."""

    t0: float
    t1: float
    nt: int
    x0: float
    x1: float
    nx: int

    def __post_init__(self):
        if self.nt < 2 or self.nx < 2:
            raise ValueError("grid needs at least 2 nodes per direction")

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.nt)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x0, self.x1, self.nx)

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / (self.nt - 1)

    @property
    def dx(self) -> float:
        return (self.x1 - self.x0) / (self.nx - 1)

    def mesh(self):
        return np.meshgrid(self.t, self.x, indexing="ij")

    def refined(self) -> "Grid":
        """Halve both steps, keeping the domain."""
        return Grid(self.t0, self.t1, 2 * self.nt - 1, self.x0, self.x1, 2 * self.nx - 1)


@dataclass(frozen=True)
class InitialData:
    """Profiles ``phi^i`` (functions of ``x``) and the interval where they are trusted."""

    profiles: tuple[UnivariateSpec, ...]
    interval: tuple[float, float]

    @classmethod
    def parse(cls, texts: Sequence[str], interval) -> "InitialData":
        return cls(tuple(UnivariateSpec.parse(s, "profile", placeholder="x") for s in texts),
                   (float(interval[0]), float(interval[1])))


@dataclass
class SolutionSample:
    grid: Grid
    R: np.ndarray  # (n, nt, nx)
    valid: np.ndarray  # (nt, nx) bool
    breakdown: np.ndarray  # (nt, nx) bool, subset of ~valid
    breaking_times: np.ndarray  # (n,), inf when no breaking ahead
    feet: np.ndarray | None = None  # characteristic feet s, (n, nt, nx)
    root_residual: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.R.shape[0]

    def points(self) -> np.ndarray:
        """Node values as an array (nt*nx, n)."""
        return self.R.reshape(self.n, -1).T


# ---------------------------------------------------------------------------
# Hopf systems by characteristics
# ---------------------------------------------------------------------------

def breaking_time(g_prime: np.ndarray, forward: bool = True) -> float:
    """First time at which ``1 - t g'(s)`` vanishes for some sampled ``s``."""
    m = np.nanmax(g_prime) if forward else np.nanmin(g_prime)
    if forward:
        return 1.0 / m if m > 0 else np.inf
    return 1.0 / m if m < 0 else -np.inf


def solve_hopf(speeds: Sequence[UnivariateSpec], data: InitialData, grid: Grid,
               on_breakdown: str = "mask", dense: int = 4001) -> SolutionSample:
    """Solve ``R^i_t = f^i(R^i) R^i_x`` with ``R^i(x, 0) = phi^i(x)``.

    The grid may start at any ``t0``; data always sit at ``t = 0``.  Nodes at or past ``BREAKING_SAFETY``
    times the a-priori breaking time, or whose characteristic foot falls
    outside ``data.interval``, are masked.

    Raises
    ------
    BreakdownDetected
        When every node of the grid is past breaking, or at the first
        breakdown if ``on_breakdown="raise"``.
    """
    n = len(speeds)
    if len(data.profiles) != n:
        raise ValueError("one profile per component required")
    taus = grid.t
    xs = grid.x
    a, b = data.interval
    s_dense = np.linspace(a, b, dense)
    R = np.full((n, grid.nt, grid.nx), np.nan)
    feet = np.full((n, grid.nt, grid.nx), np.nan)
    valid = np.ones((grid.nt, grid.nx), dtype=bool)
    breakdown = np.zeros((grid.nt, grid.nx), dtype=bool)
    tbreak = np.empty(n)
    worst_root = 0.0
    first_break = None
    for i in range(n):
        g = speeds[i].compose(data.profiles[i])
        dg = g.derivative()
        tape = Tape.compile([g.expr, dg.expr])
        gv, dgv = tape(s_dense[:, None]).T
        # sampled max can undershoot the true one; a loose bracket only costs iterations
        S = 1.01 * float(np.max(np.abs(gv))) + 1e-12
        tb_f = breaking_time(dgv, True)
        tb_b = breaking_time(dgv, False)
        tbreak[i] = tb_f
        phi = data.profiles[i]
        guess = xs.copy()
        for m, tau in enumerate(taus):
            if tau >= BREAKING_SAFETY * tb_f or tau <= BREAKING_SAFETY * tb_b:
                breakdown[m, :] = True
                valid[m, :] = False
                if first_break is None or grid.t[m] < first_break[2]:
                    first_break = (i, (m, 0), grid.t[m])
                if on_breakdown == "raise":
                    raise BreakdownDetected(*first_break)
                continue
            lo = np.maximum(xs - S * abs(tau), a)
            hi = np.minimum(xs + S * abs(tau), b)
            empty = lo > hi
            lo = np.where(empty, a, lo)
            hi = np.where(empty, a, hi)
            if tau == 0.0:
                s = xs.copy()
                status = np.where((xs >= a) & (xs <= b), K.ROOT_OK, K.ROOT_NO_BRACKET)
            else:
                s, status = K.hopf_roots(*tape.args, xs, tau, lo, hi, guess)
            status = np.where(empty, K.ROOT_NO_BRACKET, status)
            ok = status == K.ROOT_OK
            not_mono = status == K.ROOT_NOT_MONOTONE
            if not_mono.any():
                breakdown[m, not_mono] = True
                if first_break is None or grid.t[m] < first_break[2]:
                    first_break = (i, (m, int(np.flatnonzero(not_mono)[0])), grid.t[m])
            valid[m, ~ok] = False
            if ok.any():
                sv = s[ok]
                feet[i, m, ok] = sv
                R[i, m, ok] = phi(sv)
                gs = g(sv)
                worst_root = max(worst_root, float(np.max(np.abs(xs[ok] - sv + gs * tau))))
                guess = np.where(ok, s, guess)
            if on_breakdown == "raise" and breakdown[m].any():
                raise BreakdownDetected(i, first_break[1], first_break[2])
    # masked-region monotonicity: breakdown is absorbing in time
    breakdown = np.maximum.accumulate(breakdown, axis=0) if taus[-1] >= 0 else breakdown
    valid &= ~breakdown
    if breakdown.all():
        i, node, time = first_break
        raise BreakdownDetected(i, node, time)
    return SolutionSample(grid, R, valid, breakdown, tbreak, feet, worst_root)


# ---------------------------------------------------------------------------
# general diagonal systems with periodic data (spectral method of lines)
# ---------------------------------------------------------------------------

def solve_periodic(sys: QuasilinearSystem, data: InitialData, grid: Grid,
                   modes: int = 256, cfl: float = 0.5) -> SolutionSample:
    """Fourier pseudo-spectral + RK4 solution of ``R^i_t = lambda^i(R) R^i_x``.

    Data sit at ``t = 0``.  ``data.interval`` is the period; the output grid is sampled from the
    spectral state by trigonometric interpolation.  Intended for smooth
    short-time solutions of systems that are not uncoupled Hopf equations.
    """
    n = sys.n
    a, b = data.interval
    L = b - a
    xs = a + L * np.arange(modes) / modes
    k = 2.0 * np.pi * np.fft.rfftfreq(modes, d=L / modes)
    U = np.stack([p(xs) for p in data.profiles])

    def rhs(U):
        Ux = np.fft.irfft(1j * k * np.fft.rfft(U, axis=1), n=modes, axis=1)
        lam = sys.speeds(U.T).T
        return lam * Ux, lam

    lam0 = rhs(U)[1]
    dt_max = cfl * (L / modes) / max(float(np.max(np.abs(lam0))), 1e-12)

    def advance(U, T):
        steps = max(1, int(np.ceil(abs(T) / dt_max)))
        h = T / steps
        for _ in range(steps):
            k1 = rhs(U)[0]
            k2 = rhs(U + 0.5 * h * k1)[0]
            k3 = rhs(U + 0.5 * h * k2)[0]
            k4 = rhs(U + h * k3)[0]
            U = U + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return U

    out = np.empty((n, grid.nt, grid.nx))
    phase = np.exp(1j * np.outer(k, grid.x - a))  # (modes/2+1, nx)
    weights = np.full(k.shape[0], 2.0)
    weights[0] = 1.0
    if modes % 2 == 0:
        weights[-1] = 1.0
    t_prev = 0.0
    for m, tau in enumerate(grid.t):
        U = advance(U, tau - t_prev) if tau != t_prev else U
        t_prev = tau
        c = np.fft.rfft(U, axis=1) / modes
        out[:, m, :] = np.real((c * weights) @ phase)
    valid = np.isfinite(out).all(axis=0)
    return SolutionSample(grid, out, valid, np.zeros_like(valid), np.full(n, np.inf), None, 0.0,
                          [f"spectral solution, {modes} modes"])


# ---------------------------------------------------------------------------
# reciprocal coordinates
# ---------------------------------------------------------------------------

@dataclass
class CoordinateMap:
    """``x~, t~`` per node plus the pairs ``A, B, M, N`` they integrate."""

    xt: np.ndarray
    tt: np.ndarray
    A: np.ndarray
    B: np.ndarray
    M: np.ndarray
    N: np.ndarray
    valid: np.ndarray
    closedness: float

    @property
    def jacobian(self) -> np.ndarray:
        """``A N - B M``; nonzero wherever the map is a local diffeomorphism."""
        return self.A * self.N - self.B * self.M


def _cumtrapz(y, h, axis):
    y = np.moveaxis(y, axis, 0)
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * h * (y[1:] + y[:-1]), axis=0)
    return np.moveaxis(out, 0, axis)


def _pair_values(sol: SolutionSample, pairs) -> list[np.ndarray]:
    tape = Tape.compile(list(pairs))
    vals, err = tape.evaluate_with_errors(sol.points())
    vals[err >= 0] = np.nan
    shape = sol.R.shape[1:]
    return [vals[:, c].reshape(shape) for c in range(4)]


def central_t(u, dt):
    out = np.full_like(u, np.nan)
    out[1:-1] = (u[2:] - u[:-2]) / (2.0 * dt)
    return out


def central_x(u, dx):
    out = np.full_like(u, np.nan)
    out[:, 1:-1] = (u[:, 2:] - u[:, :-2]) / (2.0 * dx)
    return out


def closedness_residual(sol: SolutionSample, A: np.ndarray, B: np.ndarray) -> float:
    """``max |B_t - A_x|`` over interior valid nodes."""
    g = sol.grid
    Av = np.where(sol.valid, A, np.nan)
    Bv = np.where(sol.valid, B, np.nan)
    r = central_t(Bv, g.dt) - central_x(Av, g.dx)
    return float(np.nanmax(np.abs(r))) if np.isfinite(r).any() else 0.0


def pushforward(sol: SolutionSample, pairs: Sequence[Expression], order: str = "row-column",
                tol: float = 1e-2) -> CoordinateMap:
    """Integrate ``dx~ = A dt + B dx`` and ``dt~ = M dt + N dx`` from the grid origin.

    ``order="row-column"`` runs along the first time row and then up each
    column; ``"column-row"`` does the reverse.  Both are composite trapezoid
    rules, so they agree to O(h^2) when the forms are closed.

    Raises
    ------
    NotClosed
        If the relative closedness residual exceeds ``10 * tol``.
    """
    g = sol.grid
    A, B, M, N = _pair_values(sol, pairs)
    for arr in (A, B, M, N):
        arr[~sol.valid] = np.nan
    closed = max(closedness_residual(sol, A, B), closedness_residual(sol, M, N))
    scale = 1.0 + max(
        float(np.nanmax(np.abs(central_x(A, g.dx)), initial=0.0)),
        float(np.nanmax(np.abs(central_t(B, g.dt)), initial=0.0)),
        float(np.nanmax(np.abs(central_x(M, g.dx)), initial=0.0)),
        float(np.nanmax(np.abs(central_t(N, g.dt)), initial=0.0)),
    )
    if closed / scale > 10.0 * tol:
        raise NotClosed(f"pairs are not conservation laws on this solution: residual {closed:.3g}")

    def integrate(P, Q):  # d(.) = P dt + Q dx
        if order == "row-column":
            first = _cumtrapz(Q[0:1, :], g.dx, axis=1)
            return first + _cumtrapz(P, g.dt, axis=0)
        if order == "column-row":
            first = _cumtrapz(P[:, 0:1], g.dt, axis=0)
            return first + _cumtrapz(Q, g.dx, axis=1)
        raise ValueError(f"unknown quadrature order {order!r}")

    xt = integrate(A, B)
    tt = integrate(M, N)
    jac = A * N - B * M
    valid = sol.valid & np.isfinite(xt) & np.isfinite(tt) & (np.abs(jac) > 1e-12)
    return CoordinateMap(xt, tt, A, B, M, N, valid, closed)


def pde_residual(sol: SolutionSample, sys, cmap: CoordinateMap | None = None) -> float:
    """``max |R_t - lambda(R) R_x|`` over interior nodes with full stencils.

    ``sys`` is a :class:`QuasilinearSystem` or a sequence of speed expressions.

    With ``cmap``, derivatives are taken in the pushed coordinates
    ``(t~, x~)`` by the chain rule through the pairs, i.e. the residual of
    ``R_t~ = lambda~(R) R_x~`` on the curvilinear image grid.
    """
    g = sol.grid
    valid = sol.valid if cmap is None else cmap.valid
    Rv = np.where(valid, sol.R, np.nan)
    Rt = central_t(Rv.transpose(1, 2, 0), g.dt).transpose(2, 0, 1)
    Rx = central_x(Rv.transpose(1, 2, 0), g.dx).transpose(2, 0, 1)
    tape = sys.lam_tape if isinstance(sys, QuasilinearSystem) else Tape.compile(list(sys))
    lam, err = tape.evaluate_with_errors(sol.points())
    lam = lam.T.reshape(sol.R.shape)
    if cmap is not None:
        det = cmap.B * cmap.M - cmap.A * cmap.N
        Rt, Rx = (cmap.B * Rt - cmap.A * Rx) / det, (cmap.M * Rx - cmap.N * Rt) / det
    r = np.abs(Rt - lam * Rx)
    return float(np.nanmax(r)) if np.isfinite(r).any() else 0.0


# ---------------------------------------------------------------------------
# characteristic curves
# ---------------------------------------------------------------------------

@dataclass
class Polyline:
    """Vertices as rows ``(t, x)``; ``image`` holds ``(t~, x~)`` when pushed."""

    family: int
    tx: np.ndarray
    image: np.ndarray | None = None
    truncated: bool = False


def interpolate(grid: Grid, fields: np.ndarray, valid: np.ndarray, t, x):
    """Bilinear interpolation of ``fields`` (c, nt, nx) at scattered ``(t, x)``."""
    vals, ok = K._bilinear_np(np.asarray(fields, dtype=float), valid, grid.t0, grid.dt,
                              grid.x0, grid.dx, np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    vals[~ok] = np.nan
    return vals, ok


def sample_characteristics(sol: SolutionSample, speed: Expression, family: int,
                           seeds: int | Sequence[float] = 8, cmap: CoordinateMap | None = None,
                           step: float | None = None, strict: bool = False) -> list[Polyline]:
    """Trace ``dx/dt = -lambda^i(R(t, x))`` from seeds on the first time row.

    ``speed`` is the characteristic speed of ``family`` as an expression in R.
    ``R`` is interpolated bilinearly; with ``cmap`` every vertex is also
    mapped to ``(t~, x~)``.  Curves stop at the mask boundary (``truncated``);
    ``strict=True`` raises :class:`LeftDomain` instead.
    """
    g = sol.grid
    if isinstance(seeds, (int, np.integer)):
        pad = 0.1 * (g.x1 - g.x0)
        seeds = np.linspace(g.x0 + pad, g.x1 - pad, int(seeds))
    seeds = np.asarray(seeds, dtype=float)
    step = g.dt if step is None else float(step)
    nsteps = int(round((g.t1 - g.t0) / step))
    valid = sol.valid if cmap is None else cmap.valid
    tape = Tape.compile([speed])
    Rg = np.where(valid[None], sol.R, 0.0)
    verts, count = K.trace(*tape.args, Rg, valid, g.t0, g.dt, g.x0, g.dx, seeds, g.t0, step, nsteps)
    lines = []
    for p in range(seeds.shape[0]):
        c = int(count[p])
        if c == 0:
            continue
        tx = verts[p, :c].copy()
        truncated = c < nsteps + 1
        if truncated and strict:
            raise LeftDomain(f"family {family + 1} curve from x = {seeds[p]:.6g} left the valid region")
        image = None
        if cmap is not None:
            vals, _ = interpolate(g, np.stack([cmap.tt, cmap.xt]), cmap.valid, tx[:, 0], tx[:, 1])
            image = vals
        lines.append(Polyline(family, tx, image, truncated))
    return lines


def characteristic_invariance(line: Polyline, sol: SolutionSample, cmap: CoordinateMap,
                              speed_tilde: Expression) -> np.ndarray:
    """Per-segment ``|dx~ + lambda~ dt~|`` with ``lambda~`` at segment midpoints."""
    g = sol.grid
    mid = 0.5 * (line.tx[1:] + line.tx[:-1])
    Rm, _ = interpolate(g, sol.R, cmap.valid, mid[:, 0], mid[:, 1])
    lt = Tape.compile([speed_tilde])(Rm, errors="nan")[:, 0]
    d = np.diff(line.image, axis=0)
    return np.abs(d[:, 1] + lt * d[:, 0])


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_solution_csv(path, sol: SolutionSample, cmap: CoordinateMap | None = None) -> None:
    T, X = sol.grid.mesh()
    n = sol.n
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "x_tilde", "t_tilde"] + [f"R{i + 1}" for i in range(n)] + ["mask"])
        for m in range(sol.grid.nt):
            for l in range(sol.grid.nx):
                xt = cmap.xt[m, l] if cmap is not None else X[m, l]
                tt = cmap.tt[m, l] if cmap is not None else T[m, l]
                ok = cmap.valid[m, l] if cmap is not None else sol.valid[m, l]
                w.writerow([_fmt(T[m, l]), _fmt(X[m, l]), _fmt(xt), _fmt(tt)]
                           + [_fmt(sol.R[i, m, l]) for i in range(n)] + [0 if ok else 1])


def read_solution_csv(path) -> tuple[SolutionSample, CoordinateMap | None]:
    """Inverse of :func:`write_solution_csv` (pairs are not stored, so A..N are NaN)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    n = sum(1 for h in header if h.startswith("R"))
    t = np.unique(body[:, 0])
    x = np.unique(body[:, 1])
    nt, nx = t.size, x.size
    grid = Grid(float(t[0]), float(t[-1]), nt, float(x[0]), float(x[-1]), nx)
    shaped = body.reshape(nt, nx, -1)
    R = np.stack([shaped[:, :, 4 + i] for i in range(n)])
    mask = shaped[:, :, 4 + n] != 0
    sol = SolutionSample(grid, R, ~mask, np.zeros_like(mask), np.full(n, np.inf))
    nan = np.full((nt, nx), np.nan)
    cmap = CoordinateMap(shaped[:, :, 2], shaped[:, :, 3], nan, nan, nan, nan, ~mask, float("nan"))
    return sol, cmap


def write_polylines_csv(path, lines: Sequence[Polyline], pushed: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve", "family", "vertex", "x_tilde" if pushed else "x", "t_tilde" if pushed else "t"])
        for cid, line in enumerate(lines):
            pts = line.image if (pushed and line.image is not None) else line.tx
            for v, (tv, xv) in enumerate(pts):
                w.writerow([cid, line.family + 1, v, _fmt(xv), _fmt(tv)])
