"""Planar webs given by slope fields, and the linearizability test on them.

A web here is ``n`` foliations of a plane region; leaf ``i`` has
``dX + lambda^i dT = 0`` in the plane coordinates ``(T, X)``.  Along the
leaves ``V_i = d_T - lambda^i d_X`` annihilates the leaf function, and the
quantities ``V_i(lambda^i)`` feed a pointwise linear system for the
fields ``E, F, G, H``.  A 4-web is linearizable iff those fields satisfy
two first-order equations; :func:`henaut_residual` measures them.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .hopf import CoordinateMap, Polyline, SolutionSample, central_t, central_x
from .system import QuasilinearSystem

COND_LIMIT = 1e10


class UnderdeterminedWeb(ValueError):
    """Raised for 3-webs, where ``E, F, G, H`` are not determined pointwise."""


class DegenerateCurve(ValueError):
    pass


class IllConditioned(UserWarning):
    """Some nodes had a slope matrix too ill-conditioned to solve; they are flagged, not fatal."""


@dataclass
class WebSample:
    """Slopes and ``V_i(lambda^i)`` on a logical ``(nt, nx)`` grid.

    ``D_T u = cTt u_t + cTx u_x`` and ``D_X u = cXt u_t + cXx u_x`` express
    plane derivatives in terms of logical ones with steps ``dt, dx``.
    """

    lam: np.ndarray  # (n, nt, nx)
    V: np.ndarray  # (n, nt, nx)
    dt: float
    dx: float
    cTt: np.ndarray | float = 1.0
    cTx: np.ndarray | float = 0.0
    cXt: np.ndarray | float = 0.0
    cXx: np.ndarray | float = 1.0
    T: np.ndarray | None = None
    X: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    def DT(self, u):
        return self.cTt * central_t(u, self.dt) + self.cTx * central_x(u, self.dx)

    def DX(self, u):
        return self.cXt * central_t(u, self.dt) + self.cXx * central_x(u, self.dx)

    @classmethod
    def from_slopes(cls, lam: np.ndarray, dt: float, dx: float, T=None, X=None) -> "WebSample":
        """Web with slopes ``lam`` on a uniform ``(T, X)`` grid; ``V_i`` by central differences."""
        lam = np.asarray(lam, dtype=float)
        V = np.stack([central_t(l, dt) - l * central_x(l, dx) for l in lam])
        return cls(lam, V, dt, dx, T=T, X=X)

    @classmethod
    def from_solution(cls, sol: SolutionSample, sys: QuasilinearSystem) -> "WebSample":
        """Characteristic web of a solution, in the solution's own ``(t, x)``.

        Uses ``V_i(lambda^i) = sum_k d_k lambda^i (lambda^k - lambda^i) R^k_x``,
        which holds because ``R^k`` solves the system.
        """
        lam, J, Rx = _speeds_and_gradients(sol, sys)
        V = np.einsum("ik...,ik...->i...", J, (lam[None, :] - lam[:, None]) * Rx[None, :])
        T, X = sol.grid.mesh()
        return cls(lam, V, sol.grid.dt, sol.grid.dx, T=T, X=X)

    @classmethod
    def from_pushforward(cls, sol: SolutionSample, cmap: CoordinateMap,
                         sys: QuasilinearSystem) -> "WebSample":
        """Characteristic web of the transformed system ``sys`` in ``(t~, x~)``.

        ``sol`` solves the base system and ``cmap`` carries the pairs; with
        ``det = BM - AN`` the metric is ``d_t~ = (B d_t - A d_x)/det``,
        ``d_x~ = (M d_x - N d_t)/det``, and ``R^k_x~ = R^k_x / (B + lambda~^k N)``.
        """
        valid = cmap.valid
        masked = SolutionSample(sol.grid, np.where(valid, sol.R, np.nan), valid, sol.breakdown,
                                sol.breaking_times)
        lam, J, Rx = _speeds_and_gradients(masked, sys)
        B, N = cmap.B, cmap.N
        Rxt = Rx / (B[None] + lam * N[None])
        V = np.einsum("ik...,ik...->i...", J, (lam[None, :] - lam[:, None]) * Rxt[None, :])
        det = cmap.B * cmap.M - cmap.A * cmap.N
        return cls(lam, V, sol.grid.dt, sol.grid.dx,
                   cTt=B / det, cTx=-cmap.A / det, cXt=-N / det, cXx=cmap.M / det,
                   T=cmap.tt, X=cmap.xt)


def _speeds_and_gradients(sol: SolutionSample, sys: QuasilinearSystem):
    n = sys.n
    pts = sol.points()
    shape = sol.R.shape
    lam = sys.lam_tape(pts, errors="nan").T.reshape(shape)
    J = sys.jac_tape(pts, errors="nan").T.reshape((n, n) + shape[1:])
    Rv = np.where(sol.valid, sol.R, np.nan)
    Rx = np.stack([central_x(r, sol.grid.dx) for r in Rv])
    return lam, J, Rx


@dataclass
class SchwarzianField:
    """``E, F, G, H`` per node.

    ``ill`` marks nodes rejected for conditioning; nodes with non-finite
    input (boundary rings, masked cells) are NaN without being flagged.
    """

    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    cond: np.ndarray
    ill: np.ndarray
    lsq_residual: np.ndarray | None = None

    def stack(self) -> np.ndarray:
        return np.stack([self.E, self.F, self.G, self.H])


def efgh_matrix(lam: np.ndarray) -> np.ndarray:
    """Rows ``(l^3, 3 l^2, 3 l, 1)`` for each slope, stacked over the last axis of ``lam``."""
    lam = np.asarray(lam, dtype=float)
    return np.stack([lam ** 3, 3.0 * lam ** 2, 3.0 * lam, np.ones_like(lam)], axis=-1)


def solve_EFGH(lam: np.ndarray, V: np.ndarray, cond_limit: float = COND_LIMIT) -> SchwarzianField:
    """Solve ``l_i^3 E + 3 l_i^2 F + 3 l_i G + H = V_i`` at every node.

    ``lam`` and ``V`` have shape ``(n, ...)``.  Square solve for ``n = 4``,
    least squares through QR for ``n > 4``.  Nodes whose matrix condition
    number exceeds ``cond_limit`` are flagged ``ill``; they and nodes with
    non-finite input get NaN.

    Raises
    ------
    UnderdeterminedWeb
        For ``n < 4``.
    """
    lam = np.asarray(lam, dtype=float)
    V = np.asarray(V, dtype=float)
    n = lam.shape[0]
    if n < 4:
        raise UnderdeterminedWeb(f"a {n}-web does not determine E, F, G, H pointwise")
    shape = lam.shape[1:]
    L = np.moveaxis(lam.reshape(n, -1), 0, 1)  # (P, n)
    b = np.moveaxis(V.reshape(n, -1), 0, 1)
    finite = np.isfinite(L).all(axis=1) & np.isfinite(b).all(axis=1)
    Mat = efgh_matrix(np.where(finite[:, None], L, np.arange(n, dtype=float)))
    cond = np.linalg.cond(Mat)
    ill = finite & (~np.isfinite(cond) | (cond > cond_limit))
    sol = np.full((L.shape[0], 4), np.nan)
    res = None
    good = finite & ~ill
    if good.any():
        if n == 4:
            sol[good] = np.linalg.solve(Mat[good], b[good][..., None])[..., 0]
        else:
            Q, Rm = np.linalg.qr(Mat[good])
            rhs = np.einsum("pji,pj->pi", Q, b[good])
            sol[good] = np.linalg.solve(Rm, rhs[..., None])[..., 0]
            res = np.full(L.shape[0], np.nan)
            res[good] = np.linalg.norm(np.einsum("pij,pj->pi", Mat[good], sol[good]) - b[good], axis=1)
            res = res.reshape(shape)
    E, F, G, H = (sol[:, c].reshape(shape) for c in range(4))
    if ill.any():
        warnings.warn(f"{int(ill.sum())} nodes exceed condition number {cond_limit:g}",
                      IllConditioned, stacklevel=2)
    return SchwarzianField(E, F, G, H, cond.reshape(shape), ill.reshape(shape), res)


def henaut_terms(web: WebSample, field: SchwarzianField):
    """Pointwise residual fields of the two linearizability equations.

    With subscripts for plane derivatives ``T, X``::

        r1 = 2G_TX + H_XX + F_TT - 6GG_X + 2HE_T + EH_T + 3FH_X - 3GF_T + 3HF_X
        r2 = G_XX + E_TT + 2F_TX + 3EG_T - 3FG_X + 3GE_T + HE_X + 2EH_X - 6FF_T

    Derivatives are nested central differences, so the fields are NaN on the
    two outer rings and next to masked nodes.
    """
    DT, DX = web.DT, web.DX
    E, F, G, H = field.E, field.F, field.G, field.H
    E_T, E_X = DT(E), DX(E)
    F_T, F_X = DT(F), DX(F)
    G_T, G_X = DT(G), DX(G)
    H_T, H_X = DT(H), DX(H)
    r1 = (2 * DX(G_T) + DX(H_X) + DT(F_T) - 6 * G * G_X + 2 * H * E_T + E * H_T
          + 3 * F * H_X - 3 * G * F_T + 3 * H * F_X)
    r2 = (DX(G_X) + DT(E_T) + 2 * DX(F_T) + 3 * E * G_T - 3 * F * G_X + 3 * G * E_T
          + H * E_X + 2 * E * H_X - 6 * F * F_T)
    return r1, r2


def henaut_residual(field: SchwarzianField, web: WebSample, detail: bool = False):
    """Max moduli ``(r1, r2)`` of :func:`henaut_terms` over interior nodes.

    The two equations are reported separately; they are not symmetric in
    ``T`` and ``X`` and have no common normalization.
    """
    r1, r2 = henaut_terms(web, field)
    m1 = float(np.nanmax(np.abs(r1))) if np.isfinite(r1).any() else float("nan")
    m2 = float(np.nanmax(np.abs(r2))) if np.isfinite(r2).any() else float("nan")
    if detail:
        return (m1, m2), (r1, r2)
    return m1, m2


def straightness(points: np.ndarray) -> float:
    """Max orthogonal distance to the total-least-squares line, over arc length.

    Raises
    ------
    DegenerateCurve
        With fewer than 3 finite vertices or zero length.
    """
    P = np.asarray(points, dtype=float)
    P = P[np.isfinite(P).all(axis=1)]
    if P.shape[0] < 3:
        raise DegenerateCurve(f"need at least 3 vertices, got {P.shape[0]}")
    length = float(np.sum(np.linalg.norm(np.diff(P, axis=0), axis=1)))
    if length == 0.0:
        raise DegenerateCurve("zero-length polyline")
    C = P - P.mean(axis=0)
    _, _, vt = np.linalg.svd(C, full_matrices=False)
    return float(np.max(np.abs(C @ vt[-1]))) / length


def straightness_table(lines, pushed: bool = True) -> list[dict]:
    rows = []
    for cid, line in enumerate(lines):
        pts = line.image if (pushed and line.image is not None) else line.tx
        try:
            s = straightness(pts)
        except DegenerateCurve:
            s = float("nan")
        rows.append({"curve": cid, "family": line.family + 1, "vertices": int(pts.shape[0]),
                     "straightness": s, "truncated": bool(line.truncated)})
    return rows


def write_field_csv(path, web: WebSample, field: SchwarzianField) -> None:
    """Per node: ``T, X, lambda1..lambdan, E, F, G, H, res1, res2, cond, ill``."""
    f = lambda v: format(float(v), ".17g")
    r1, r2 = henaut_terms(web, field)
    nt, nx = field.E.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x"] + [f"lambda{i + 1}" for i in range(web.n)]
                   + ["E", "F", "G", "H", "res1", "res2", "cond", "ill"])
        for m in range(nt):
            for l in range(nx):
                T = web.T[m, l] if web.T is not None else m * web.dt
                X = web.X[m, l] if web.X is not None else l * web.dx
                w.writerow([f(T), f(X)] + [f(web.lam[i, m, l]) for i in range(web.n)]
                           + [f(a[m, l]) for a in (field.E, field.F, field.G, field.H, r1, r2, field.cond)]
                           + [int(field.ill[m, l])])


def write_svg(path, lines, width: int = 800, height: int = 600, pushed: bool = True) -> None:
    """One ``<polyline>`` per leaf, ``class="family-i"``; horizontal axis ``x``, vertical ``t``."""
    pts_all = [(l.image if (pushed and l.image is not None) else l.tx) for l in lines]
    stacked = np.concatenate([p[np.isfinite(p).all(axis=1)] for p in pts_all]) if pts_all else np.zeros((0, 2))
    if stacked.size == 0:
        stacked = np.array([[0.0, 0.0], [1.0, 1.0]])
    tmin, xmin = stacked.min(axis=0)
    tmax, xmax = stacked.max(axis=0)
    sx = (width - 20) / max(xmax - xmin, 1e-300)
    st = (height - 20) / max(tmax - tmin, 1e-300)
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">']
    for line, pts in zip(lines, pts_all):
        pts = pts[np.isfinite(pts).all(axis=1)]
        coords = " ".join(f"{10 + (x - xmin) * sx:.3f},{height - 10 - (t - tmin) * st:.3f}" for t, x in pts)
        color = palette[line.family % len(palette)]
        out.append(f'  <polyline class="family-{line.family + 1}" fill="none" stroke="{color}" '
                   f'stroke-width="1" points="{coords}"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
