"""The gl(2) connection built from ``p, q, lambda`` and the sections it transports.

Coefficients of the four 1-forms, per coordinate ``i``::

    w11_i = p_i lambda^i    w12_i = q_i lambda^i
    w21_i = p_i             w22_i = q_i

Sections obey ``dA = A w11 + B w12``, ``dB = A w21 + B w22`` (and the same
for ``(M, N)``); along them the reciprocal speeds
``(lambda^i B - A) / (M - lambda^i N)`` depend on ``R^i`` alone.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import kernels as K
from .expr import Expression, Tape, differentiate
from .system import DegeneratePoint, QuasilinearSystem, SpecError, _as_points

FORM_KEYS = ((0, 0), (0, 1), (1, 0), (1, 1))


class PathDegeneracy(ValueError):
    pass


class TransformSingular(ZeroDivisionError):
    def __init__(self, component, point, value):
        super().__init__(
            f"M - lambda^{component + 1} N = {value:.3g} at {list(np.round(point, 12))}"
        )
        self.component = component
        self.point = point


@dataclass(frozen=True, eq=False)
class ConnectionForms:
    """``coeffs[(a, b)][i]`` is the ``dR^(i+1)`` coefficient of ``w_(a+1)(b+1)``."""

    sys: QuasilinearSystem
    coeffs: dict

    @property
    def n(self) -> int:
        return self.sys.n

    @cached_property
    def tape(self) -> Tape:
        """Transport tape: outputs ordered w11, w12, w21, w22, each over i."""
        return Tape.compile([c for key in FORM_KEYS for c in self.coeffs[key]])

    def evaluate(self, X) -> np.ndarray:
        """Coefficients at points: array (m, 2, 2, n)."""
        X = _as_points(X, self.n)
        return self.tape(X).reshape(-1, 2, 2, self.n)


def build_forms(sys: QuasilinearSystem, pq: tuple | None = None) -> ConnectionForms:
    if sys.n < 3:
        raise SpecError("the gl(2) forms need n >= 3")
    p, q = sys.pq if pq is None else pq
    lam = sys.lambdas
    coeffs = {
        (0, 0): tuple(p[i] * lam[i] for i in range(sys.n)),
        (0, 1): tuple(q[i] * lam[i] for i in range(sys.n)),
        (1, 0): tuple(p),
        (1, 1): tuple(q),
    }
    return ConnectionForms(sys, coeffs)


def _structure_terms(forms: ConnectionForms):
    cache = forms.__dict__.setdefault("_structure", None)
    if cache is None:
        w = forms.coeffs
        terms, labels = [], []
        for (a, b) in FORM_KEYS:
            for i, j in itertools.combinations(range(forms.n), 2):
                dw = differentiate(w[(a, b)][j], i + 1) - differentiate(w[(a, b)][i], j + 1)
                wedge = (w[(a, 0)][i] * w[(0, b)][j] - w[(a, 0)][j] * w[(0, b)][i]) + (
                    w[(a, 1)][i] * w[(1, b)][j] - w[(a, 1)][j] * w[(1, b)][i]
                )
                terms.append(dw - wedge)
                labels.append((f"w{a + 1}{b + 1}", i, j))
        cache = (Tape.compile(terms), labels)
        forms.__dict__["_structure"] = cache
    return cache


def structure_residual(forms: ConnectionForms, R, *, detail=False):
    """Largest component of ``dw_ab - sum_c w_ac ^ w_cb`` on ``dR^i ^ dR^j``, ``i < j``."""
    X = _as_points(R, forms.n)
    forms.sys.check_hyperbolic(X)
    tape, labels = _structure_terms(forms)
    vals = np.abs(tape(X))
    k = np.argmax(vals, axis=1)
    res = vals[np.arange(vals.shape[0]), k]
    if detail:
        return res, [labels[m] for m in k]
    return float(res[0]) if np.asarray(R).ndim == 1 else res


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------

def _nsteps(R0, R1, h):
    L = np.linalg.norm(np.atleast_2d(R1) - np.atleast_2d(R0), axis=1)
    return np.maximum(1, np.ceil(L / h - 1e-9)).astype(np.int64)


def check_path(sys: QuasilinearSystem, path: Sequence, samples_per_segment: int = 32) -> np.ndarray:
    """Validate a piecewise-linear path; returns waypoints as an array.

    Raises
    ------
    PathDegeneracy
        If a waypoint or a dense segment sample violates strict hyperbolicity.
    """
    W = np.asarray(path, dtype=float)
    if W.ndim != 2 or W.shape[0] < 2 or W.shape[1] != sys.n:
        raise ValueError("a path needs at least two waypoints of dimension n")
    s = np.linspace(0.0, 1.0, samples_per_segment + 1)
    dense = np.concatenate([W[k] + s[:, None] * (W[k + 1] - W[k]) for k in range(W.shape[0] - 1)])
    try:
        sys.check_hyperbolic(dense)
    except DegeneratePoint as exc:
        raise PathDegeneracy(str(exc)) from exc
    return W


def transport(forms: ConnectionForms, path, initial, h: float = 1e-3, validate: bool = True) -> np.ndarray:
    """Transport ``(A, B)`` or ``(A, B, M, N)`` along a piecewise-linear path.

    Each segment of length ``L`` takes ``ceil(L / h)`` classical RK4 steps.
    """
    W = check_path(forms.sys, path) if validate else np.asarray(path, dtype=float)
    y = np.zeros(4)
    init = np.asarray(initial, dtype=float)
    y[: init.size] = init
    for k in range(W.shape[0] - 1):
        y = transport_segments(forms, W[k], W[k + 1], y, h)[0]
    return y[: init.size]


def transport_segments(forms: ConnectionForms, R0, R1, Y0, h: float = 1e-3) -> np.ndarray:
    """Batched straight-segment transport of 4-vectors ``(A, B, M, N)``."""
    R0 = np.atleast_2d(np.asarray(R0, dtype=float))
    R1 = np.atleast_2d(np.asarray(R1, dtype=float))
    R0 = np.broadcast_to(R0, R1.shape) if R0.shape[0] == 1 else R0
    Y0 = np.broadcast_to(np.atleast_2d(np.asarray(Y0, dtype=float)), (R1.shape[0], 4))
    Y, err = K.transport(*forms.tape.args, R0, R1, _nsteps(R0, R1, h), Y0)
    if (err >= 0).any():
        p = int(np.flatnonzero(err >= 0)[0])
        raise PathDegeneracy(f"form coefficients failed to evaluate on segment to {R1[p]}")
    return Y


@dataclass(frozen=True, eq=False)
class SectionQuad:
    """Sections ``(A, B)`` and ``(M, N)`` fixed at ``base`` and transported by ``forms``."""

    forms: ConnectionForms
    base: np.ndarray
    initial: np.ndarray  # (A0, B0, M0, N0)
    h: float = 1e-3

    def __post_init__(self):
        A, B, M, N = self.initial
        if A * N - B * M == 0:
            raise ValueError("sections are degenerate: A N - B M = 0 at the base point")

    @classmethod
    def basis(cls, forms: ConnectionForms, base=None, h: float = 1e-3) -> "SectionQuad":
        """``(A, B) = (0, 1)``, ``(M, N) = (1, 0)`` at the box centre, so speeds are unchanged there."""
        base = forms.sys.center if base is None else np.asarray(base, dtype=float)
        return cls(forms, base, np.array([0.0, 1.0, 1.0, 0.0]), h)

    def recombined(self, mat) -> "SectionQuad":
        """New sections ``(A', B') = m00 (A, B) + m01 (M, N)``, ``(M', N') = m10 (A, B) + m11 (M, N)``."""
        mat = np.asarray(mat, dtype=float)
        if abs(np.linalg.det(mat)) < 1e-14:
            raise ValueError("recombination matrix is singular")
        A, B, M, N = self.initial
        rows = mat @ np.array([[A, B], [M, N]])
        return SectionQuad(self.forms, self.base, rows.ravel(), self.h)

    def at(self, R) -> np.ndarray:
        """``(A, B, M, N)`` at points, transported along straight segments from the base."""
        X = _as_points(R, self.forms.n)
        Y = transport_segments(self.forms, self.base, X, self.initial, self.h)
        return Y[0] if np.asarray(R).ndim == 1 else Y

    @property
    def det0(self) -> float:
        A, B, M, N = self.initial
        return float(A * N - B * M)


def reciprocal_speeds(lam: np.ndarray, Y: np.ndarray, singular_tol: float = 1e-12, points=None) -> np.ndarray:
    """``(lambda B - A) / (M - lambda N)`` row-wise; ``Y`` columns are A, B, M, N."""
    lam = np.atleast_2d(lam)
    Y = np.atleast_2d(Y)
    A, B, M, N = (Y[:, c : c + 1] for c in range(4))
    den = M - lam * N
    bad = np.abs(den) < singular_tol
    if bad.any():
        p, i = np.argwhere(bad)[0]
        pt = points[p] if points is not None else np.full(lam.shape[1], np.nan)
        raise TransformSingular(int(i), pt, float(den[p, i]))
    return (lam * B - A) / den


def transformed_speeds(sys: QuasilinearSystem, sections: SectionQuad, R) -> np.ndarray:
    """Reciprocally transformed speeds at ``R`` using transported sections."""
    X = _as_points(R, sys.n)
    lam = sys.speeds(X)
    Y = np.atleast_2d(sections.at(X))
    out = reciprocal_speeds(lam, Y, points=X)
    return out[0] if np.asarray(R).ndim == 1 else out


def visible(sys: QuasilinearSystem, sections: SectionQuad, probes, checkpoints: int = 8) -> np.ndarray:
    """Probes reachable from the base without ``M - lambda^i N`` changing sign.

    Denominators are checked at ``checkpoints`` evenly spaced points of each
    straight segment from the base.  A probe failing this test lies beyond a
    transform horizon.
    """
    X = _as_points(probes, sys.n)
    s = np.linspace(0.0, 1.0, checkpoints + 1)
    ok = np.ones(X.shape[0], dtype=bool)
    lam0 = sys.speeds(sections.base)[0]
    A, B, M, N = sections.initial
    sign0 = np.sign(M - lam0 * N)
    for frac in s[1:]:
        pts = sections.base + frac * (X - sections.base)
        lam = sys.speeds(pts)
        Y = np.atleast_2d(sections.at(pts))
        den = Y[:, 2:3] - lam * Y[:, 3:4]
        ok &= np.all((np.sign(den) == sign0) & (np.abs(den) >= 1e-12), axis=1)
    return ok


def decoupling_residual(sys: QuasilinearSystem, sections: SectionQuad, R, rel_step: float = 1e-4, *, detail=False):
    """``max_{i != j} |d lambda~^i / d R^j|`` by central differences.

    Sections reach each stencil point along base -> probe -> stencil point.
    The stencil step in coordinate ``j`` is ``rel_step`` times the box width.
    """
    X = _as_points(R, sys.n)
    n = sys.n
    Yp = np.atleast_2d(sections.at(X))
    steps = rel_step * sys.widths
    grads = np.zeros((X.shape[0], n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = steps[j]
        plus, minus = X + e, X - e
        Y_plus = transport_segments(sections.forms, X, plus, Yp, sections.h)
        Y_minus = transport_segments(sections.forms, X, minus, Yp, sections.h)
        lt_plus = reciprocal_speeds(sys.speeds(plus), Y_plus, points=plus)
        lt_minus = reciprocal_speeds(sys.speeds(minus), Y_minus, points=minus)
        grads[:, :, j] = (lt_plus - lt_minus) / (2.0 * steps[j])
    off = np.abs(grads)
    off[:, np.arange(n), np.arange(n)] = 0.0
    flat = off.reshape(X.shape[0], -1)
    k = np.argmax(flat, axis=1)
    res = flat[np.arange(X.shape[0]), k]
    if detail:
        return res, [divmod(int(m), n) for m in k], grads
    return float(res[0]) if np.asarray(R).ndim == 1 else res


@dataclass
class DecouplingReport:
    sections: SectionQuad
    probes: np.ndarray
    visible: np.ndarray
    residuals: np.ndarray  # NaN for probes beyond a horizon
    worst: tuple | None

    @property
    def horizon(self) -> bool:
        return not bool(self.visible.all())

    @property
    def max_residual(self) -> float:
        vals = self.residuals[self.visible]
        return float(vals.max()) if vals.size else float("nan")


def decouple(sys: QuasilinearSystem, probes: int = 20, seed: int = 42, h: float = 1e-3,
             sections: SectionQuad | None = None) -> DecouplingReport:
    """Transport basis sections from the box centre and probe decoupling at random points."""
    if sections is None:
        sections = SectionQuad.basis(build_forms(sys), h=h)
    X, _ = sys.sample(probes, seed)
    vis = visible(sys, sections, X)
    res = np.full(X.shape[0], np.nan)
    worst = None
    if vis.any():
        vals, labels, _ = decoupling_residual(sys, sections, X[vis], detail=True)
        res[vis] = vals
        worst = labels[int(np.argmax(vals))]
    return DecouplingReport(sections, X, vis, res, worst)
