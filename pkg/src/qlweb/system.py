"""Diagonal quasilinear systems ``R^i_t = lambda^i(R) R^i_x`` and their pointwise conditions.

Indices are 0-based in the Python API (``lambdas[0]`` is the speed of
``R1``); expression variables stay 1-based as in the input grammar.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .expr import ZERO, Expression, Tape, differentiate, parse, to_string

DEFAULT_TOL = 1e-7


class DegeneratePoint(ValueError):
    """Two characteristic speeds are closer than the separation threshold."""

    def __init__(self, point, pair, gap, delta):
        super().__init__(
            f"speeds {pair[0] + 1} and {pair[1] + 1} differ by {gap:.3g} < {delta:.3g} at {list(point)}"
        )
        self.point = point
        self.pair = pair


class DegenerateQuadruple(ZeroDivisionError):
    pass


class InsufficientSamples(RuntimeError):
    pass


class SpecError(ValueError):
    """Malformed system or family specification."""


# standard sampling box used throughout the examples; extended by unit
# intervals two apart for n > 4
_STANDARD_BOX = [(1.0, 2.0), (2.5, 3.5), (4.0, 5.0), (6.0, 7.0)]


def standard_box(n: int) -> tuple[tuple[float, float], ...]:
    box = list(_STANDARD_BOX[:n])
    while len(box) < n:
        lo = box[-1][0] + 2.0
        box.append((lo, lo + 1.0))
    return tuple(box)


@dataclass(frozen=True, eq=False)
class QuasilinearSystem:
    """``n`` characteristic speeds plus the box that sampling draws from."""

    lambdas: tuple[Expression, ...]
    box: tuple[tuple[float, float], ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.lambdas)
        if n < 2:
            raise SpecError("a system needs n >= 2 components")
        if len(self.box) != n:
            raise SpecError(f"box has {len(self.box)} intervals, expected {n}")
        for lo, hi in self.box:
            if not hi > lo:
                raise SpecError(f"empty box interval [{lo}, {hi}]")
        for lam in self.lambdas:
            bad = [i for i in lam.variables() if i > n]
            if bad:
                raise SpecError(f"speed {lam} references R{bad[0]} beyond n={n}")
        if self.labels and len(self.labels) != n:
            raise SpecError("labels must have one entry per component")

    @classmethod
    def from_strings(cls, exprs: Sequence[str], box=None, labels=()) -> "QuasilinearSystem":
        n = len(exprs)
        try:
            lams = tuple(parse(s, n) for s in exprs)
        except (SyntaxError, IndexError) as exc:
            raise SpecError(str(exc)) from exc
        box = standard_box(n) if box is None else tuple((float(a), float(b)) for a, b in box)
        return cls(lams, box, tuple(labels or ()))

    @classmethod
    def from_dict(cls, spec: dict) -> "QuasilinearSystem":
        try:
            n = int(spec["n"])
            exprs = spec["lambda"]
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecError(f"system spec needs 'n' and 'lambda': {exc}") from exc
        if len(exprs) != n:
            raise SpecError(f"'lambda' has {len(exprs)} entries, n = {n}")
        return cls.from_strings(exprs, spec.get("box"), spec.get("labels") or ())

    @classmethod
    def load(cls, path) -> "QuasilinearSystem":
        try:
            spec = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: {exc}") from exc
        return cls.from_dict(spec)

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "lambda": [to_string(e) for e in self.lambdas],
            "box": [list(b) for b in self.box],
        }
        if self.labels:
            d["labels"] = list(self.labels)
        return d

    @property
    def n(self) -> int:
        return len(self.lambdas)

    @property
    def widths(self) -> np.ndarray:
        return np.array([hi - lo for lo, hi in self.box])

    @property
    def center(self) -> np.ndarray:
        return np.array([0.5 * (lo + hi) for lo, hi in self.box])

    @property
    def delta(self) -> float:
        """Separation threshold: 1e-3 times the box diameter."""
        return 1e-3 * float(np.linalg.norm(self.widths))

    def permuted(self, perm: Sequence[int]) -> "QuasilinearSystem":
        """Relabel so that new component ``k`` is old component ``perm[k]``."""
        from .expr import substitute, var

        inv = {perm[k] + 1: var(k + 1) for k in range(self.n)}
        lams = tuple(substitute(self.lambdas[perm[k]], inv) for k in range(self.n))
        box = tuple(self.box[perm[k]] for k in range(self.n))
        return QuasilinearSystem(lams, box)

    # -- symbolic derived quantities --------------------------------------

    @cached_property
    def dlam(self) -> tuple[tuple[Expression, ...], ...]:
        """``dlam[i][j]`` = d lambda^i / d R^j."""
        return tuple(
            tuple(differentiate(lam, j + 1) for j in range(self.n)) for lam in self.lambdas
        )

    @cached_property
    def a(self) -> tuple[tuple[Expression, ...], ...]:
        """``a[i][j] = dlam[i][j] / (lambda^j - lambda^i)``; zero on the diagonal."""
        lam = self.lambdas
        return tuple(
            tuple(
                ZERO if i == j else self.dlam[i][j] / (lam[j] - lam[i])
                for j in range(self.n)
            )
            for i in range(self.n)
        )

    def pq_pair(self, j: int) -> tuple[int, int]:
        """Smallest admissible index pair ``(i, k)``, ``i < k``, both != j."""
        others = [m for m in range(self.n) if m != j]
        return others[0], others[1]

    @cached_property
    def pq(self) -> tuple[tuple[Expression, ...], tuple[Expression, ...]]:
        """Closed-form ``(p, q)`` with ``a_ij = p_j lambda^i + q_j``."""
        if self.n < 3:
            raise SpecError("p, q need n >= 3")
        lam, a = self.lambdas, self.a
        p, q = [], []
        for j in range(self.n):
            i, k = self.pq_pair(j)
            den = lam[i] - lam[k]
            p.append((a[i][j] - a[k][j]) / den)
            q.append((a[k][j] * lam[i] - a[i][j] * lam[k]) / den)
        return tuple(p), tuple(q)

    @cached_property
    def lam_tape(self) -> Tape:
        return Tape.compile(self.lambdas)

    @cached_property
    def jac_tape(self) -> Tape:
        return Tape.compile([d for row in self.dlam for d in row])

    def speeds(self, X, errors="raise") -> np.ndarray:
        return self.lam_tape(_as_points(X, self.n), errors=errors)

    def jacobian(self, X, errors="raise") -> np.ndarray:
        X = _as_points(X, self.n)
        return self.jac_tape(X, errors=errors).reshape(-1, self.n, self.n)

    # -- sampling ---------------------------------------------------------

    def separation(self, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Minimum pairwise speed gap per point and the offending pair index."""
        n = self.n
        pairs = list(itertools.combinations(range(n), 2))
        gaps = np.stack([np.abs(lam[:, i] - lam[:, j]) for i, j in pairs], axis=1)
        k = np.argmin(gaps, axis=1)
        return gaps[np.arange(gaps.shape[0]), k], np.array(pairs)[k]

    def check_hyperbolic(self, X, delta=None) -> np.ndarray:
        """Speeds at ``X``; raises :class:`DegeneratePoint` if any gap < delta."""
        X = _as_points(X, self.n)
        delta = self.delta if delta is None else delta
        lam = self.speeds(X)
        gap, pair = self.separation(lam)
        bad = np.flatnonzero(~(gap >= delta))
        if bad.size:
            p = bad[0]
            raise DegeneratePoint(X[p], tuple(pair[p]), gap[p], delta)
        return lam

    def sample(self, count: int, seed: int = 42, max_reject: float = 0.9) -> tuple[np.ndarray, int]:
        """Uniform rejection sampling in the box.

        Returns ``(points, rejected)``.  A point is rejected when two speeds are
        closer than :attr:`delta` or a speed or its gradient fails to evaluate.
        """
        rng = np.random.default_rng(seed)
        lo = np.array([b[0] for b in self.box])
        accepted: list[np.ndarray] = []
        drawn = 0
        rejected = 0
        budget = int(np.ceil(count / (1.0 - max_reject))) + 1
        while sum(len(a) for a in accepted) < count and drawn < budget:
            batch = min(max(count, 16), budget - drawn)
            X = lo + rng.random((batch, self.n)) * self.widths
            drawn += batch
            ok = self._admissible(X)
            rejected += int((~ok).sum())
            accepted.append(X[ok])
        pts = np.concatenate(accepted)[:count] if accepted else np.empty((0, self.n))
        if pts.shape[0] < count:
            raise InsufficientSamples(
                f"only {pts.shape[0]} of {count} samples accepted after {drawn} draws "
                f"(rejection rate {rejected / max(drawn, 1):.0%})"
            )
        return pts, rejected

    def _admissible(self, X) -> np.ndarray:
        lam, e1 = self.lam_tape.evaluate_with_errors(X)
        jac, e2 = self.jac_tape.evaluate_with_errors(X)
        gap, _ = self.separation(lam)
        finite = np.isfinite(lam).all(axis=1) & np.isfinite(jac).all(axis=1)
        return (e1 < 0) & (e2 < 0) & finite & (gap >= self.delta)


def _as_points(X, n) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != n:
        raise ValueError(f"points must have {n} coordinates, got {X.shape[1]}")
    return X


def _scalar_or_array(values, X):
    return float(values[0]) if np.asarray(X).ndim == 1 else values


# ---------------------------------------------------------------------------
# pointwise objects
# ---------------------------------------------------------------------------

@dataclass
class CharMatrix:
    point: np.ndarray
    lam: np.ndarray
    a: np.ndarray  # (n, n), zero diagonal


@dataclass
class PQVector:
    point: np.ndarray
    p: np.ndarray
    q: np.ndarray
    consistency: float  # NaN for n = 3, where the fit is always exact

    def reconstruct(self, lam) -> np.ndarray:
        a = np.outer(lam, self.p) + self.q[None, :]
        np.fill_diagonal(a, 0.0)
        return a


def _a_numeric(lam, jac):
    """Vectorised ``a_ij`` from speeds (m, n) and Jacobians (m, n, n)."""
    diff = lam[:, None, :] - lam[:, :, None]  # [p, i, j] = lam_j - lam_i
    n = lam.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        a = jac / diff
    a[:, np.arange(n), np.arange(n)] = 0.0
    return a


def char_matrix(sys: QuasilinearSystem, R, delta=None) -> CharMatrix:
    R = np.asarray(R, dtype=float)
    lam = sys.check_hyperbolic(R, delta)
    jac = sys.jacobian(R)
    return CharMatrix(R, lam[0], _a_numeric(lam, jac)[0])


def _terms_residual(tape: Tape, X) -> tuple[np.ndarray, np.ndarray]:
    vals = np.abs(tape(X))
    if vals.shape[1] == 0:
        return np.zeros(vals.shape[0]), np.zeros(vals.shape[0], dtype=int)
    k = np.argmax(vals, axis=1)
    return vals[np.arange(vals.shape[0]), k], k


# -- semi-Hamiltonian -------------------------------------------------------

def _semi_ham_terms(sys):
    cache = sys.__dict__.setdefault("_residual_cache", {})
    if "semi_ham" not in cache:
        terms, labels = [], []
        a = sys.a
        for i in range(sys.n):
            for j, k in itertools.combinations([m for m in range(sys.n) if m != i], 2):
                terms.append(differentiate(a[i][j], k + 1) - differentiate(a[i][k], j + 1))
                labels.append((i, j, k))
        cache["semi_ham"] = (Tape.compile(terms), labels)
    return cache["semi_ham"]


def semi_hamiltonian_residual(sys: QuasilinearSystem, R, *, detail=False):
    """``max |d_k a_ij - d_j a_ik|`` over pairwise distinct ``i, j, k``."""
    if sys.n < 3:
        raise SpecError("the semi-Hamiltonian condition needs n >= 3")
    X = _as_points(R, sys.n)
    sys.check_hyperbolic(X)
    tape, labels = _semi_ham_terms(sys)
    res, k = _terms_residual(tape, X)
    if detail:
        return res, [labels[m] for m in k]
    return _scalar_or_array(res, R)


# -- linear degeneracy ------------------------------------------------------

def linear_degeneracy_residual(sys: QuasilinearSystem, R, *, detail=False):
    """``max_i |d_i lambda^i|``."""
    X = _as_points(R, sys.n)
    jac = sys.jacobian(X)
    diag = np.abs(np.diagonal(jac, axis1=1, axis2=2))
    k = np.argmax(diag, axis=1)
    res = diag[np.arange(diag.shape[0]), k]
    if detail:
        return res, [(int(m),) for m in k]
    return _scalar_or_array(res, R)


# -- cross-ratios -----------------------------------------------------------

def cross_ratio(w, x, y, z):
    """``(w - y)(x - z) / ((w - z)(x - y))``; works on scalars or arrays."""
    den = (w - z) * (x - y)
    if np.any(np.asarray(den) == 0):
        raise DegenerateQuadruple(f"cross-ratio undefined for ({w}, {x}, {y}, {z})")
    return (w - y) * (x - z) / den


def cross_ratio_expr(sys, quad) -> Expression:
    w, x, y, z = (sys.lambdas[m] for m in quad)
    return (w - y) * (x - z) / ((w - z) * (x - y))


def _cross_ratio_terms(sys, quads):
    cache = sys.__dict__.setdefault("_residual_cache", {})
    key = ("cross_ratio", tuple(quads))
    if key not in cache:
        terms, labels = [], []
        for quad in quads:
            cr = cross_ratio_expr(sys, quad)
            for m in range(sys.n):
                terms.append(differentiate(cr, m + 1))
                labels.append(tuple(quad) + (m,))
        cache[key] = (Tape.compile(terms), labels)
    return cache[key]


def cross_ratio_constancy_residual(sys: QuasilinearSystem, quadruple, samples, *, detail=False):
    """``max |d_m CR(lambda^i, lambda^j, lambda^k, lambda^l)|`` over samples and ``m``.

    ``quadruple`` may be a single 4-tuple of 0-based indices or ``"all"``.
    """
    if sys.n < 4:
        raise SpecError("cross-ratio constancy needs n >= 4")
    if quadruple == "all":
        quads = list(itertools.combinations(range(sys.n), 4))
    else:
        quads = [tuple(quadruple)]
    X = _as_points(samples, sys.n)
    sys.check_hyperbolic(X)
    tape, labels = _cross_ratio_terms(sys, quads)
    vals, err = tape.evaluate_with_errors(X)
    if (err >= 0).any():
        raise DegenerateQuadruple(f"cross-ratio undefined at {X[np.flatnonzero(err >= 0)[0]]}")
    vals = np.abs(vals)
    k = np.argmax(vals, axis=1)
    res = vals[np.arange(vals.shape[0]), k]
    if detail:
        return res, [labels[m] for m in k]
    return float(res.max()) if res.size else 0.0


# -- quadruple relation (6) -------------------------------------------------

def _quadruple_values(lam, a, n):
    out, labels = [], []
    for j in range(n):
        others = [m for m in range(n) if m != j]
        for i, k, l in itertools.combinations(others, 3):
            out.append(
                a[:, i, j] * (lam[:, k] - lam[:, l])
                + a[:, k, j] * (lam[:, l] - lam[:, i])
                + a[:, l, j] * (lam[:, i] - lam[:, k])
            )
            labels.append((i, j, k, l))
    return np.abs(np.stack(out, axis=1)), labels


def quadruple_relation_residual(sys: QuasilinearSystem, R, *, detail=False):
    """``max |a_ij (l_k - l_l) + a_kj (l_l - l_i) + a_lj (l_i - l_k)|`` over distinct quadruples.

    The expression changes at most sign under permutations of ``(i, k, l)``,
    so one ordering per 3-subset is evaluated.
    """
    if sys.n < 4:
        raise SpecError("the quadruple relation needs n >= 4")
    X = _as_points(R, sys.n)
    lam = sys.check_hyperbolic(X)
    a = _a_numeric(lam, sys.jacobian(X))
    vals, labels = _quadruple_values(lam, a, sys.n)
    k = np.argmax(vals, axis=1)
    res = vals[np.arange(vals.shape[0]), k]
    if detail:
        return res, [labels[m] for m in k]
    return _scalar_or_array(res, R)


# -- p, q -------------------------------------------------------------------

def _pq_from_a(lam, a, i, k, j):
    den = lam[:, i] - lam[:, k]
    p = (a[:, i, j] - a[:, k, j]) / den
    q = (a[:, k, j] * lam[:, i] - a[:, i, j] * lam[:, k]) / den
    return p, q


def extract_pq(sys: QuasilinearSystem, R) -> PQVector:
    """Fit ``a_ij = p_j lambda^i + q_j`` at one point.

    ``p_j, q_j`` use the smallest admissible pair ``(i, k)``; for n >= 4 the
    consistency field reports the largest disagreement over all other pairs.
    """
    if sys.n < 3:
        raise SpecError("p, q need n >= 3")
    R = np.asarray(R, dtype=float)
    X = _as_points(R, sys.n)
    lam = sys.check_hyperbolic(X)
    a = _a_numeric(lam, sys.jacobian(X))
    n = sys.n
    p = np.empty(n)
    q = np.empty(n)
    spread = 0.0
    for j in range(n):
        i, k = sys.pq_pair(j)
        pj, qj = _pq_from_a(lam, a, i, k, j)
        p[j], q[j] = pj[0], qj[0]
        if n >= 4:
            for i2, k2 in itertools.combinations([m for m in range(n) if m != j], 2):
                p2, q2 = _pq_from_a(lam, a, i2, k2, j)
                spread = max(spread, abs(p2[0] - p[j]), abs(q2[0] - q[j]))
    return PQVector(X[0], p, q, spread if n >= 4 else float("nan"))


def _pq_derivative_terms(sys):
    cache = sys.__dict__.setdefault("_residual_cache", {})
    if "pq_derivative" not in cache:
        p, q = sys.pq
        a = sys.a
        terms, labels = [], []
        for i in range(sys.n):
            for j in range(sys.n):
                if i == j:
                    continue
                terms.append(differentiate(p[i], j + 1) - a[i][j] * p[i])
                labels.append(("p", i, j))
                terms.append(differentiate(q[i], j + 1) - a[i][j] * q[i])
                labels.append(("q", i, j))
        cache["pq_derivative"] = (Tape.compile(terms), labels)
    return cache["pq_derivative"]


def pq_derivative_residual(sys: QuasilinearSystem, R, *, detail=False):
    """``max |d_j p_i - a_ij p_i|, |d_j q_i - a_ij q_i|`` over ``i != j``."""
    if sys.n < 3:
        raise SpecError("p, q need n >= 3")
    X = _as_points(R, sys.n)
    sys.check_hyperbolic(X)
    tape, labels = _pq_derivative_terms(sys)
    res, k = _terms_residual(tape, X)
    if detail:
        return res, [labels[m] for m in k]
    return _scalar_or_array(res, R)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

NOT_APPLICABLE = "NOT_APPLICABLE"


@dataclass
class ConditionResult:
    name: str
    values: np.ndarray | None  # per-sample residual maxima; None when not applicable
    worst_point: list | None = None
    worst_index: tuple | None = None
    note: str = ""

    @property
    def applicable(self) -> bool:
        return self.values is not None

    @property
    def max_residual(self) -> float | None:
        if self.values is None:
            return None
        return float(self.values.max()) if self.values.size else 0.0

    def verdict(self, tol: float):
        if self.values is None:
            return NOT_APPLICABLE
        return bool(self.max_residual <= tol)


@dataclass
class ConditionReport:
    n: int
    tol: float
    seed: int
    samples: np.ndarray
    rejected: int
    conditions: dict[str, ConditionResult]
    notes: list[str] = field(default_factory=list)

    def verdict(self, name: str):
        return self.conditions[name].verdict(self.tol)

    @property
    def classes(self) -> dict:
        sh = self.verdict("semi_hamiltonian")
        ld = self.verdict("linear_degeneracy")
        cr = self.verdict("cross_ratio")
        if self.n == 2:
            # any 2-web is locally parallelizable; the p, q machinery needs n >= 3
            par = NOT_APPLICABLE
            lin = NOT_APPLICABLE
        else:
            par = all(v is True for v in (sh, ld)) and (cr is True or cr == NOT_APPLICABLE)
            quad = self.verdict("quadruple")
            struct = self.verdict("structure")
            lin = struct is True and (quad is True or quad == NOT_APPLICABLE)
        return {
            "SEMI_HAMILTONIAN": sh,
            "LINEARLY_DEGENERATE": ld,
            "CONSTANT_CROSS_RATIO": cr,
            "PARALLELIZABLE_CLASS": par,
            "LINEARIZABLE_CLASS": lin,
        }

    def to_dict(self, bins: int = 12) -> dict:
        conds = {}
        for name, c in self.conditions.items():
            entry = {"applicable": c.applicable, "tolerance": self.tol, "verdict": c.verdict(self.tol)}
            if c.applicable:
                entry["max_residual"] = c.max_residual
                entry["worst_point"] = c.worst_point
                entry["worst_index"] = None if c.worst_index is None else [
                    v if isinstance(v, str) else int(v) + 1 for v in c.worst_index
                ]
                entry["histogram"] = residual_histogram(c.values, bins)
            if c.note:
                entry["note"] = c.note
            conds[name] = entry
        return {
            "n": self.n,
            "tolerance": self.tol,
            "seed": self.seed,
            "samples_accepted": int(self.samples.shape[0]),
            "samples_rejected": int(self.rejected),
            "classes": self.classes,
            "conditions": conds,
            "notes": list(self.notes),
        }


def residual_histogram(values: np.ndarray, bins: int = 12) -> dict:
    """Counts of ``log10`` residuals in fixed decades from 1e-16 to 1e+2."""
    edges = np.linspace(-16.0, 2.0, bins + 1)
    with np.errstate(divide="ignore"):
        logs = np.log10(np.maximum(np.abs(values), 1e-300))
    logs = np.clip(logs, edges[0], edges[-1] - 1e-9)
    counts, _ = np.histogram(logs, bins=edges)
    return {"log10_edges": edges.tolist(), "counts": counts.astype(int).tolist()}


def _worst(values, labels, X):
    if values.size == 0:
        return None, None
    p = int(np.argmax(values))
    return X[p].tolist(), labels[p] if labels is not None else None


def classify(sys: QuasilinearSystem, samples: int = 200, seed: int = 42, tol: float = DEFAULT_TOL) -> ConditionReport:
    """Evaluate every condition on seeded samples and aggregate verdicts.

    Raises
    ------
    InsufficientSamples
        If more than 90% of drawn points are rejected.
    """
    from .connection import build_forms, structure_residual

    X, rejected = sys.sample(samples, seed)
    n = sys.n
    conditions: dict[str, ConditionResult] = {}
    notes: list[str] = []

    def record(name, fn, note=""):
        vals, labels = fn(X)
        wp, wi = _worst(vals, labels, X)
        conditions[name] = ConditionResult(name, vals, wp, wi, note)

    def na(name, note):
        conditions[name] = ConditionResult(name, None, note=note)

    if n >= 3:
        record("semi_hamiltonian", lambda X: semi_hamiltonian_residual(sys, X, detail=True))
    else:
        na("semi_hamiltonian", "vacuous for n = 2")
    record("linear_degeneracy", lambda X: linear_degeneracy_residual(sys, X, detail=True))
    if n >= 4:
        def _cr(X):
            return cross_ratio_constancy_residual(sys, "all", X, detail=True)

        record("cross_ratio", _cr)
        record("quadruple", lambda X: quadruple_relation_residual(sys, X, detail=True))

        def _consistency(X):
            vals = np.array([extract_pq(sys, x).consistency for x in X])
            return vals, None

        record("pq_consistency", _consistency)
    else:
        na("cross_ratio", "vacuous for n < 4 (redundant for n = 3)")
        na("quadruple", "vacuous for n < 4")
        na("pq_consistency", "vacuous for n < 4")
    if n >= 3:
        record("pq_derivative", lambda X: pq_derivative_residual(sys, X, detail=True))
        forms = build_forms(sys)
        record("structure", lambda X: structure_residual(forms, X, detail=True))
        if n == 3:
            conditions["structure"].note = (
                "n = 3: flat gl(2) forms are the conjectured necessary and sufficient "
                "condition for linearizable webs on every solution"
            )
            notes.append("LINEARIZABLE_CLASS for n = 3 is conjectural (flatness test only)")
    else:
        na("pq_derivative", "needs n >= 3")
        na("structure", "needs n >= 3")

    return ConditionReport(n, tol, seed, X, rejected, conditions, notes)
