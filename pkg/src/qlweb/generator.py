"""Families with known ground truth: uncoupled Hopf systems and their reciprocal images.

``generic_image`` and ``lindeg_image`` also return the closed-form
conservation-law pairs ``(A, B)``, ``(M, N)`` of the base system that
produce them, so solution-level tests can push base solutions forward.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .expr import Expression, UnivariateSpec, add, const, parse, to_string, var
from .system import QuasilinearSystem, SpecError, standard_box

FAMILIES = ("euler", "hopf", "linear", "generic_image", "lindeg_image")


@dataclass(frozen=True)
class FamilySpec:
    family: str
    n: int
    f: tuple[UnivariateSpec, ...] = ()
    g: tuple[UnivariateSpec, ...] = ()
    c: tuple[float, ...] = ()
    box: tuple | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SpecError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        for name in ("f", "g", "c"):
            vals = getattr(self, name)
            if vals and len(vals) != self.n:
                raise SpecError(f"{name!r} has {len(vals)} entries, n = {self.n}")

    @classmethod
    def from_dict(cls, d: dict) -> "FamilySpec":
        try:
            family = str(d["family"]).lower()
            n = int(d["n"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecError(f"family spec needs 'family' and 'n': {exc}") from exc

        def uni(key, role):
            try:
                return tuple(UnivariateSpec.parse(str(s), role) for s in d.get(key) or ())
            except (SyntaxError, IndexError, ValueError) as exc:
                raise SpecError(f"{key!r}: {exc}") from exc

        return cls(
            family,
            n,
            uni("f", "f"),
            uni("g", "g"),
            tuple(float(v) for v in d.get("c") or ()),
            tuple(tuple(b) for b in d["box"]) if d.get("box") else None,
        )

    @classmethod
    def load(cls, path) -> "FamilySpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: {exc}") from exc

    def to_dict(self) -> dict:
        d = {"family": self.family, "n": self.n}
        if self.f:
            d["f"] = [u.source or to_string(u.expr).replace("R1", "u") for u in self.f]
        if self.g:
            d["g"] = [u.source or to_string(u.expr).replace("R1", "u") for u in self.g]
        if self.c:
            d["c"] = list(self.c)
        if self.box:
            d["box"] = [list(b) for b in self.box]
        return d


@dataclass(frozen=True, eq=False)
class GeneratedFamily:
    """A generated system plus, for reciprocal images, its base and conservation pairs."""

    spec: FamilySpec | None
    system: QuasilinearSystem
    base: QuasilinearSystem | None = None
    pairs: tuple[Expression, Expression, Expression, Expression] | None = None
    hopf_speeds: tuple[UnivariateSpec, ...] = field(default=())

    def to_dict(self) -> dict:
        d = self.system.to_dict()
        if self.spec is not None:
            d["family"] = self.spec.to_dict()
        if self.base is not None:
            d["base_lambda"] = [to_string(e) for e in self.base.lambdas]
        if self.pairs is not None:
            d["pairs"] = dict(zip("ABMN", (to_string(e) for e in self.pairs)))
        return d


def _box(n, box):
    return standard_box(n) if box is None else tuple((float(a), float(b)) for a, b in box)


def _as_uni(f, role="f") -> UnivariateSpec:
    if isinstance(f, UnivariateSpec):
        return f
    if isinstance(f, str):
        return UnivariateSpec.parse(f, role)
    raise SpecError(f"expected a univariate function, got {f!r}")


def euler(n: int, box=None) -> QuasilinearSystem:
    """``lambda^i = R^i``."""
    if n < 2:
        raise SpecError("n >= 2 required")
    return QuasilinearSystem(tuple(var(i + 1) for i in range(n)), _box(n, box))


def hopf(fs: Sequence, box=None) -> QuasilinearSystem:
    """``lambda^i = f^i(R^i)``.

    Entries may be :class:`UnivariateSpec` (applied to ``R^i``), placeholder
    strings in ``u``, or expressions already written in ``R^i``.

    Raises
    ------
    SpecError
        If an expression entry references a variable other than its own.
    """
    n = len(fs)
    lams = []
    for i, f in enumerate(fs):
        if isinstance(f, Expression):
            if not f.variables() <= {i + 1}:
                raise SpecError(f"f^{i + 1} = {f} must depend on R{i + 1} only")
            lams.append(f)
        else:
            lams.append(_as_uni(f).at(i + 1))
    return QuasilinearSystem(tuple(lams), _box(n, box))


def linear(c: Sequence[float], box=None) -> QuasilinearSystem:
    return QuasilinearSystem(tuple(const(v) for v in c), _box(len(c), box))


def _sum(terms):
    out = const(0.0)
    for t in terms:
        out = add(out, t)
    return out


def generic_image(f: Sequence, g: Sequence, box=None) -> GeneratedFamily:
    """Reciprocal image of the Euler system under the pairs built from ``f, g``.

    Speeds ``-sum_k[f_k'(R^k)(R^i - R^k) + f_k(R^k)] / sum_k[g_k'(R^k)(R^i - R^k) + g_k(R^k)]``;
    pairs ``A = sum(f_k' R^k - f_k)``, ``B = sum f_k'`` and likewise ``M, N`` from ``g``.
    """
    n = len(f)
    if len(g) != n or n < 2:
        raise SpecError("generic_image needs f and g of equal length n >= 2")
    fu = [_as_uni(v, "f") for v in f]
    gu = [_as_uni(v, "g") for v in g]
    R = [var(k + 1) for k in range(n)]
    fk = [u.at(k + 1) for k, u in enumerate(fu)]
    gk = [u.at(k + 1) for k, u in enumerate(gu)]
    dfk = [u.derivative().at(k + 1) for k, u in enumerate(fu)]
    dgk = [u.derivative().at(k + 1) for k, u in enumerate(gu)]
    lams = []
    for i in range(n):
        num = _sum(dfk[k] * (R[i] - R[k]) + fk[k] for k in range(n))
        den = _sum(dgk[k] * (R[i] - R[k]) + gk[k] for k in range(n))
        lams.append(-(num / den))
    A = _sum(dfk[k] * R[k] - fk[k] for k in range(n))
    B = _sum(dfk)
    M = _sum(dgk[k] * R[k] - gk[k] for k in range(n))
    N = _sum(dgk)
    box = _box(n, box)
    spec = FamilySpec("generic_image", n, tuple(fu), tuple(gu), (), box)
    return GeneratedFamily(spec, QuasilinearSystem(tuple(lams), box), euler(n, box), (A, B, M, N),
                           tuple(UnivariateSpec.parse("u") for _ in range(n)))


def lindeg_image(c: Sequence[float], f: Sequence, g: Sequence, box=None) -> GeneratedFamily:
    """Reciprocal image of ``R^i_t = c^i R^i_x``: speeds ``-sum(c^i - c^k) f_k / sum(c^i - c^k) g_k``.

    The base pairs are ``A = sum c^k f_k``, ``B = sum f_k``, ``M = sum c^k g_k``, ``N = sum g_k``.
    """
    n = len(c)
    if len(set(c)) != n:
        raise SpecError(f"lindeg_image needs pairwise distinct c, got {list(c)}")
    if len(f) != n or len(g) != n:
        raise SpecError("lindeg_image needs f, g of length n")
    fu = [_as_uni(v, "f") for v in f]
    gu = [_as_uni(v, "g") for v in g]
    fk = [u.at(k + 1) for k, u in enumerate(fu)]
    gk = [u.at(k + 1) for k, u in enumerate(gu)]
    lams = []
    for i in range(n):
        num = _sum(const(c[i] - c[k]) * fk[k] for k in range(n) if k != i)
        den = _sum(const(c[i] - c[k]) * gk[k] for k in range(n) if k != i)
        lams.append(-(num / den))
    A = _sum(const(c[k]) * fk[k] for k in range(n))
    B = _sum(fk)
    M = _sum(const(c[k]) * gk[k] for k in range(n))
    N = _sum(gk)
    box = _box(n, box)
    spec = FamilySpec("lindeg_image", n, tuple(fu), tuple(gu), tuple(float(v) for v in c), box)
    return GeneratedFamily(spec, QuasilinearSystem(tuple(lams), box), linear(c, box), (A, B, M, N),
                           tuple(UnivariateSpec(const(float(v))) for v in c))


def build(spec: FamilySpec) -> GeneratedFamily:
    """Construct the family a :class:`FamilySpec` describes."""
    n = spec.n
    if spec.family == "euler":
        return GeneratedFamily(spec, euler(n, spec.box), hopf_speeds=tuple(UnivariateSpec.parse("u") for _ in range(n)))
    if spec.family == "hopf":
        if not spec.f:
            raise SpecError("hopf family needs 'f'")
        return GeneratedFamily(spec, hopf(spec.f, spec.box), hopf_speeds=spec.f)
    if spec.family == "linear":
        if not spec.c:
            raise SpecError("linear family needs 'c'")
        return GeneratedFamily(spec, linear(spec.c, spec.box),
                               hopf_speeds=tuple(UnivariateSpec(const(v)) for v in spec.c))
    if spec.family == "generic_image":
        if not (spec.f and spec.g):
            raise SpecError("generic_image needs 'f' and 'g'")
        fam = generic_image(spec.f, spec.g, spec.box)
    else:
        if not (spec.c and spec.f and spec.g):
            raise SpecError("lindeg_image needs 'c', 'f' and 'g'")
        fam = lindeg_image(spec.c, spec.f, spec.g, spec.box)
    return GeneratedFamily(spec, fam.system, fam.base, fam.pairs, fam.hopf_speeds)


def perturbed_control(n: int = 4, box=None) -> QuasilinearSystem:
    """Negative control: ``lambda^1 = R^1 + (R^2)^2``, ``lambda^i = R^i`` otherwise."""
    lams = [parse("R1 + R2^2", n)] + [var(i + 1) for i in range(1, n)]
    return QuasilinearSystem(tuple(lams), _box(n, box))
