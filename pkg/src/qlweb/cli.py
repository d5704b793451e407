"""``qlweb`` command line: check, generate, solve, web.

Exit codes: 0 analysis finished (whatever the verdict), 2 bad input,
3 too many rejected samples, 4 grid entirely past breaking, 5 EFGH solve
requested for a 3-web.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import connection, generator, hopf, web
from .expr import parse
from .system import DEFAULT_TOL, InsufficientSamples, QuasilinearSystem, SpecError, classify

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_SAMPLES = 3
EXIT_BREAKDOWN = 4
EXIT_THREE_WEB = 5

FORMATS = ("json", "csv", "svg")


@dataclass
class RunConfig:
    subcommand: str
    input: Path
    tol: float = DEFAULT_TOL
    samples: int = 200
    seed: int = 42
    grid: tuple[int, int] = (65, 65)
    domain: tuple[float, float, float, float] | None = None
    step_h: float = 1e-3
    out: Path = Path(".")
    formats: tuple[str, ...] = FORMATS
    seeds: int = 8
    system: Path | None = None
    decouple: bool = False
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        return cls(
            args.command,
            Path(args.input),
            tol=args.tol,
            samples=args.samples,
            seed=args.seed,
            grid=args.grid,
            domain=args.domain,
            step_h=args.step_h,
            out=Path(args.out),
            formats=args.format,
            seeds=getattr(args, "seeds", 8),
            system=Path(args.system) if getattr(args, "system", None) else None,
            decouple=getattr(args, "decouple", False),
        )


# ---------------------------------------------------------------------------
# deterministic JSON
# ---------------------------------------------------------------------------

def _encode(obj, indent=0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return format(v, ".17g") if math.isfinite(v) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, bool, np.number, str)) or v is None for v in obj):
            return "[" + ", ".join(_encode(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON with every float at 17 significant digits and non-finite values as null."""
    return _encode(obj) + "\n"


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


# ---------------------------------------------------------------------------
# input helpers
# ---------------------------------------------------------------------------

def _load_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise SpecError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: {exc}") from exc


def _family_from(d: dict) -> generator.GeneratedFamily:
    """Accept a family spec, a generated-family report, or either nested under ``"family"``."""
    spec = d.get("family")
    if isinstance(spec, dict):
        return generator.build(generator.FamilySpec.from_dict(spec))
    return generator.build(generator.FamilySpec.from_dict(d))


def _data_from(d: dict, n: int) -> hopf.InitialData:
    try:
        data = d["data"]
        profiles, interval = data["profiles"], data["interval"]
    except (KeyError, TypeError) as exc:
        raise SpecError("solve input needs data.profiles and data.interval") from exc
    if len(profiles) != n:
        raise SpecError(f"{len(profiles)} profiles for n = {n}")
    try:
        return hopf.InitialData.parse(profiles, interval)
    except (SyntaxError, IndexError, ValueError) as exc:
        raise SpecError(f"profile: {exc}") from exc


def _grid(cfg: RunConfig, d: dict) -> hopf.Grid:
    dom = cfg.domain or d.get("domain")
    if dom is None:
        raise SpecError("no domain: pass --domain t0,t1,x0,x1 or set 'domain' in the input")
    t0, t1, x0, x1 = (float(v) for v in dom)
    nt, nx = cfg.grid
    try:
        return hopf.Grid(t0, t1, nt, x0, x1, nx)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_check(cfg: RunConfig) -> int:
    d = _load_json(cfg.input)
    if "lambda" in d:
        sys_ = QuasilinearSystem.from_dict(d)
    else:
        sys_ = _family_from(d).system
    report = classify(sys_, samples=cfg.samples, seed=cfg.seed, tol=cfg.tol)
    out = {"system": sys_.to_dict(), "report": report.to_dict()}
    if cfg.decouple and sys_.n >= 3:
        dec = connection.decouple(sys_, probes=20, seed=cfg.seed, h=cfg.step_h)
        out["decoupling"] = {
            "tolerance": 1e-6,
            "step_h": cfg.step_h,
            "probes": dec.probes,
            "visible": dec.visible.astype(bool).tolist(),
            "residuals": dec.residuals,
            "max_residual": dec.max_residual,
            "horizon": dec.horizon,
            "worst_pair": None if dec.worst is None else [dec.worst[0] + 1, dec.worst[1] + 1],
        }
    path = _write(cfg.out / "report.json", dumps(out))
    cls = report.classes
    for k, v in cls.items():
        print(f"{k:22s} {v}")
    print(f"report: {path}")
    return EXIT_OK


def cmd_generate(cfg: RunConfig) -> int:
    fam = _family_from(_load_json(cfg.input))
    path = _write(cfg.out / "system.json", dumps(fam.to_dict()))
    print(f"system: {path}")
    return EXIT_OK


def _solve(cfg: RunConfig, d: dict):
    """Returns ``(family or None, base speeds, transformed system or None, sol, cmap)``."""
    spec_d = d["family"] if isinstance(d.get("family"), dict) else d
    spec = generator.FamilySpec.from_dict(spec_d)
    grid = _grid(cfg, d)
    data = _data_from(d, spec.n)
    if spec.n == 1:
        # a single Hopf equation: no system-level objects, only the solution
        if spec.family not in ("hopf", "euler", "linear"):
            raise SpecError(f"{spec.family} needs n >= 2")
        if spec.family == "hopf":
            speeds = spec.f
        elif spec.family == "euler":
            speeds = (generator.UnivariateSpec.parse("u"),)
        else:
            speeds = (generator.UnivariateSpec(generator.const(spec.c[0])),)
        if not speeds:
            raise SpecError("hopf family needs 'f'")
        sol = hopf.solve_hopf(speeds, data, grid)
        return None, [speeds[0].at(1)], None, sol, None
    fam = generator.build(spec)
    sol = hopf.solve_hopf(fam.hopf_speeds, data, grid)
    base = fam.base if fam.base is not None else fam.system
    cmap = hopf.pushforward(sol, fam.pairs) if fam.pairs is not None else None
    return fam, list(base.lambdas), (fam.system if cmap is not None else None), sol, cmap


def _solve_summary(base, target, sol, cmap) -> dict:
    info = {
        "grid": {"t": [sol.grid.t0, sol.grid.t1, sol.grid.nt], "x": [sol.grid.x0, sol.grid.x1, sol.grid.nx]},
        "breaking_times": sol.breaking_times,
        "breaking_safety": hopf.BREAKING_SAFETY,
        "masked_nodes": int((~sol.valid).sum()),
        "breakdown_nodes": int(sol.breakdown.sum()),
        "root_residual": {"value": sol.root_residual, "tolerance": 1e-12},
        "pde_residual": {"value": hopf.pde_residual(sol, base), "tolerance": None,
                         "note": "O(h^2) truncation; compare across grids"},
    }
    if cmap is not None:
        info["closedness"] = {"value": cmap.closedness, "tolerance": None}
        info["pde_residual_transformed"] = {"value": hopf.pde_residual(sol, target, cmap),
                                            "tolerance": None}
    return info


def cmd_solve(cfg: RunConfig) -> int:
    d = _load_json(cfg.input)
    fam, base, target, sol, cmap = _solve(cfg, d)
    cfg.out.mkdir(parents=True, exist_ok=True)
    if "csv" in cfg.formats:
        hopf.write_solution_csv(cfg.out / "solution.csv", sol, cmap)
        lines = []
        for i, lam in enumerate(base):
            lines += hopf.sample_characteristics(sol, lam, i, cfg.seeds, cmap=cmap)
        hopf.write_polylines_csv(cfg.out / "polylines.csv", lines, pushed=cmap is not None)
    _write(cfg.out / "solve.json", dumps(_solve_summary(base, target, sol, cmap)))
    print(f"solution: {cfg.out}")
    return EXIT_OK


def _metric_from_csv(sol: hopf.SolutionSample, cmap: hopf.CoordinateMap) -> hopf.CoordinateMap:
    g = sol.grid
    xt = np.where(cmap.valid, cmap.xt, np.nan)
    tt = np.where(cmap.valid, cmap.tt, np.nan)
    A, B = np.gradient(xt, g.dt, g.dx)
    M, N = np.gradient(tt, g.dt, g.dx)
    valid = cmap.valid & np.isfinite(A * N - B * M) & (np.abs(A * N - B * M) > 1e-12)
    return hopf.CoordinateMap(cmap.xt, cmap.tt, A, B, M, N, valid, float("nan"))


def cmd_web(cfg: RunConfig) -> int:
    lines = []
    if cfg.input.suffix == ".csv":
        if cfg.system is None:
            raise SpecError("web on a solution CSV needs --system (the system whose web is sampled)")
        d = _load_json(cfg.system)
        sys_ = QuasilinearSystem.from_dict(d) if "lambda" in d else _family_from(d).system
        sol, cmap = hopf.read_solution_csv(cfg.input)
        cmap = _metric_from_csv(sol, cmap)
        if sys_.n == 3:
            return _three_web()
        w = web.WebSample.from_pushforward(sol, cmap, sys_)
    else:
        d = _load_json(cfg.input)
        if "slopes" in d:
            exprs = d["slopes"]
            if len(exprs) == 3:
                return _three_web()
            grid = _grid(cfg, d)
            try:
                tape = [parse(s, 2, names={"t": 1, "x": 2}) for s in exprs]
            except (SyntaxError, IndexError) as exc:
                raise SpecError(f"slope: {exc}") from exc
            T, X = grid.mesh()
            pts = np.stack([T.ravel(), X.ravel()], axis=1)
            from .expr import Tape

            lam = Tape.compile(tape)(pts, errors="nan").T.reshape((len(exprs),) + T.shape)
            w = web.WebSample.from_slopes(lam, grid.dt, grid.dx, T=T, X=X)
        else:
            fam, base, target, sol, cmap = _solve(cfg, d)
            if len(base) == 3:
                return _three_web()
            if fam is None or len(base) < 4:
                raise web.UnderdeterminedWeb(f"a {len(base)}-web does not determine E, F, G, H")
            if cmap is not None:
                w = web.WebSample.from_pushforward(sol, cmap, fam.system)
            else:
                w = web.WebSample.from_solution(sol, fam.system)
            for i, lam in enumerate(base):
                lines += hopf.sample_characteristics(sol, lam, i, cfg.seeds, cmap=cmap)
    fld = web.solve_EFGH(w.lam, w.V)
    r1, r2 = web.henaut_residual(fld, w)
    cfg.out.mkdir(parents=True, exist_ok=True)
    if "csv" in cfg.formats:
        web.write_field_csv(cfg.out / "web.csv", w, fld)
    if "svg" in cfg.formats and lines:
        web.write_svg(cfg.out / "web.svg", lines, pushed=True)
    report = {
        "n": w.n,
        "henaut_residual": [r1, r2],
        "ill_conditioned_nodes": int(fld.ill.sum()),
        "cond_limit": web.COND_LIMIT,
        "note": "residuals decay as O(h^2) for linearizable webs; judge by refinement",
        "straightness": web.straightness_table(lines, pushed=True),
    }
    _write(cfg.out / "web.json", dumps(report))
    print(f"henaut residual: {r1:.6g} {r2:.6g}")
    return EXIT_OK


def _three_web() -> int:
    print("E, F, G, H are not determined pointwise for a 3-web; "
          "use `qlweb check`, whose gl(2) structure test decides linearizability for n = 3.",
          file=sys.stderr)
    return EXIT_THREE_WEB


COMMANDS = {"check": cmd_check, "generate": cmd_generate, "solve": cmd_solve, "web": cmd_web}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _pair(text):
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected nt,nx") from exc
    return a, b


def _quad(text):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected t0,t1,x0,x1") from exc
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("expected t0,t1,x0,x1")
    return vals


def _formats(text):
    vals = tuple(v.strip() for v in text.split(",") if v.strip())
    bad = [v for v in vals if v not in FORMATS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown format(s) {bad}; choose from {FORMATS}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("input", help="input JSON (or solution CSV for `web`)")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="residual tolerance (default 1e-7)")
    common.add_argument("--samples", type=int, default=200, help="sample points (default 200)")
    common.add_argument("--seed", type=int, default=42, help="sampling seed (default 42)")
    common.add_argument("--grid", type=_pair, default=(65, 65), metavar="NT,NX", help="solution grid size (default 65,65)")
    common.add_argument("--domain", type=_quad, default=None, metavar="T0,T1,X0,X1",
                        help="time and space window (default: the input's \"domain\")")
    common.add_argument("--step-h", type=float, default=1e-3, help="transport step (default 1e-3)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--format", type=_formats, default=FORMATS, metavar="json,csv,svg", help="outputs to write")

    p = argparse.ArgumentParser(prog="qlweb", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("check", parents=[common], help="classify a system")
    c.add_argument("--decouple", action="store_true", help="also transport sections and probe decoupling")
    sub.add_parser("generate", parents=[common], help="emit a system from a family spec")
    s = sub.add_parser("solve", parents=[common], help="solve a Hopf family and push it forward")
    s.add_argument("--seeds", type=int, default=8, help="characteristics per family")
    w = sub.add_parser("web", parents=[common], help="linearizability test on a sampled web")
    w.add_argument("--seeds", type=int, default=8, help="characteristics per family")
    w.add_argument("--system", default=None, help="system JSON when the input is a solution CSV")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig.from_args(args)
    try:
        return COMMANDS[cfg.subcommand](cfg)
    except (SpecError, SyntaxError, IndexError, hopf.NotClosed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except InsufficientSamples as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SAMPLES
    except hopf.BreakdownDetected as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except web.UnderdeterminedWeb as exc:
        if "3-web" in str(exc):
            return _three_web()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
