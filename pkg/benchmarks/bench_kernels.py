"""Time the numba and numpy variants of each hot kernel on the same inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

The first numba call per kernel compiles (or loads from cache) and is
reported separately as ``warmup``.
"""
import argparse
import time

import numpy as np

from qlweb import generator, kernels as K
from qlweb._accel import HAVE_NUMBA
from qlweb.connection import build_forms
from qlweb.expr import Tape, UnivariateSpec


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(scale):
    rng = np.random.default_rng(0)
    fam = generator.generic_image(["u^2/2"] * 4, ["1"] * 4)
    sys = fam.system
    npts = int(20000 * scale)
    X = sys.center + (rng.random((npts, 4)) - 0.5) * sys.widths
    yield "eval_points", sys.jac_tape.args, (X,), K.eval_points_nb, K.eval_points_np

    g = UnivariateSpec.parse("u").compose(UnivariateSpec.parse("2 + 0.3*sin(x)", placeholder="x"))
    tape = Tape.compile([g.expr, g.derivative().expr])
    xs = np.linspace(-5, 5, int(20000 * scale))
    tau = 0.5
    S = 2.4 * tau
    yield "hopf_roots", tape.args, (xs, tau, xs - S, xs + S, xs.copy()), K.hopf_roots_nb, K.hopf_roots_np

    forms = build_forms(sys)
    m = max(1, int(20 * scale))
    R0 = np.tile(sys.center, (m, 1))
    R1 = R0 + rng.uniform(-0.4, 0.4, R0.shape)
    Y0 = np.tile([0.0, 1.0, 1.0, 0.0], (m, 1))
    steps = np.full(m, 1000, dtype=np.int64)
    yield "transport", forms.tape.args, (R0, R1, steps, Y0), K.transport_nb, K.transport_np

    speed = Tape.compile([fam.base.lambdas[0]])
    nt = nx = 257
    Rg = np.ascontiguousarray(np.broadcast_to(
        3.0 + 0.1 * np.sin(np.linspace(0, 2 * np.pi, nx)), (4, nt, nx)))
    valid = np.ones((nt, nx), dtype=bool)
    seeds = np.linspace(3.6, 6.0, max(1, int(64 * scale)))
    dt, dx = 0.5 / (nt - 1), 2 * np.pi / (nx - 1)
    yield ("trace", speed.args, (Rg, valid, 0.0, dt, 0.0, dx, seeds, 0.0, dt / 4, 4 * (nt - 1)),
           K.trace_nb, K.trace_np)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply problem sizes")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<12} {'warmup[s]':>10} {'numba[s]':>10} {'numpy[s]':>10} {'speedup':>8} {'max|diff|':>10}")
    for name, targs, inputs, nb, npf in cases(args.scale):
        t0 = time.perf_counter()
        out_nb = nb(*targs, *inputs)
        warm = time.perf_counter() - t0
        out_np = npf(*targs, *inputs)
        a, b = np.asarray(out_nb[0], dtype=float), np.asarray(out_np[0], dtype=float)
        fin = np.isfinite(a) & np.isfinite(b)
        diff = float(np.max(np.abs(a[fin] - b[fin]))) if fin.any() else 0.0
        t_nb = best_of(lambda: nb(*targs, *inputs), args.repeat)
        t_np = best_of(lambda: npf(*targs, *inputs), args.repeat)
        print(f"{name:<12} {warm:>10.3f} {t_nb:>10.4f} {t_np:>10.4f} {t_np / t_nb:>8.1f} {diff:>10.1e}")


if __name__ == "__main__":
    main()
