"""Hot numeric loops, each in a numba and a pure-numpy flavour.

Every public function here dispatches on :data:`qlweb._accel.USE_NUMBA`.
The ``*_nb`` / ``*_np`` variants are importable directly so tests and the
benchmark can compare the two backends side by side.

Expressions reach the kernels as a *tape*: a straight-line register program
produced by :meth:`qlweb.expr.Tape.compile`.  Instruction ``k`` writes
register ``k``; operands always refer to earlier registers.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

OP_CONST = 0
OP_VAR = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_POW = 6
OP_NEG = 7
OP_EXP = 8
OP_LOG = 9
OP_SIN = 10
OP_COS = 11
OP_SQRT = 12


# ---------------------------------------------------------------------------
# tape evaluation
# ---------------------------------------------------------------------------

@njit
def _ipow_scalar(x, n):
    result = 1.0
    base = x
    while n > 0:
        if n & 1:
            result *= base
        base *= base
        n >>= 1
    return result


@njit
def _run_tape(ops, a0, a1, val, x, regs):
    """Evaluate one point into ``regs``; return first failing instruction or -1."""
    first_err = -1
    for k in range(ops.shape[0]):
        op = ops[k]
        if op == 0:
            regs[k] = val[k]
        elif op == 1:
            regs[k] = x[a0[k]]
        elif op == 2:
            regs[k] = regs[a0[k]] + regs[a1[k]]
        elif op == 3:
            regs[k] = regs[a0[k]] - regs[a1[k]]
        elif op == 4:
            regs[k] = regs[a0[k]] * regs[a1[k]]
        elif op == 5:
            d = regs[a1[k]]
            if d == 0.0:
                regs[k] = np.nan
                if first_err < 0:
                    first_err = k
            else:
                regs[k] = regs[a0[k]] / d
        elif op == 6:
            regs[k] = _ipow_scalar(regs[a0[k]], a1[k])
        elif op == 7:
            regs[k] = -regs[a0[k]]
        elif op == 8:
            regs[k] = np.exp(regs[a0[k]])
        elif op == 9:
            u = regs[a0[k]]
            if u <= 0.0:
                regs[k] = np.nan
                if first_err < 0:
                    first_err = k
            else:
                regs[k] = np.log(u)
        elif op == 10:
            regs[k] = np.sin(regs[a0[k]])
        elif op == 11:
            regs[k] = np.cos(regs[a0[k]])
        else:
            u = regs[a0[k]]
            if u < 0.0:
                regs[k] = np.nan
                if first_err < 0:
                    first_err = k
            else:
                regs[k] = np.sqrt(u)
    return first_err


@njit
def eval_points_nb(ops, a0, a1, val, outs, X):
    npts = X.shape[0]
    out = np.empty((npts, outs.shape[0]))
    err = np.full(npts, -1, dtype=np.int64)
    regs = np.empty(ops.shape[0])
    for p in range(npts):
        err[p] = _run_tape(ops, a0, a1, val, X[p], regs)
        for j in range(outs.shape[0]):
            out[p, j] = regs[outs[j]]
    return out, err


def _ipow_array(x, n):
    result = np.ones_like(x)
    base = x.copy()
    while n > 0:
        if n & 1:
            result = result * base
        base = base * base
        n >>= 1
    return result


def eval_points_np(ops, a0, a1, val, outs, X):
    X = np.asarray(X, dtype=float)
    npts = X.shape[0]
    regs = [None] * ops.shape[0]
    err = np.full(npts, -1, dtype=np.int64)

    def flag(k, bad):
        if bad.any():
            err[(err < 0) & bad] = k

    with np.errstate(all="ignore"):
        for k in range(ops.shape[0]):
            op = ops[k]
            if op == OP_CONST:
                r = np.full(npts, val[k])
            elif op == OP_VAR:
                r = X[:, a0[k]].copy()
            elif op == OP_ADD:
                r = regs[a0[k]] + regs[a1[k]]
            elif op == OP_SUB:
                r = regs[a0[k]] - regs[a1[k]]
            elif op == OP_MUL:
                r = regs[a0[k]] * regs[a1[k]]
            elif op == OP_DIV:
                d = regs[a1[k]]
                bad = d == 0.0
                flag(k, bad)
                r = np.where(bad, np.nan, regs[a0[k]] / np.where(bad, 1.0, d))
            elif op == OP_POW:
                r = _ipow_array(regs[a0[k]], int(a1[k]))
            elif op == OP_NEG:
                r = -regs[a0[k]]
            elif op == OP_EXP:
                r = np.exp(regs[a0[k]])
            elif op == OP_LOG:
                u = regs[a0[k]]
                bad = u <= 0.0
                flag(k, bad)
                r = np.where(bad, np.nan, np.log(np.where(bad, 1.0, u)))
            elif op == OP_SIN:
                r = np.sin(regs[a0[k]])
            elif op == OP_COS:
                r = np.cos(regs[a0[k]])
            else:
                u = regs[a0[k]]
                bad = u < 0.0
                flag(k, bad)
                r = np.where(bad, np.nan, np.sqrt(np.where(bad, 0.0, u)))
            regs[k] = r
    out = np.empty((npts, outs.shape[0]))
    for j, o in enumerate(outs):
        out[:, j] = regs[o]
    return out, err


def eval_points(ops, a0, a1, val, outs, X):
    """Evaluate a tape at each row of ``X``.

    Returns ``(values, err)`` with ``values`` of shape (points, outputs) and
    ``err[p]`` the first failing instruction at point ``p`` (-1 if none).
    Failing subterms evaluate to NaN and evaluation continues.
    """
    X = np.ascontiguousarray(X, dtype=float)
    if USE_NUMBA:
        return eval_points_nb(ops, a0, a1, val, outs, X)
    return eval_points_np(ops, a0, a1, val, outs, X)


# ---------------------------------------------------------------------------
# Hopf characteristic roots: s - g(s) t - x = 0 with g = f o phi
# ---------------------------------------------------------------------------

ROOT_OK = 0
ROOT_NO_BRACKET = 1
ROOT_NOT_MONOTONE = 2
ROOT_EVAL_ERROR = 3


@njit
def _gdg(ops, a0, a1, val, outs, s, xv, regs):
    xv[0] = s
    e = _run_tape(ops, a0, a1, val, xv, regs)
    return regs[outs[0]], regs[outs[1]], e


@njit
def hopf_roots_nb(ops, a0, a1, val, outs, xs, t, lo, hi, guess):
    m = xs.shape[0]
    s_out = np.full(m, np.nan)
    status = np.zeros(m, dtype=np.int64)
    regs = np.empty(ops.shape[0])
    xv = np.empty(1)
    for p in range(m):
        x = xs[p]
        a = lo[p]
        b = hi[p]
        ga, _, ea = _gdg(ops, a0, a1, val, outs, a, xv, regs)
        gb, _, eb = _gdg(ops, a0, a1, val, outs, b, xv, regs)
        if ea >= 0 or eb >= 0:
            status[p] = ROOT_EVAL_ERROR
            continue
        fa = a - ga * t - x
        fb = b - gb * t - x
        if fa == 0.0:
            s_out[p] = a
            continue
        if fb == 0.0:
            s_out[p] = b
            continue
        if fa * fb > 0.0:
            status[p] = ROOT_NO_BRACKET
            continue
        if fa < 0.0:
            xl = a
            xh = b
        else:
            xl = b
            xh = a
        s = guess[p]
        if not (s > min(a, b) and s < max(a, b)):
            s = 0.5 * (a + b)
        dxold = abs(b - a)
        dx = dxold
        g, dg, e = _gdg(ops, a0, a1, val, outs, s, xv, regs)
        f = s - g * t - x
        df = 1.0 - dg * t
        for _ in range(200):
            if (((s - xh) * df - f) * ((s - xl) * df - f) > 0.0) or (
                abs(2.0 * f) > abs(dxold * df)
            ):
                dxold = dx
                dx = 0.5 * (xh - xl)
                s = xl + dx
            else:
                dxold = dx
                dx = f / df
                s = s - dx
            if abs(dx) <= 1e-16 * (1.0 + abs(s)):
                break
            g, dg, e = _gdg(ops, a0, a1, val, outs, s, xv, regs)
            f = s - g * t - x
            df = 1.0 - dg * t
            if f == 0.0:
                break
            if f < 0.0:
                xl = s
            else:
                xh = s
        g, dg, e = _gdg(ops, a0, a1, val, outs, s, xv, regs)
        s_out[p] = s
        if e >= 0:
            status[p] = ROOT_EVAL_ERROR
        elif 1.0 - dg * t <= 0.0:
            status[p] = ROOT_NOT_MONOTONE
    return s_out, status


def hopf_roots_np(ops, a0, a1, val, outs, xs, t, lo, hi, guess):
    xs = np.asarray(xs, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)

    def gdg(s):
        v, e = eval_points_np(ops, a0, a1, val, outs, s[:, None])
        return v[:, 0], v[:, 1], e

    ga, _, ea = gdg(lo)
    gb, _, eb = gdg(hi)
    fa = lo - ga * t - xs
    fb = hi - gb * t - xs
    status = np.zeros(xs.shape[0], dtype=np.int64)
    status[(fa * fb > 0.0)] = ROOT_NO_BRACKET
    status[(ea >= 0) | (eb >= 0)] = ROOT_EVAL_ERROR
    xl = np.where(fa < 0.0, lo, hi)
    xh = np.where(fa < 0.0, hi, lo)
    s = np.asarray(guess, dtype=float).copy()
    inside = (s > np.minimum(lo, hi)) & (s < np.maximum(lo, hi))
    s = np.where(inside, s, 0.5 * (lo + hi))
    active = status == ROOT_OK
    with np.errstate(all="ignore"):
        for _ in range(200):
            if not active.any():
                break
            g, dg, _ = gdg(s)
            f = s - g * t - xs
            df = 1.0 - dg * t
            hit = active & (f == 0.0)
            active &= ~hit
            xl = np.where(active & (f < 0.0), s, xl)
            xh = np.where(active & (f > 0.0), s, xh)
            newton = s - f / df
            ok = (
                np.isfinite(newton)
                & (newton > np.minimum(xl, xh))
                & (newton < np.maximum(xl, xh))
            )
            s_new = np.where(ok, newton, 0.5 * (xl + xh))
            step = np.abs(s_new - s)
            s = np.where(active, s_new, s)
            active &= step > 1e-16 * (1.0 + np.abs(s))
    g, dg, e = gdg(s)
    bad_eval = (e >= 0) & (status == ROOT_OK)
    status[bad_eval] = ROOT_EVAL_ERROR
    status[(status == ROOT_OK) & (1.0 - dg * t <= 0.0)] = ROOT_NOT_MONOTONE
    s[(status == ROOT_NO_BRACKET) | ((ea >= 0) | (eb >= 0))] = np.nan
    # exact endpoint roots
    s = np.where((status == ROOT_OK) & (fa == 0.0), lo, s)
    s = np.where((status == ROOT_OK) & (fb == 0.0), hi, s)
    return s, status


def hopf_roots(ops, a0, a1, val, outs, xs, t, lo, hi, guess):
    """Solve ``s - g(s) t = x`` per entry; tape outputs are ``(g, g')``."""
    args = [np.ascontiguousarray(v, dtype=float) for v in (xs, lo, hi, guess)]
    if USE_NUMBA:
        return hopf_roots_nb(ops, a0, a1, val, outs, args[0], float(t), *args[1:])
    return hopf_roots_np(ops, a0, a1, val, outs, args[0], float(t), *args[1:])


# ---------------------------------------------------------------------------
# parallel transport: d(A,B) = (A,B) [[w11, w21], [w12, w22]] along segments
# ---------------------------------------------------------------------------

@njit
def _transport_rhs(ops, a0, a1, val, outs, n, R, d, y, regs, dy):
    e = _run_tape(ops, a0, a1, val, R, regs)
    w11 = 0.0
    w12 = 0.0
    w21 = 0.0
    w22 = 0.0
    for i in range(n):
        w11 += regs[outs[i]] * d[i]
        w12 += regs[outs[n + i]] * d[i]
        w21 += regs[outs[2 * n + i]] * d[i]
        w22 += regs[outs[3 * n + i]] * d[i]
    dy[0] = y[0] * w11 + y[1] * w12
    dy[1] = y[0] * w21 + y[1] * w22
    dy[2] = y[2] * w11 + y[3] * w12
    dy[3] = y[2] * w21 + y[3] * w22
    return e


@njit
def transport_nb(ops, a0, a1, val, outs, R0, R1, nsteps, Y0):
    P = R0.shape[0]
    n = R0.shape[1]
    Y = Y0.copy()
    err = np.full(P, -1, dtype=np.int64)
    regs = np.empty(ops.shape[0])
    R = np.empty(n)
    d = np.empty(n)
    ytmp = np.empty(4)
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    for p in range(P):
        N = nsteps[p]
        h = 1.0 / N
        for i in range(n):
            d[i] = R1[p, i] - R0[p, i]
        y = Y[p]
        for s in range(N):
            tau = s * h
            for i in range(n):
                R[i] = R0[p, i] + tau * d[i]
            e = _transport_rhs(ops, a0, a1, val, outs, n, R, d, y, regs, k1)
            for i in range(n):
                R[i] = R0[p, i] + (tau + 0.5 * h) * d[i]
            for c in range(4):
                ytmp[c] = y[c] + 0.5 * h * k1[c]
            e = max(e, _transport_rhs(ops, a0, a1, val, outs, n, R, d, ytmp, regs, k2))
            for c in range(4):
                ytmp[c] = y[c] + 0.5 * h * k2[c]
            e = max(e, _transport_rhs(ops, a0, a1, val, outs, n, R, d, ytmp, regs, k3))
            for i in range(n):
                R[i] = R0[p, i] + (tau + h) * d[i]
            for c in range(4):
                ytmp[c] = y[c] + h * k3[c]
            e = max(e, _transport_rhs(ops, a0, a1, val, outs, n, R, d, ytmp, regs, k4))
            for c in range(4):
                y[c] = y[c] + h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
            if e >= 0 and err[p] < 0:
                err[p] = e
    return Y, err


def transport_np(ops, a0, a1, val, outs, R0, R1, nsteps, Y0):
    # all segments advance in lock-step, each with its own h; finished rows freeze
    R0 = np.asarray(R0, dtype=float)
    R1 = np.asarray(R1, dtype=float)
    nsteps = np.asarray(nsteps, dtype=np.int64)
    Y = np.array(Y0, dtype=float, copy=True)
    err = np.full(R0.shape[0], -1, dtype=np.int64)
    n = R0.shape[1]
    d = R1 - R0
    h = (1.0 / nsteps)[:, None]

    def rhs(R, yy, rows):
        w, e = eval_points_np(ops, a0, a1, val, outs, R)
        dd = d[rows]
        w11 = np.sum(w[:, 0:n] * dd, axis=1)
        w12 = np.sum(w[:, n:2 * n] * dd, axis=1)
        w21 = np.sum(w[:, 2 * n:3 * n] * dd, axis=1)
        w22 = np.sum(w[:, 3 * n:4 * n] * dd, axis=1)
        dy = np.empty_like(yy)
        dy[:, 0] = yy[:, 0] * w11 + yy[:, 1] * w12
        dy[:, 1] = yy[:, 0] * w21 + yy[:, 1] * w22
        dy[:, 2] = yy[:, 2] * w11 + yy[:, 3] * w12
        dy[:, 3] = yy[:, 2] * w21 + yy[:, 3] * w22
        return dy, e

    for s in range(int(nsteps.max(initial=0))):
        rows = np.flatnonzero(nsteps > s)
        r0, dr, hr, y = R0[rows], d[rows], h[rows], Y[rows]
        tau = s * hr
        k1, e1 = rhs(r0 + tau * dr, y, rows)
        k2, e2 = rhs(r0 + (tau + 0.5 * hr) * dr, y + 0.5 * hr * k1, rows)
        k3, e3 = rhs(r0 + (tau + 0.5 * hr) * dr, y + 0.5 * hr * k2, rows)
        k4, e4 = rhs(r0 + (tau + hr) * dr, y + hr * k3, rows)
        Y[rows] = y + hr / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        e = np.maximum(np.maximum(e1, e2), np.maximum(e3, e4))
        err[rows] = np.where((err[rows] < 0) & (e >= 0), e, err[rows])
    return Y, err


def transport(ops, a0, a1, val, outs, R0, R1, nsteps, Y0):
    """RK4-transport ``(A, B, M, N)`` along straight segments ``R0 -> R1``.

    The tape must output the 4n form coefficients ordered
    ``w11[0..n), w12[0..n), w21[0..n), w22[0..n)``.
    """
    R0 = np.ascontiguousarray(R0, dtype=float)
    R1 = np.ascontiguousarray(R1, dtype=float)
    nsteps = np.ascontiguousarray(nsteps, dtype=np.int64)
    Y0 = np.ascontiguousarray(Y0, dtype=float)
    if USE_NUMBA:
        return transport_nb(ops, a0, a1, val, outs, R0, R1, nsteps, Y0)
    return transport_np(ops, a0, a1, val, outs, R0, R1, nsteps, Y0)


# ---------------------------------------------------------------------------
# characteristic tracing through a gridded solution
# ---------------------------------------------------------------------------

@njit
def _bilinear(Rg, valid, t0, dt, x0, dx, t, x, out):
    nt = Rg.shape[1]
    nx = Rg.shape[2]
    ft = (t - t0) / dt
    fx = (x - x0) / dx
    if ft < -1e-12 or fx < -1e-12 or ft > nt - 1 + 1e-12 or fx > nx - 1 + 1e-12:
        return False
    m = int(np.floor(ft))
    l = int(np.floor(fx))
    if m > nt - 2:
        m = nt - 2
    if l > nx - 2:
        l = nx - 2
    if m < 0:
        m = 0
    if l < 0:
        l = 0
    if not (valid[m, l] and valid[m + 1, l] and valid[m, l + 1] and valid[m + 1, l + 1]):
        return False
    u = ft - m
    v = fx - l
    for c in range(Rg.shape[0]):
        out[c] = (
            (1.0 - u) * (1.0 - v) * Rg[c, m, l]
            + u * (1.0 - v) * Rg[c, m + 1, l]
            + (1.0 - u) * v * Rg[c, m, l + 1]
            + u * v * Rg[c, m + 1, l + 1]
        )
    return True


@njit
def _char_speed(ops, a0, a1, val, outs, Rg, valid, t0, dt, x0, dx, t, x, Rb, regs):
    if not _bilinear(Rg, valid, t0, dt, x0, dx, t, x, Rb):
        return np.nan
    e = _run_tape(ops, a0, a1, val, Rb, regs)
    if e >= 0:
        return np.nan
    return -regs[outs[0]]


@njit
def trace_nb(ops, a0, a1, val, outs, Rg, valid, t0, dt, x0, dx, seeds, t_start, h, nsteps):
    S = seeds.shape[0]
    out = np.full((S, nsteps + 1, 2), np.nan)
    count = np.zeros(S, dtype=np.int64)
    regs = np.empty(ops.shape[0])
    Rb = np.empty(Rg.shape[0])
    for p in range(S):
        t = t_start
        x = seeds[p]
        if np.isnan(_char_speed(ops, a0, a1, val, outs, Rg, valid, t0, dt, x0, dx, t, x, Rb, regs)):
            continue
        out[p, 0, 0] = t
        out[p, 0, 1] = x
        count[p] = 1
        for s in range(nsteps):
            k1 = _char_speed(ops, a0, a1, val, outs, Rg, valid, t0, dt, x0, dx, t, x, Rb, regs)
            k2 = _char_speed(ops, a0, a1, val, outs, Rg, valid, t0, dt, x0, dx,
                             t + 0.5 * h, x + 0.5 * h * k1, Rb, regs)
            k3 = _char_speed(ops, a0, a1, val, outs, Rg, valid, t0, dt, x0, dx,
                             t + 0.5 * h, x + 0.5 * h * k2, Rb, regs)
            k4 = _char_speed(ops, a0, a1, val, outs, Rg, valid, t0, dt, x0, dx,
                             t + h, x + h * k3, Rb, regs)
            xn = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if np.isnan(xn):
                break
            tn = t_start + (s + 1) * h
            if np.isnan(_char_speed(ops, a0, a1, val, outs, Rg, valid, t0, dt, x0, dx, tn, xn, Rb, regs)):
                break
            t = tn
            x = xn
            out[p, s + 1, 0] = t
            out[p, s + 1, 1] = x
            count[p] = s + 2
    return out, count


def _bilinear_np(Rg, valid, t0, dt, x0, dx, t, x):
    nt, nx = Rg.shape[1], Rg.shape[2]
    ft = (t - t0) / dt
    fx = (x - x0) / dx
    inside = (ft >= -1e-12) & (fx >= -1e-12) & (ft <= nt - 1 + 1e-12) & (fx <= nx - 1 + 1e-12)
    inside &= np.isfinite(ft) & np.isfinite(fx)
    m = np.clip(np.floor(np.where(inside, ft, 0.0)).astype(np.int64), 0, nt - 2)
    l = np.clip(np.floor(np.where(inside, fx, 0.0)).astype(np.int64), 0, nx - 2)
    ok = inside & valid[m, l] & valid[m + 1, l] & valid[m, l + 1] & valid[m + 1, l + 1]
    u = np.where(inside, ft, 0.0) - m
    v = np.where(inside, fx, 0.0) - l
    R = (
        (1.0 - u) * (1.0 - v) * Rg[:, m, l]
        + u * (1.0 - v) * Rg[:, m + 1, l]
        + (1.0 - u) * v * Rg[:, m, l + 1]
        + u * v * Rg[:, m + 1, l + 1]
    )
    return R.T, ok


def trace_np(ops, a0, a1, val, outs, Rg, valid, t0, dt, x0, dx, seeds, t_start, h, nsteps):
    seeds = np.asarray(seeds, dtype=float)
    S = seeds.shape[0]
    out = np.full((S, nsteps + 1, 2), np.nan)
    count = np.zeros(S, dtype=np.int64)

    def speed(t, x):
        R, ok = _bilinear_np(Rg, valid, t0, dt, x0, dx, np.full_like(x, t), x)
        v, e = eval_points_np(ops, a0, a1, val, outs, R)
        return np.where(ok & (e < 0), -v[:, 0], np.nan)

    t = t_start
    x = seeds.copy()
    alive = np.isfinite(speed(t, x))
    out[alive, 0, 0] = t
    out[alive, 0, 1] = x[alive]
    count[alive] = 1
    with np.errstate(invalid="ignore"):
        for s in range(nsteps):
            if not alive.any():
                break
            k1 = speed(t, x)
            k2 = speed(t + 0.5 * h, x + 0.5 * h * k1)
            k3 = speed(t + 0.5 * h, x + 0.5 * h * k2)
            k4 = speed(t + h, x + h * k3)
            xn = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            tn = t_start + (s + 1) * h
            alive &= np.isfinite(xn)
            alive &= np.isfinite(speed(tn, np.where(alive, xn, x)))
            x = np.where(alive, xn, x)
            t = tn
            out[alive, s + 1, 0] = t
            out[alive, s + 1, 1] = x[alive]
            count[alive] = s + 2
    return out, count


def trace(ops, a0, a1, val, outs, Rg, valid, t0, dt, x0, dx, seeds, t_start, h, nsteps):
    """RK4-integrate ``dx/dt = -lambda(R(t, x))`` from ``(t_start, seed)``.

    ``R`` is bilinearly interpolated from ``Rg`` (components, nt, nx); a curve
    stops at the first step touching an invalid cell or leaving the grid.
    Returns vertices (seeds, nsteps+1, 2) as (t, x) and per-seed vertex counts.
    """
    Rg = np.ascontiguousarray(Rg, dtype=float)
    valid = np.ascontiguousarray(valid, dtype=np.bool_)
    seeds = np.ascontiguousarray(seeds, dtype=float)
    args = (float(t0), float(dt), float(x0), float(dx), seeds, float(t_start), float(h), int(nsteps))
    if USE_NUMBA:
        return trace_nb(ops, a0, a1, val, outs, Rg, valid, *args)
    return trace_np(ops, a0, a1, val, outs, Rg, valid, *args)
