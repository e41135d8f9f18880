"""Compiled inner loops for the method-of-lines wave solver.

Geometry codes: 0 radial (even reflection at r = 0, Dirichlet at r = L),
1 line with Dirichlet ends, 2 periodic line. Nonlinearity codes: 0 |u|^p,
1 |u|^(p-1) u, 2 -|u|^p, 3 none. Damping codes: 0 power law, 1 piecewise
cubic with scipy PPoly coefficients.
"""
import math

import numpy as np
from numba import njit

OK_END = 0
CAP = 1
DEAD = 2
COLLAPSE = 3
MAX_STEPS = 4


@njit(cache=True)
def damping_at(t, bkind, b0, beta, bx, bc):
    if bkind == 0:
        return b0 * (1.0 + t) ** (-beta)
    k = np.searchsorted(bx, t, side="right") - 1
    if k < 0:
        k = 0
    if k > bx.size - 2:
        k = bx.size - 2
    s = t - bx[k]
    return ((bc[0, k] * s + bc[1, k]) * s + bc[2, k]) * s + bc[3, k]


@njit(cache=True)
def source(x, variant, p):
    if variant == 3:
        return 0.0
    a = abs(x)
    if p == 2.0:
        m = a * a
    else:
        m = a ** p
    if variant == 0:
        return m
    if variant == 1:
        return m if x >= 0 else -m
    return -m


@njit(cache=True)
def rhs(u, v, ku, kv, lo, hi, geom, n, dx, r_inv, bt, variant, p):
    """ku = v, kv = Laplacian(u) - b v + N(u) on indices lo..hi."""
    idx2 = 1.0 / (dx * dx)
    m = u.size
    for i in range(lo, hi + 1):
        if geom == 0:
            if i == 0:
                lap = 2.0 * n * (u[1] - u[0]) * idx2
            else:
                lap = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * idx2
                if n > 1:
                    lap += (n - 1) * r_inv[i] * (u[i + 1] - u[i - 1]) * (0.5 / dx)
        elif geom == 1:
            lap = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * idx2
        else:
            ip = i + 1 if i + 1 < m else 0
            lap = (u[ip] - 2.0 * u[i] + u[i - 1]) * idx2
        ku[i] = v[i]
        kv[i] = lap - bt * v[i] + source(u[i], variant, p)


@njit(cache=True)
def rk4_step(u, v, un, vn, ku, kv, uu, vv, au, av, lo, hi, geom, n, dx, r_inv,
             t, dt, variant, p, bkind, b0, beta, bx, bc):
    """One classical RK4 step from (u, v) into (un, vn); returns sup|un| (NaN if not finite)."""
    b1 = damping_at(t, bkind, b0, beta, bx, bc)
    bh = damping_at(t + 0.5 * dt, bkind, b0, beta, bx, bc)
    b4 = damping_at(t + dt, bkind, b0, beta, bx, bc)
    rhs(u, v, ku, kv, lo, hi, geom, n, dx, r_inv, b1, variant, p)
    for i in range(lo, hi + 1):
        au[i] = ku[i]
        av[i] = kv[i]
        uu[i] = u[i] + 0.5 * dt * ku[i]
        vv[i] = v[i] + 0.5 * dt * kv[i]
    rhs(uu, vv, ku, kv, lo, hi, geom, n, dx, r_inv, bh, variant, p)
    for i in range(lo, hi + 1):
        au[i] += 2.0 * ku[i]
        av[i] += 2.0 * kv[i]
        uu[i] = u[i] + 0.5 * dt * ku[i]
        vv[i] = v[i] + 0.5 * dt * kv[i]
    rhs(uu, vv, ku, kv, lo, hi, geom, n, dx, r_inv, bh, variant, p)
    for i in range(lo, hi + 1):
        au[i] += 2.0 * ku[i]
        av[i] += 2.0 * kv[i]
        uu[i] = u[i] + dt * ku[i]
        vv[i] = v[i] + dt * kv[i]
    rhs(uu, vv, ku, kv, lo, hi, geom, n, dx, r_inv, b4, variant, p)
    sup = 0.0
    c = dt / 6.0
    for i in range(lo, hi + 1):
        un[i] = u[i] + c * (au[i] + ku[i])
        vn[i] = v[i] + c * (av[i] + kv[i])
        a = abs(un[i])
        if not (a <= 1e308) or not (abs(vn[i]) <= 1e308):
            return math.nan
        if a > sup:
            sup = a
    return sup


@njit(cache=True)
def advance(u, v, un, vn, ku, kv, uu, vv, au, av, r_inv, window, geom, n, dx,
            t, t_end, dt, dt_base, variant, p, bkind, b0, beta, bx, bc,
            cap, growth_max, dt_min, stab, max_steps, win_tol,
            hist, hist_n, hist_thresh):
    """Adaptive RK4 integration from t towards t_end.

    The step is min(dt, dt_base, stab / b(t)) and is halved whenever sup|u|
    would grow by more than ``growth_max`` in one step, then regrown by
    doubling once growth is mild. ``window`` = [lo, hi] is the active index
    range; it widens whenever non-negligible values approach its edges.
    Accepted steps with sup|u| >= hist_thresh are appended to ``hist`` as
    rows (t, sup|u|, u_t at the argmax).

    Returns (t, dt, status, steps, hist_n, t_prev).
    """
    m = u.size
    last = m - 1 if geom == 2 else m - 2
    first = 0 if geom != 1 else 1
    lo = window[0]
    hi = window[1]
    sup = 0.0
    for i in range(lo, hi + 1):
        if abs(u[i]) > sup:
            sup = abs(u[i])
    steps = 0
    t_prev = t
    while t < t_end:
        if t_end - t <= dt_min:
            # rounding sliver left by accumulated steps
            t = t_end
            break
        if steps >= max_steps:
            window[0] = lo
            window[1] = hi
            return t, dt, MAX_STEPS, steps, hist_n, t_prev
        bt = damping_at(t, bkind, b0, beta, bx, bc)
        h = min(dt, dt_base)
        if bt > 0 and stab / bt < h:
            h = stab / bt
        final = False
        if t + h >= t_end:
            h = t_end - t
            final = True
        if h < dt_min:
            window[0] = lo
            window[1] = hi
            return t, dt, COLLAPSE, steps, hist_n, t_prev
        new_sup = rk4_step(u, v, un, vn, ku, kv, uu, vv, au, av, lo, hi, geom, n, dx,
                           r_inv, t, h, variant, p, bkind, b0, beta, bx, bc)
        if new_sup != new_sup:
            if h > 64 * dt_min:
                dt = 0.5 * h
                continue
            window[0] = lo
            window[1] = hi
            return t, dt, DEAD, steps, hist_n, t_prev
        if sup > 0 and new_sup > growth_max * sup and new_sup > 1e-300:
            dt = 0.5 * h
            continue
        for i in range(lo, hi + 1):
            u[i] = un[i]
            v[i] = vn[i]
        t_prev = t
        t = t_end if final else t + h
        steps += 1
        if sup > 0 and new_sup < (1.0 + 0.25 * (growth_max - 1.0)) * sup and dt < dt_base:
            dt = min(2.0 * dt, dt_base)
        sup = new_sup
        # widen the active window when non-negligible values reach its edges
        thr = win_tol * sup
        if geom != 2:
            if hi < last:
                grow = False
                for i in range(max(lo, hi - 16), hi + 1):
                    if abs(u[i]) + abs(v[i]) > thr:
                        grow = True
                        break
                if grow:
                    hi = min(hi + 32, last)
            if geom == 1 and lo > first:
                grow = False
                for i in range(lo, min(hi, lo + 16) + 1):
                    if abs(u[i]) + abs(v[i]) > thr:
                        grow = True
                        break
                if grow:
                    lo = max(lo - 32, first)
        if sup >= hist_thresh and hist_n < hist.shape[0]:
            im = lo
            best = 0.0
            for i in range(lo, hi + 1):
                if abs(u[i]) > best:
                    best = abs(u[i])
                    im = i
            hist[hist_n, 0] = t
            hist[hist_n, 1] = sup
            hist[hist_n, 2] = v[im] if u[im] >= 0 else -v[im]
            hist_n += 1
        if sup >= cap:
            window[0] = lo
            window[1] = hi
            return t, dt, CAP, steps, hist_n, t_prev
    window[0] = lo
    window[1] = hi
    return t, dt, OK_END, steps, hist_n, t_prev
