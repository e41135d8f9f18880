"""Blow-up reports and power-law extrapolation of singular times.

Near a singular time T a blowing-up quantity behaves like c (T - t)^(-q).
Taking logs gives ``log y = log c - q log(T - t)``, which is linear in
``log(T - t)`` for the right T. We sweep T with a bounded scalar search.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict
import math

import numpy as np
from scipy import optimize

THRESHOLD = "threshold"
STEP_COLLAPSE = "step_collapse"
HORIZON = "horizon"
DEAD = "dead"


@dataclass(frozen=True)
class BlowupReport:
    """Numerical lifespan of a single run.

    ``t_estimate`` and ``rate_exponent_fit`` are NaN unless ``reason`` is
    ``"threshold"``; for other reasons ``t_estimate`` is the last time reached.
    """

    t_last_finite: float
    t_threshold: float
    t_estimate: float
    uncertainty: float
    rate_exponent_fit: float
    reason: str
    base_step: float = math.nan
    diagnostic: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PowerFit:
    T_anchored: float
    T_free: float
    q_free: float
    T_tail: float

    @property
    def spread(self) -> float:
        vals = [self.T_free, self.T_tail]
        return max(abs(v - self.T_anchored) for v in vals if math.isfinite(v)) if any(
            math.isfinite(v) for v in vals) else math.inf


def _sse_anchored(T, t, logy, q):
    z = logy + q * np.log(T - t)
    return float(np.sum((z - z.mean()) ** 2))


def _sse_free(T, t, logy):
    X = -np.log(T - t)
    Xc = X - X.mean()
    yc = logy - logy.mean()
    sxx = float(Xc @ Xc)
    if sxx == 0:
        return float(yc @ yc), math.nan
    slope = float(Xc @ yc) / sxx
    r = yc - slope * Xc
    return float(r @ r), slope


def _search(obj, t_last, gap_guess):
    """Minimize obj(T) over T = t_last + exp(g), scanning g then refining."""
    g0 = math.log(max(gap_guess, 1e-300))
    grid = np.linspace(g0 - 12.0, g0 + 6.0, 181)

    def safe(g):
        T = t_last + math.exp(g)
        # gaps below the resolution of t_last collapse onto a sample
        return obj(T) if T > t_last else math.inf

    vals = np.array([safe(g) for g in grid])
    i = int(np.nanargmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(safe, bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-10})
    g = res.x if res.fun <= vals[i] else grid[i]
    return t_last + math.exp(g)


def fit_power_blowup(t, y, q, t_tail=None, y_tail=None, dy_tail=None) -> PowerFit:
    """Fit y ~ c (T - t)^(-q) on samples that approach a singularity.

    Parameters
    ----------
    t, y : array_like
        Increasing times and positive values (typically the last decade).
    q : float
        Anchoring exponent, 2/(p-1) for the equations studied here.
    t_tail, y_tail, dy_tail : float, optional
        Point and derivative used for the local estimate T = t + q y / y'.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 3:
        raise ValueError("a power-law fit needs at least three samples")
    logy = np.log(y)
    if t_tail is None:
        t_tail, y_tail = t[-1], y[-1]
        dy_tail = (y[-1] - y[-2]) / (t[-1] - t[-2])
    T_tail = t_tail + q * y_tail / dy_tail if dy_tail > 0 else math.inf
    t_last = float(t[-1])
    gap = T_tail - t_last if math.isfinite(T_tail) and T_tail > t_last else (t[-1] - t[0])
    # guard against a non-positive guess from a coarse derivative
    gap = max(gap, 1e-3 * (t[-1] - t[-2]) if t.size > 1 else 1e-12)
    T_a = _search(lambda T: _sse_anchored(T, t, logy, q), t_last, gap)
    T_f = _search(lambda T: _sse_free(T, t, logy)[0], t_last, T_a - t_last)
    q_f = _sse_free(T_f, t, logy)[1]
    return PowerFit(T_anchored=T_a, T_free=T_f, q_free=q_f, T_tail=T_tail)


def last_decade(t, y, factor: float = 10.0):
    """Restrict samples to the final growth decade y >= y[-1]/factor."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y >= y[-1] / factor
    # keep only the contiguous final run
    idx = np.nonzero(~keep)[0]
    start = idx[-1] + 1 if idx.size else 0
    return t[start:], y[start:]


def estimate_from_fit(fit: PowerFit, t_last_finite: float, t_threshold: float,
                      base_step: float) -> tuple[float, float]:
    """Clamp the anchored estimate into [t_last_finite, t_threshold + base_step].

    Returns (t_estimate, uncertainty); clamping adds the moved distance to
    the uncertainty.
    """
    est = fit.T_anchored
    unc = fit.spread
    lo, hi = t_last_finite, t_threshold + base_step
    clamped = min(max(est, lo), hi)
    unc = max(unc, abs(clamped - est))
    if not math.isfinite(unc):
        unc = hi - lo
    return clamped, unc
