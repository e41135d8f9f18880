"""Blow-up of the damped ODE f'' + b(t) f' = gamma f^p and its explicit subsolution.

The subsolution is

    g(t) = eps0 (1 - mu eps0^(p-1) B(t))^(-2/(p-1)),

singular at T1 = B^{-1}(1 / (mu eps0^(p-1))). Its residual is evaluated in
the normalized form (g'' + b g') / g^p, which is a polynomial in
X = 1 - mu eps0^(p-1) B(t) and never overflows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.integrate import solve_ivp

from .cutoff import compute_mu
from .damping import BProfile, DampingConstants, DampingSpec, exact_constants
from .errors import AlignmentError, DomainError, PastSingularityError, PreconditionError
from .extrapolation import (
    HORIZON,
    STEP_COLLAPSE,
    THRESHOLD,
    BlowupReport,
    estimate_from_fit,
    fit_power_blowup,
)


@dataclass(frozen=True)
class OdeProblem:
    damping: DampingSpec
    gamma: float
    p: float
    f0: float
    f1: float
    A0: float | None = None

    def __post_init__(self):
        if not self.p > 1:
            raise DomainError("p must exceed 1")
        if self.gamma < 0:
            raise DomainError("gamma must be nonnegative")


@dataclass(frozen=True)
class OdeControls:
    cap: float = 1e12
    rtol: float = 1e-10
    atol: float = 1e-12
    first_step: float | None = None
    method: str = "auto"
    n_fit: int = 64
    stiff_steps: float = 2e4
    error_probe: bool = True


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    f: np.ndarray
    f_prime: np.ndarray
    dense: object = field(default=None, repr=False)

    def resample(self, t) -> "Trajectory":
        t = np.asarray(t, dtype=float)
        if self.dense is None:
            raise AlignmentError("trajectory has no dense output to resample")
        if t.size and (t[0] < self.t[0] or t[-1] > self.t[-1]):
            raise AlignmentError("resampling outside the integrated interval")
        y = self.dense(t)
        return Trajectory(t=t, f=y[0], f_prime=y[1], dense=self.dense)


def _check_eps0(eps0):
    if not (0 < eps0 <= 1):
        raise DomainError(f"eps0 must lie in (0, 1], got {eps0}")


def singular_time(eps0: float, mu: float, p: float, profile: BProfile) -> float:
    """T1 = B^{-1}(mu^-1 eps0^(1-p)); inf if it overflows."""
    with np.errstate(over="ignore"):
        return float(profile.B_inverse((1.0 / mu) * eps0 ** (1.0 - p)))


def _X(eps0, mu, p, profile, t):
    return 1.0 - mu * eps0 ** (p - 1.0) * np.asarray(profile.B(t), dtype=float)


def subsolution_g(eps0: float, mu: float, p: float, profile: BProfile, t):
    """Closed-form subsolution; raises past the singular time."""
    _check_eps0(eps0)
    X = _X(eps0, mu, p, profile, t)
    if np.any(X <= 0):
        raise PastSingularityError("t at or beyond the singular time T1")
    out = eps0 * X ** (-2.0 / (p - 1.0))
    return float(out) if np.ndim(out) == 0 else out


def subsolution_derivative(eps0, mu, p, profile: BProfile, t):
    X = _X(eps0, mu, p, profile, t)
    if np.any(X <= 0):
        raise PastSingularityError("t at or beyond the singular time T1")
    b = np.asarray(profile.spec.b(t), dtype=float)
    return 2.0 * mu / (p - 1.0) * eps0**p * X ** (-(p + 1.0) / (p - 1.0)) / b


def subsolution_trajectory(eps0, mu, p, profile: BProfile, t) -> Trajectory:
    t = np.asarray(t, dtype=float)
    return Trajectory(t=t, f=np.asarray(subsolution_g(eps0, mu, p, profile, t)),
                      f_prime=np.asarray(subsolution_derivative(eps0, mu, p, profile, t)))


def subsolution_ratio(eps0, mu, p, profile: BProfile, t):
    """(g'' + b g') / g^p evaluated without forming g."""
    t = np.asarray(t, dtype=float)
    X = _X(eps0, mu, p, profile, t)
    if np.any(X <= 0):
        raise PastSingularityError("t at or beyond the singular time T1")
    b = np.asarray(profile.spec.b(t), dtype=float)
    bp = np.asarray(profile.spec.b_prime(t), dtype=float)
    # b**2 may overflow for growing damping; the terms then vanish correctly
    with np.errstate(over="ignore"):
        return (2.0 * mu / (p - 1.0) * X * (1.0 - bp / b**2)
                + 2.0 * (p + 1.0) / (p - 1.0) ** 2 * mu**2 * eps0 ** (p - 1.0) / b**2)


@dataclass(frozen=True)
class SubsolutionReport:
    max_residual: float
    max_relative_residual: float
    g_prime_0: float
    derivative_ok: bool
    holds: bool


def verify_subsolution(eps0: float, mu: float, p: float, profile: BProfile, grid,
                       A0: float | None = None, slack: float = 1e-12) -> SubsolutionReport:
    """Check g'' + b g' <= g^p on ``grid`` and g'(0) <= A0 eps0.

    ``max_relative_residual`` is max of (g'' + b g' - g^p) / g^p. The absolute
    ``max_residual`` is reported where g^p is finite in double precision.
    """
    _check_eps0(eps0)
    grid = np.asarray(grid, dtype=float)
    rel = subsolution_ratio(eps0, mu, p, profile, grid) - 1.0
    with np.errstate(over="ignore"):
        gp = np.asarray(subsolution_g(eps0, mu, p, profile, grid)) ** p
    finite = np.isfinite(gp)
    max_res = float(np.max(rel[finite] * gp[finite])) if finite.any() else math.nan
    g1 = 2.0 * mu / (p - 1.0) / float(profile.spec.b(0.0)) * eps0**p
    dok = True if A0 is None else bool(g1 <= A0 * eps0 * (1 + 1e-14))
    max_rel = float(np.max(rel))
    return SubsolutionReport(max_residual=max_res, max_relative_residual=max_rel,
                             g_prime_0=g1, derivative_ok=dok,
                             holds=bool(max_rel <= slack and dok))


def _constants_for(profile: BProfile, constants: DampingConstants | None):
    if constants is not None:
        return constants
    return exact_constants(profile.spec)


def lifespan_bound_T1(eps0: float, A0: float, gamma: float, p: float, profile: BProfile,
                      constants: DampingConstants | None = None, mu: float | None = None) -> float:
    """Upper bound B^{-1}(mu(A0)^-1 delta0^(1-p)), delta0 = gamma^(1/(p-1)) eps0."""
    if not A0 > 0:
        raise DomainError("A0 must be positive")
    delta0 = gamma ** (1.0 / (p - 1.0)) * eps0
    if not (0 < delta0 <= 1):
        raise PreconditionError(f"delta0 = {delta0:.6g} must lie in (0, 1]")
    if mu is None:
        c = _constants_for(profile, constants)
        mu = compute_mu(p, c, c.beta, A0)
    return singular_time(delta0, mu, p, profile)


def _pick_method(problem: OdeProblem, horizon: float, controls: OdeControls) -> str:
    if controls.method != "auto":
        return controls.method
    # explicit RK needs roughly int b dt / 3 steps for stability alone
    t = np.linspace(0.0, horizon, 257)
    b = np.asarray(problem.damping.b(t), dtype=float)
    work = float(np.sum(0.5 * (b[1:] + b[:-1]) * np.diff(t))) / 3.0
    return "RK45" if work <= controls.stiff_steps else "LSODA"


def integrate_blowup(problem: OdeProblem, horizon: float, controls: OdeControls | None = None):
    """Integrate f'' = -b f' + gamma |f|^p until f crosses the cap or the horizon.

    The blow-up time is the anchored power-law fit over the last decade of
    growth. Its uncertainty is the larger of the fit spread (anchored vs
    free vs local estimate) and, when ``controls.error_probe`` is set, the
    change in the estimate under a 10x looser tolerance.

    Returns
    -------
    report : BlowupReport
    trajectory : Trajectory
        Solver nodes (with dense output) up to the stopping time.
    """
    controls = controls or OdeControls()
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    spec, gamma, p, cap = problem.damping, problem.gamma, problem.p, controls.cap

    def rhs(t, y):
        return [y[1], -float(spec.b(t)) * y[1] + gamma * abs(y[0]) ** p]

    def hit_cap(t, y):
        return y[0] - cap
    hit_cap.terminal = True
    hit_cap.direction = 1

    def hit_decade(t, y):
        return y[0] - cap / 10.0
    hit_decade.direction = 1

    method = _pick_method(problem, horizon, controls)
    kwargs = {}
    if controls.first_step is not None:
        kwargs["first_step"] = controls.first_step
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = solve_ivp(rhs, (0.0, horizon), [problem.f0, problem.f1], method=method,
                        rtol=controls.rtol, atol=controls.atol, events=[hit_cap, hit_decade],
                        dense_output=True, **kwargs)
    traj = Trajectory(t=sol.t, f=sol.y[0], f_prime=sol.y[1], dense=sol.sol)
    base = controls.first_step if controls.first_step else (
        float(sol.t[1] - sol.t[0]) if sol.t.size > 1 else horizon)

    if sol.status == 1 and sol.t_events[0].size:
        t_thr = float(sol.t_events[0][0])
        t_last = float(sol.t[-2]) if sol.t.size > 1 else 0.0
        t_dec = float(sol.t_events[1][0]) if sol.t_events[1].size else float(sol.t[0])
        ts = np.linspace(t_dec, t_thr, controls.n_fit)
        ys = sol.sol(ts)
        q = 2.0 / (p - 1.0)
        fit = fit_power_blowup(ts, ys[0], q, t_tail=t_thr, y_tail=float(ys[0][-1]),
                               dy_tail=float(ys[1][-1]))
        est, unc = estimate_from_fit(fit, t_last, t_thr, base)
        if controls.error_probe:
            loose = OdeControls(cap=cap, rtol=10 * controls.rtol, atol=10 * controls.atol,
                                first_step=controls.first_step, method=method,
                                n_fit=controls.n_fit, error_probe=False)
            probe, _ = integrate_blowup(problem, horizon, loose)
            if probe.reason == THRESHOLD:
                unc = max(unc, abs(probe.t_estimate - est))
        report = BlowupReport(t_last_finite=t_last, t_threshold=t_thr, t_estimate=est,
                              uncertainty=unc, rate_exponent_fit=fit.q_free, reason=THRESHOLD,
                              base_step=base, diagnostic=method)
    elif sol.status == 0:
        t_end = float(sol.t[-1])
        report = BlowupReport(t_last_finite=t_end, t_threshold=t_end, t_estimate=math.nan,
                              uncertainty=math.nan, rate_exponent_fit=math.nan, reason=HORIZON,
                              base_step=base, diagnostic=method)
    else:
        t_end = float(sol.t[-1])
        report = BlowupReport(t_last_finite=t_end, t_threshold=t_end, t_estimate=math.nan,
                              uncertainty=math.nan, rate_exponent_fit=math.nan,
                              reason=STEP_COLLAPSE, base_step=base,
                              diagnostic=f"{method}: {sol.message}")
    return report, traj


def comparison_check(traj_k: Trajectory, traj_h: Trajectory, rtol: float = 1e-12) -> bool:
    """Numerical form of the comparison principle's conclusion k' > h'.

    Every node must satisfy k' - h' > -rtol (1 + |k'|), and the difference
    must exceed that tolerance at some node, so that identical derivatives
    (no strict separation anywhere) are rejected.
    """
    if traj_k.t.shape != traj_h.t.shape or not np.array_equal(traj_k.t, traj_h.t):
        raise AlignmentError("trajectories are not on a common grid")
    d = traj_k.f_prime - traj_h.f_prime
    tol = rtol * (1.0 + np.abs(traj_k.f_prime))
    return bool(np.all(d > -tol) and np.any(d > tol))


@dataclass(frozen=True)
class EnvelopeCheck:
    holds: bool
    min_relative_margin: float
    n_nodes: int


def lower_envelope_check(traj: Trajectory, eps0: float, A0: float, gamma: float, p: float,
                         profile: BProfile, constants: DampingConstants | None = None,
                         rtol: float = 1e-8) -> EnvelopeCheck:
    """Check f(t) >= gamma^(-1/(p-1)) g(t) at every trajectory node before T1.

    ``g`` is the explicit subsolution started from delta0 = gamma^(1/(p-1)) eps0,
    which w = gamma^(1/(p-1)) f dominates by comparison. Nodes where the
    subsolution overflows are skipped.
    """
    c = _constants_for(profile, constants)
    mu = compute_mu(p, c, c.beta, A0)
    scale = gamma ** (1.0 / (p - 1.0))
    delta0 = scale * eps0
    T1 = singular_time(delta0, mu, p, profile)
    t = traj.t[traj.t < T1]
    f = traj.f[: t.size]
    with np.errstate(over="ignore"):
        sub = np.asarray(subsolution_g(delta0, mu, p, profile, t), dtype=float) / scale
    ok = np.isfinite(sub) & np.isfinite(f)
    if not ok.any():
        return EnvelopeCheck(True, math.inf, 0)
    rel = (f[ok] - sub[ok]) / np.maximum(np.abs(sub[ok]), 1e-300)
    m = float(np.min(rel))
    return EnvelopeCheck(bool(m >= -rtol), m, int(ok.sum()))
