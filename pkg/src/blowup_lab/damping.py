"""Time-dependent damping coefficient b(t) and the scaling function B(t).

Two families are supported:

* ``power_law``: b(t) = b0 (1 + t)^(-beta) with closed-form B and B^{-1}.
* ``tabulated``: cubic Hermite interpolation of sampled (t, b, b') triples,
  with B evaluated by quadrature of 1/b and inverted by bracketed root finding.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import integrate, interpolate, optimize

from .errors import (
    ConfigurationError,
    DomainError,
    HypothesisViolation,
    RangeError,
)

POWER_LAW = "power_law"
TABULATED = "tabulated"

# Gauss-Legendre rule used for partial intervals of tabulated data.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _as_time(t, name="t"):
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError(f"{name} must be nonnegative, got {t!r}")
    return arr


def _unwrap(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


@dataclass(frozen=True, eq=False)
class DampingSpec:
    """Parametrization of the damping coefficient.

    Use :meth:`power_law` or :meth:`tabulated` rather than the raw constructor.

    Attributes
    ----------
    kind : str
        ``"power_law"`` or ``"tabulated"``.
    b0, beta : float
        Amplitude and decay exponent. For tabulated data ``beta`` is the
        exponent the table is declared to follow; it selects the normalizing
        powers used by :func:`check_hypotheses` and :func:`compute_mu`.
    t_samples, b_samples, b_prime_samples : ndarray or None
        Tabulated data. ``b_prime_samples`` may be ``None``, in which case
        b' is unavailable.
    """

    kind: str
    b0: float = 1.0
    beta: float = 0.0
    t_samples: np.ndarray | None = None
    b_samples: np.ndarray | None = None
    b_prime_samples: np.ndarray | None = None
    _interp: object = field(default=None, repr=False, compare=False)

    @classmethod
    def power_law(cls, b0: float = 1.0, beta: float = 0.0) -> "DampingSpec":
        b0 = float(b0)
        beta = float(beta)
        if not (b0 > 0 and math.isfinite(b0)):
            raise DomainError(f"b0 must be positive and finite, got {b0}")
        if not (-1.0 <= beta <= 1.0):
            raise DomainError(f"beta must lie in [-1, 1], got {beta}")
        return cls(kind=POWER_LAW, b0=b0, beta=beta)

    @classmethod
    def tabulated(cls, t, b, b_prime=None, beta: float = 0.0) -> "DampingSpec":
        """Build a tabulated spec.

        Construction only checks the shape of the data; positivity of b is
        checked by :func:`check_hypotheses`.
        """
        t = np.asarray(t, dtype=float)
        b = np.asarray(b, dtype=float)
        if t.ndim != 1 or t.size < 2 or b.shape != t.shape:
            raise ConfigurationError("tabulated damping needs matching 1-D t and b arrays")
        if t[0] != 0.0:
            raise ConfigurationError("tabulated damping must start at t = 0")
        if np.any(np.diff(t) <= 0):
            raise ConfigurationError("tabulated sample times must be strictly increasing")
        if b_prime is not None:
            b_prime = np.asarray(b_prime, dtype=float)
            if b_prime.shape != t.shape:
                raise ConfigurationError("b_prime must match t in shape")
            interp = interpolate.CubicHermiteSpline(t, b, b_prime, extrapolate=False)
        else:
            interp = interpolate.CubicSpline(t, b, extrapolate=False)
        return cls(kind=TABULATED, b0=float(b[0]), beta=float(beta), t_samples=t,
                   b_samples=b, b_prime_samples=b_prime, _interp=interp)

    @classmethod
    def from_dict(cls, d: dict) -> "DampingSpec":
        kind = d.get("kind")
        if kind == POWER_LAW:
            return cls.power_law(d.get("b0", 1.0), d.get("beta", 0.0))
        if kind == TABULATED:
            return cls.tabulated(d["t"], d["b"], d.get("b_prime"), d.get("beta", 0.0))
        raise ConfigurationError(f"unknown damping kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == POWER_LAW:
            return {"kind": POWER_LAW, "b0": self.b0, "beta": self.beta}
        out = {"kind": TABULATED, "t": self.t_samples.tolist(), "b": self.b_samples.tolist(),
               "beta": self.beta}
        if self.b_prime_samples is not None:
            out["b_prime"] = self.b_prime_samples.tolist()
        return out

    @property
    def t_max(self) -> float:
        """Largest admissible time (``inf`` for power laws)."""
        return math.inf if self.kind == POWER_LAW else float(self.t_samples[-1])

    def _check_range(self, t):
        if self.kind == TABULATED and np.any(t > self.t_samples[-1]):
            raise RangeError(f"t beyond tabulated range [0, {self.t_samples[-1]}]")

    def b(self, t):
        t = _as_time(t)
        if self.kind == POWER_LAW:
            return _unwrap(self.b0 * (1.0 + t) ** (-self.beta))
        self._check_range(t)
        return _unwrap(self._interp(t))

    def b_prime(self, t):
        t = _as_time(t)
        if self.kind == POWER_LAW:
            return _unwrap(-self.beta * self.b0 * (1.0 + t) ** (-self.beta - 1.0))
        if self.b_prime_samples is None:
            raise ConfigurationError("tabulated damping carries no b' samples")
        self._check_range(t)
        return _unwrap(self._interp(t, 1))


def eval_b(spec: DampingSpec, t):
    """Return b(t). Raises :class:`DomainError` for negative t."""
    return spec.b(t)


def eval_b_prime(spec: DampingSpec, t):
    """Return b'(t). Tabulated specs need derivative samples."""
    return spec.b_prime(t)


class BProfile:
    """The scaling function B(t) = int_0^t ds / b(s) and its inverse.

    Parameters
    ----------
    spec : DampingSpec
        Parent damping coefficient.
    """

    def __init__(self, spec: DampingSpec):
        self.spec = spec
        if spec.kind == TABULATED:
            t = spec.t_samples
            pieces = [
                integrate.quad(lambda s: 1.0 / spec._interp(s), t[k], t[k + 1],
                               epsabs=0.0, epsrel=1e-13, limit=200)[0]
                for k in range(t.size - 1)
            ]
            self._cum = np.concatenate([[0.0], np.cumsum(pieces)])

    @property
    def tau_max(self) -> float:
        if self.spec.kind == POWER_LAW:
            return math.inf
        return float(self._cum[-1])

    # power-law closed forms, written with log1p/expm1 for accuracy near 0
    def _B_power(self, t):
        b0, k = self.spec.b0, 1.0 + self.spec.beta
        if k == 0.0:
            return np.log1p(t) / b0
        return np.expm1(k * np.log1p(t)) / (b0 * k)

    def _Binv_power(self, tau):
        b0, k = self.spec.b0, 1.0 + self.spec.beta
        # beyond double range the inverse is reported as inf
        with np.errstate(over="ignore"):
            if k == 0.0:
                return np.expm1(b0 * tau)
            return np.expm1(np.log1p(b0 * k * tau) / k)

    def _B_tab(self, t):
        spec = self.spec
        nodes = spec.t_samples
        k = np.clip(np.searchsorted(nodes, t, side="right") - 1, 0, nodes.size - 2)
        left = nodes[k]
        half = 0.5 * (t - left)
        # 1/b is smooth on each interval, so a fixed high-order rule suffices
        pts = left[..., None] + half[..., None] * (_GL_X + 1.0)
        partial = half * np.sum(_GL_W / spec._interp(pts), axis=-1)
        return self._cum[k] + partial

    def B(self, t):
        t = _as_time(t)
        if self.spec.kind == POWER_LAW:
            return _unwrap(self._B_power(t))
        self.spec._check_range(t)
        return _unwrap(self._B_tab(np.atleast_1d(t)).reshape(t.shape))

    def log_B_inverse(self, tau):
        """log B^{-1}(tau), finite where B^{-1} itself overflows (beta = -1)."""
        tau = _as_time(tau, "tau")
        if self.spec.kind == POWER_LAW and self.spec.beta == -1.0:
            x = self.spec.b0 * tau
            with np.errstate(divide="ignore"):
                return _unwrap(x + np.log(-np.expm1(-x)))
        with np.errstate(divide="ignore"):
            return _unwrap(np.log(self.B_inverse(tau)))

    def B_inverse(self, tau):
        tau = _as_time(tau, "tau")
        if self.spec.kind == POWER_LAW:
            return _unwrap(self._Binv_power(tau))
        if np.any(tau > self._cum[-1]):
            raise RangeError(f"tau beyond tabulated range [0, {self._cum[-1]}]")
        nodes = self.spec.t_samples
        out = np.empty(tau.shape)
        for idx, target in np.ndenumerate(tau):
            k = int(np.clip(np.searchsorted(self._cum, target, side="right") - 1,
                            0, nodes.size - 2))
            if target == self._cum[k]:
                out[idx] = nodes[k]
                continue
            out[idx] = optimize.brentq(
                lambda s: self._B_tab(np.array([s]))[0] - target,
                nodes[k], nodes[k + 1], xtol=1e-300, rtol=4 * np.finfo(float).eps,
            )
        return _unwrap(out)


def eval_B(profile: BProfile, t):
    return profile.B(t)


def eval_B_inverse(profile: BProfile, tau):
    return profile.B_inverse(tau)


@dataclass(frozen=True)
class DampingConstants:
    """Constants in the two-sided bounds on b, b', B and B^{-1}.

    ``b1 (1+t)^-beta <= b <= b2 (1+t)^-beta``, ``|b'| <= b3 b / (1+t)``;
    ``B1 (1+t)^(1+beta) <= B(t) <= B2 (1+t)^(1+beta)`` (log(2+t) when beta = -1);
    ``(1+tau)^(1/(1+beta)) B3 <= B^{-1}(tau) <= B4 (1+tau)^(1/(1+beta))``
    (exp(B3 (1+tau)) and exp(B4 (1+tau)) when beta = -1).

    ``ranges`` records the interval on which each group was certified.
    """

    beta: float
    b_at_0: float
    b1: float
    b2: float
    b3: float
    B1: float
    B2: float
    B3: float
    B4: float
    all_hold: bool = True
    ranges: dict = field(default_factory=dict)


def _binv_ratio(b0: float, beta: float):
    """tau -> B^{-1}(tau) normalized as in the (b_inv) bounds, for a power law."""
    if beta == -1.0:
        def ratio(tau):
            # log(expm1(x)) = x + log(-expm1(-x)) avoids overflow for large x
            x = b0 * tau
            return (x + math.log(-math.expm1(-x))) / (1.0 + tau)
        return ratio, b0
    c, k = b0 * (1.0 + beta), 1.0 / (1.0 + beta)

    def ratio(tau):
        # ((1 + c tau)^k - 1) / (1 + tau)^k in log form; k is large near beta = -1
        lead = k * (math.log1p(c * tau) - math.log1p(tau))
        tail = -k * math.log1p(tau)
        return math.exp(min(lead, 700.0)) - math.exp(tail)
    return ratio, math.exp(min(k * math.log(c), 700.0))


def _extremum_power(b0: float, beta: float, tau_lo: float, kind: str) -> float:
    """sup (kind="max") or inf (kind="min") of the normalized B^{-1} over [tau_lo, inf).

    A dense log grid locates the extremum, a bounded scalar search refines
    it, and the tau -> inf limit is included since it may not be attained.
    """
    ratio, limit = _binv_ratio(b0, beta)
    sign = -1.0 if kind == "max" else 1.0
    lo = math.log(tau_lo) if tau_lo > 0 else -20.0
    grid = np.linspace(lo, 40.0, 1201)
    vals = np.array([ratio(math.exp(v)) for v in grid])
    i = int(np.argmin(sign * vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(lambda v: sign * ratio(math.exp(v)), bounds=(a, b),
                                   method="bounded", options={"xatol": 1e-12})
    cands = [vals[i], sign * res.fun, limit]
    if tau_lo > 0:
        cands.append(ratio(tau_lo))
    return float(max(cands) if kind == "max" else min(cands))


def exact_constants(spec: DampingSpec) -> DampingConstants:
    """Constants of a power law (b1 = b2 = b0, b3 = |beta| exactly).

    B1, B2 are the extreme values of B(t)/(1+t)^(1+beta) over t >= 1 and
    t >= 0 respectively, in closed form. B3, B4 are the extreme values of the
    normalized B^{-1} over tau >= 1 and tau >= 0, found numerically including
    the tau -> inf limit. Only ``B4`` enters :func:`compute_mu`.
    """
    if spec.kind != POWER_LAW:
        raise ConfigurationError("exact constants are only available for power laws")
    b0, beta = spec.b0, spec.beta
    if beta == -1.0:
        # log(1+t)/(b0 log(2+t)) increases to 1/b0
        B1 = math.log(2.0) / (b0 * math.log(3.0))
        B2 = 1.0 / b0
    else:
        k = 1.0 + beta
        # (1 - (1+t)^-k)/(b0 k) increases in t to 1/(b0 k)
        B1 = -math.expm1(-k * math.log(2.0)) / (b0 * k)
        B2 = 1.0 / (b0 * k)
    B3 = _extremum_power(b0, beta, 1.0, "min")
    return DampingConstants(
        beta=beta, b_at_0=b0, b1=b0, b2=b0, b3=abs(beta), B1=B1, B2=B2, B3=B3,
        B4=max(0.0, _extremum_power(b0, beta, 0.0, "max")), all_hold=B3 > 0,
        ranges={"b": (0.0, math.inf), "B_lower": (1.0, math.inf), "B_upper": (0.0, math.inf),
                "Binv_lower": (1.0, math.inf), "Binv_upper": (0.0, math.inf)},
    )


def check_hypotheses(spec: DampingSpec, t_max: float, n_points: int = 400) -> DampingConstants:
    """Tightest grid constants for the damping hypotheses on [0, t_max].

    The t-grid is ``geomspace(1, 1 + t_max) - 1`` (log spaced in 1 + t).
    Lower bounds on B and B^{-1} are extracted on t >= 1 and tau >= 1; upper
    bounds on t >= 0 and tau >= 0. The tau-grid is the image B(t-grid).

    Raises
    ------
    HypothesisViolation
        If b <= 0 at any grid point.
    """
    if not t_max > 0:
        raise DomainError("t_max must be positive")
    if spec.kind == TABULATED:
        t_max = min(t_max, spec.t_max)
        grid = np.union1d(np.geomspace(1.0, 1.0 + t_max, n_points) - 1.0,
                          spec.t_samples[spec.t_samples <= t_max])
    else:
        grid = np.geomspace(1.0, 1.0 + t_max, n_points) - 1.0
    grid[0] = 0.0
    b = np.asarray(spec.b(grid), dtype=float)
    bad = grid[~(b > 0)]
    if bad.size:
        raise HypothesisViolation(
            f"damping is not positive at {bad.size} sample(s), first at t={bad[0]:.6g}", bad)
    beta = spec.beta
    one_t = 1.0 + grid
    scaled = b * one_t ** beta
    b1, b2 = float(scaled.min()), float(scaled.max())
    try:
        bp = np.asarray(spec.b_prime(grid), dtype=float)
        b3 = float(np.max(np.abs(bp) * one_t / b))
    except ConfigurationError:
        b3 = math.nan

    profile = BProfile(spec)
    B = np.asarray(profile.B(grid), dtype=float)
    if beta == -1.0:
        rB = B / np.log(2.0 + grid)
    else:
        rB = B / one_t ** (1.0 + beta)
    ge1 = grid >= 1.0
    B1 = float(rB[ge1].min()) if ge1.any() else math.nan
    B2 = float(rB.max())

    tau = B
    tinv = grid  # B^{-1}(tau) on the image grid
    if beta == -1.0:
        with np.errstate(divide="ignore"):
            rinv = np.log(tinv) / (1.0 + tau)
        B4 = float(max(0.0, np.max(rinv[tinv > 0]))) if np.any(tinv > 0) else 0.0
    else:
        rinv = tinv / (1.0 + tau) ** (1.0 / (1.0 + beta))
        B4 = float(rinv.max())
    tau_ge1 = tau >= 1.0
    B3 = float(rinv[tau_ge1].min()) if tau_ge1.any() else math.nan

    consts = [b1, b2, B1, B2, B3, B4]
    all_hold = all(math.isfinite(c) and c > 0 for c in consts) and math.isfinite(b3)
    tau_max = float(tau[-1])
    return DampingConstants(
        beta=beta, b_at_0=float(b[0]), b1=b1, b2=b2, b3=b3, B1=B1, B2=B2, B3=B3, B4=B4,
        all_hold=bool(all_hold),
        ranges={"b": (0.0, float(t_max)), "B_lower": (1.0, float(t_max)),
                "B_upper": (0.0, float(t_max)), "Binv_lower": (1.0, tau_max),
                "Binv_upper": (0.0, tau_max)},
    )
