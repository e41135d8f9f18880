"""Smooth radial cutoff, the test-function constants A and mu, and data conditions.

The cutoff profile is the standard C^infinity transition

    psi(r) = h(2 - r) / (h(2 - r) + h(r - 1)),   h(s) = exp(-1/s) for s > 0,

equal to 1 on [0, 1] and 0 on [2, inf). It is evaluated in the logistic form
``expit(-z)`` with ``z = 1/(2 - r) - 1/(r - 1)``, which has no overflow.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import integrate, optimize
from scipy.special import expit

from .damping import BProfile, DampingConstants
from .errors import ConfigurationError, DomainError, InfeasibleError, PreconditionError
from .grid import Grid, sphere_area


def fujita_exponent(n: int) -> float:
    return 1.0 + 2.0 / n


def conjugate(p: float) -> float:
    return p / (p - 1.0)


def default_ell(p: float) -> int:
    """Smallest integer strictly above 2p' + 1."""
    return int(math.floor(2.0 * conjugate(p) + 1.0)) + 1


def profile_derivatives(r):
    """Return (psi, psi', psi'') of the reference profile at radii ``r``."""
    r = np.asarray(r, dtype=float)
    val = np.where(r <= 1.0, 1.0, 0.0)
    d1 = np.zeros_like(r)
    d2 = np.zeros_like(r)
    mid = (r > 1.0) & (r < 2.0)
    if np.any(mid):
        x = r[mid]
        a, c = 2.0 - x, x - 1.0
        z = 1.0 / a - 1.0 / c
        dz = 1.0 / a**2 + 1.0 / c**2
        d2z = 2.0 / a**3 - 2.0 / c**3
        S = expit(-z)
        q = S * expit(z)  # S(1 - S) without cancellation
        val[mid] = S
        d1[mid] = -q * dz
        d2[mid] = q * (1.0 - 2.0 * S) * dz**2 - q * d2z
    return val, d1, d2


@dataclass(frozen=True)
class CutoffSpec:
    """Radial cutoff psi_R(x) = psi(|x|/R) raised to the power ``ell``."""

    ell: int
    R: float = 1.0
    n: int = 1

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 1:
            raise DomainError(f"ell must be a positive integer, got {self.ell}")
        if not self.R > 0:
            raise DomainError(f"R must be positive, got {self.R}")
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")

    def with_R(self, R: float) -> "CutoffSpec":
        return CutoffSpec(ell=self.ell, R=float(R), n=self.n)

    def radial(self, rho):
        """Value, radial derivative and Laplacian of psi_R at radius ``rho``."""
        rho = np.asarray(rho, dtype=float)
        R = self.R
        v, d1, d2 = profile_derivatives(rho / R)
        lap = d2 / R**2
        if self.n > 1:
            with np.errstate(divide="ignore", invalid="ignore"):
                extra = np.where(rho > 0, (self.n - 1) * d1 / (R * np.where(rho > 0, rho, 1.0)), 0.0)
            lap = lap + extra
        return v, d1 / R, lap

    def Phi_radial(self, rho):
        """Phi = ell(ell-1)|grad psi_R|^2 + ell psi_R Laplacian(psi_R) at radius rho."""
        v, g, lap = self.radial(rho)
        ell = self.ell
        return ell * (ell - 1) * g**2 + ell * v * lap


def eval_cutoff(spec: CutoffSpec, x):
    """Value, gradient and Laplacian of psi_R at a point ``x``.

    ``x`` may be a scalar (n = 1) or a length-n vector.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rho = float(np.linalg.norm(x))
    v, g, lap = spec.radial(rho)
    grad = np.zeros_like(x) if rho == 0 else float(g) * x / rho
    return float(v), grad, float(lap)


def eval_Phi(spec: CutoffSpec, x) -> float:
    if spec.ell < 2:
        raise PreconditionError("Phi needs ell >= 2")
    rho = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
    return float(spec.Phi_radial(rho))


def radial_quad(func, a: float, b: float, n: int, epsrel: float = 1e-10) -> float:
    """Integral of a radial function over the shell a <= |x| <= b in R^n."""
    val, _ = integrate.quad(lambda r: func(r) * r ** (n - 1), a, b,
                            epsabs=0.0, epsrel=epsrel, limit=400)
    return sphere_area(n) * val


def psi_ell_norm(spec: CutoffSpec) -> float:
    """L^1 norm of psi_R^ell: the unit ball volume plus the transition shell."""
    n, R, ell = spec.n, spec.R, spec.ell
    core = sphere_area(n) * R**n / n
    shell = radial_quad(lambda r: float(spec.radial(r)[0]) ** ell, R, 2 * R, n)
    return core + shell


def phi_weight_norm(p: float, spec: CutoffSpec) -> float:
    """L^1 norm of |Phi|^{p'} psi_R^{ell - 2p'} (supported on the transition shell)."""
    pp = conjugate(p)
    ell = spec.ell

    def integrand(r):
        v = float(spec.radial(r)[0])
        if v <= 0.0:
            return 0.0
        return abs(float(spec.Phi_radial(r))) ** pp * v ** (ell - 2 * pp)

    return radial_quad(integrand, spec.R, 2 * spec.R, spec.n)


def A_prefactor(p: float) -> float:
    pp = conjugate(p)
    return 2.0 ** (pp - 1.0) * pp ** (-1.0 / p) * p ** ((1.0 - pp) / p)


def compute_A(n: int, p: float, ell: int, spec: CutoffSpec) -> float:
    """The constant A(n, p, ell, psi_R) of the averaged differential inequality.

    Uses |Phi| inside the p'-th power, which is what the Holder step that
    produces A actually bounds.
    """
    if not p > 1:
        raise DomainError("p must exceed 1")
    if ell <= 2 * conjugate(p):
        raise PreconditionError(f"ell = {ell} must exceed 2p' = {2 * conjugate(p):.6g}")
    if spec.n != n or spec.ell != ell:
        spec = CutoffSpec(ell=ell, R=spec.R, n=n)
    pp = conjugate(p)
    return (A_prefactor(p) * phi_weight_norm(p, spec) ** (1.0 / p)
            * psi_ell_norm(spec) ** (1.0 / pp))


def compute_mu(p: float, constants: DampingConstants | None, beta: float | None, A: float) -> float:
    """The three-way minimum mu(p, b, beta, A) in (0, 1].

    The factor {2^(1/(1+beta)) (1 + B4)}^max(0, 2 beta) is 1 when beta = -1.
    """
    if constants is None:
        raise ConfigurationError("damping constants are required")
    if beta is None:
        beta = constants.beta
    if not p > 1 or not A > 0:
        raise DomainError("need p > 1 and A > 0")
    needed = [constants.b_at_0, constants.b1, constants.b3]
    if beta > 0:
        needed.append(constants.B4)
    if any(c is None or not math.isfinite(c) for c in needed):
        raise ConfigurationError("compute_mu needs finite b(0), b1, b3 (and B4 when beta > 0)")
    if beta == -1.0 or beta <= 0:
        growth = 1.0
    else:
        growth = (2.0 ** (1.0 / (1.0 + beta)) * (1.0 + constants.B4)) ** (2.0 * beta)
    b1 = constants.b1
    bracket = (2.0 * (p + 1.0) / (p - 1.0) ** 2 * b1**-2 * growth
               + 2.0 * (constants.b3 / b1 + 1.0) / (p - 1.0))
    return min(1.0, 0.5 * (p - 1.0) * constants.b_at_0 * A, 1.0 / bracket)


def R_exponent(n: int, p: float) -> float:
    """(p - 1) / (n (p_F - p)), the exponent in R(eps)."""
    return (p - 1.0) / (n * (fujita_exponent(n) - p))


def compute_R_eps(eps: float, I0: float, A_ref: float, n: int, p: float, ell: int,
                  verify: bool = True) -> float:
    """Scale R(eps) at which A(n, p, ell, psi_R) equals eps I0 / 4.

    ``A_ref`` is compute_A at R = 1. With ``verify`` the identity is checked
    by direct quadrature at the returned scale.
    """
    if p >= fujita_exponent(n):
        raise PreconditionError("R(eps) needs p < p_F")
    if not (eps > 0 and I0 > 0 and A_ref > 0):
        raise DomainError("eps, I0 and A_ref must be positive")
    k = R_exponent(n, p)
    R = (A_ref / (0.25 * eps * I0)) ** k
    if verify:
        got = compute_A(n, p, ell, CutoffSpec(ell=ell, R=R, n=n))
        target = 0.25 * eps * I0
        if abs(got - target) > 1e-6 * target:
            raise ArithmeticError(f"A at R(eps) = {got!r} differs from eps I0/4 = {target!r}")
    return R


@dataclass(frozen=True)
class DataConditions:
    cond2: bool
    cond3: bool
    cond4: bool
    cond41: bool
    I_psi0: float
    I_psi1: float
    A1: float
    A_R: float
    psi_norm: float
    I0: float
    I1: float

    @property
    def small_data_ok(self) -> bool:
        return self.cond3 and self.cond4 and self.cond41

    @property
    def all_ok(self) -> bool:
        return self.cond2 and self.small_data_ok


_SLACK = 1e-12


def check_data_conditions(a0, a1, grid: Grid, eps: float, spec: CutoffSpec, p: float,
                          A_R: float | None = None) -> DataConditions:
    """Evaluate the blow-up conditions on data (u0, u1) = eps (a0, a1).

    ``a0``, ``a1`` are samples on ``grid``; ``spec`` carries the scale R.
    Inequalities are compared with a relative slack of 1e-12, so the strict
    upper bound on I_psi(0) - A is treated as non-strict at rounding level.
    ``I_psi0``, ``I_psi1`` refer to the actual data eps a0, eps a1.
    """
    a0 = np.asarray(a0, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    w = grid.weights()
    psi_l = spec.radial(grid.radius)[0] ** spec.ell
    I0, I1 = float(w @ a0), float(w @ a1)
    int0, int1 = float(w @ (psi_l * a0)), float(w @ (psi_l * a1))
    if A_R is None:
        A_R = compute_A(spec.n, p, spec.ell, spec)
    norm = psi_ell_norm(spec)
    cap = 2.0 ** (1.0 / (p - 1.0)) * norm
    I_psi0, I_psi1 = eps * int0, eps * int1
    J0 = I_psi0 - A_R
    cond2 = bool(J0 > 0 and J0 <= cap * (1 + _SLACK) and I_psi1 > 0)
    cond3 = bool(int0 >= 0.5 * I0 * (1 - _SLACK)) and I0 > 0
    cond4 = bool(int1 >= 0.5 * I1 * (1 - _SLACK)) and I1 > 0
    # ||psi_R^ell|| = ||psi^ell|| R^n exactly, so the quadrature at scale R is used
    cond41 = bool(eps * I0 <= cap * (1 + _SLACK))
    A1 = I_psi1 / J0 if J0 != 0 else math.inf
    return DataConditions(cond2=cond2, cond3=bool(cond3), cond4=bool(cond4), cond41=cond41,
                          I_psi0=I_psi0, I_psi1=I_psi1, A1=A1, A_R=A_R, psi_norm=norm,
                          I0=I0, I1=I1)


def find_eps0(a0, a1, grid: Grid, p: float, ell: int | None = None, rel_width: float = 1e-3,
              lowest_decade: int = -12):
    """Largest eps in (1e-12, 1] for which the small-data conditions hold.

    Scans decades 1, 0.1, ..., then bisects in log eps between the first
    passing decade and its predecessor. The conditions are monotone in eps
    for nonnegative data, so the passing set is an interval (0, eps0].

    Returns
    -------
    eps0 : float
    R0 : float
        R(eps0).
    """
    n = grid.n
    ell = default_ell(p) if ell is None else ell
    w = grid.weights()
    I0, I1 = float(w @ a0), float(w @ a1)
    if not (I0 > 0 and I1 > 0):
        raise PreconditionError("find_eps0 needs positive integrals of a0 and a1")
    A_ref = compute_A(n, p, ell, CutoffSpec(ell=ell, R=1.0, n=n))

    def ok(eps):
        R = compute_R_eps(eps, I0, A_ref, n, p, ell, verify=False)
        spec = CutoffSpec(ell=ell, R=R, n=n)
        A_R = A_ref * R ** (n - 2.0 * conjugate(p) / p)
        return check_data_conditions(a0, a1, grid, eps, spec, p, A_R=A_R).small_data_ok

    hi = None
    for k in range(0, lowest_decade - 1, -1):
        if ok(10.0**k):
            hi = k
            break
    if hi is None:
        raise InfeasibleError("no admissible eps in [1e-12, 1]")
    if hi == 0:
        eps0 = 1.0
    else:
        lo_log, hi_log = float(hi), float(hi + 1)  # ok at 10^lo_log, fails at 10^hi_log
        while 10.0 ** (hi_log - lo_log) - 1.0 > rel_width:
            mid = 0.5 * (lo_log + hi_log)
            if ok(10.0**mid):
                lo_log = mid
            else:
                hi_log = mid
        eps0 = 10.0**lo_log
    return eps0, compute_R_eps(eps0, I0, A_ref, n, p, ell, verify=False)


@dataclass(frozen=True)
class Mu0Bound:
    """mu0 and the resulting upper lifespan bound T_upper(eps)."""

    mu0: float
    mu_ratio: float
    exponent: float
    profile: BProfile = field(repr=False)

    def B_argument(self, eps):
        return (1.0 / self.mu0) * np.asarray(eps, dtype=float) ** (-self.exponent)

    def T_upper(self, eps):
        return self.profile.B_inverse(self.B_argument(eps))

    def log_T_upper(self, eps):
        return self.profile.log_B_inverse(self.B_argument(eps))


def rate_exponent(n: int, p: float) -> float:
    """1 / (1/(p-1) - n/2), the power of eps in the lifespan bounds."""
    return 1.0 / (1.0 / (p - 1.0) - 0.5 * n)


def compute_mu0_and_bound(p: float, n: int, constants: DampingConstants, I0: float, I1: float,
                          A_ref: float, psi_norm_ref: float, profile: BProfile) -> Mu0Bound:
    """mu0 and T_upper for data with averages I0, I1.

    ``A_ref`` and ``psi_norm_ref`` are A and ||psi^ell||_1 at scale R = 1.
    """
    pF = fujita_exponent(n)
    if p >= pF:
        raise PreconditionError("the upper bound branch needs p < p_F")
    if not (I0 > 0 and I1 > 0):
        raise DomainError("I0 and I1 must be positive")
    kappa = rate_exponent(n, p)
    mu_r = compute_mu(p, constants, constants.beta, 2.0 * I1 / (3.0 * I0))
    mu0 = (mu_r * 0.5 * psi_norm_ref ** (-(p - 1.0)) * A_ref ** (-(p - 1.0) ** 2 / (pF - p))
           * (0.25 * I0) ** kappa)
    return Mu0Bound(mu0=mu0, mu_ratio=mu_r, exponent=kappa, profile=profile)


@dataclass
class BlowupConstantSet:
    """Constants attached to a run, exported in run reports."""

    p: float
    n: int
    ell: int
    A_const: float
    mu: float
    phi_ell_norm: float
    damping: DampingConstants
    mu0: float = math.nan
    I0: float = math.nan
    I1: float = math.nan
    eps0: float = math.nan
    R: float = 1.0

    @property
    def p_prime(self) -> float:
        return conjugate(self.p)

    def to_dict(self) -> dict:
        return {"p": self.p, "n": self.n, "ell": self.ell, "A": self.A_const, "mu": self.mu,
                "mu0": self.mu0, "I0": self.I0, "I1": self.I1, "eps0": self.eps0,
                "R": self.R, "phi_ell_norm": self.phi_ell_norm}
