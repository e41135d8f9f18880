"""Self-similar scaling variables, the Gaussian decomposition and the n = 1 energies.

With s = log(B(t)+1) and y = (B(t)+1)^{-1/2} x the unknowns

    v(s, y) = (B+1)^{n/2} u(t, x),    w(s, y) = b(t) (B+1)^{n/2+1} u_t(t, x)

satisfy a damped first-order system whose large-time profile is the heat
kernel phi_0. Fields are split as v = alpha phi_0 + f and
w = alpha' phi_0 + alpha psi_0 + g with psi_0 = Laplacian(phi_0), and for
n = 1 a family of weighted energies E_0..E_5 of the remainder is evaluated
together with the dissipation and forcing terms L_j, R_j of their balance laws

    dE_j/ds + delta_j E_j + L_j = R_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

from .cutoff import fujita_exponent
from .damping import BProfile
from .errors import CoverageError, PreconditionError, UnsupportedDimensionError
from .grid import Grid
from .pde import NonlinearityKind, Snapshot, WaveState

N_ENERGIES = 6


# ----------------------------------------------------------------- profile

def gaussian_profile(y, n: int = 1):
    """Heat kernel at unit time and its Laplacian.

    Parameters
    ----------
    y : array_like
        Coordinate (n = 1) or radius |y|.
    n : int
        Space dimension.

    Returns
    -------
    phi0, psi0 : ndarray
        ``phi0 = (4 pi)^{-n/2} exp(-|y|^2/4)`` and ``psi0 = (|y|^2/4 - n/2) phi0``.
    """
    y = np.asarray(y, dtype=float)
    rho2 = y * y
    phi0 = (4.0 * math.pi) ** (-0.5 * n) * np.exp(-0.25 * rho2)
    return phi0, (0.25 * rho2 - 0.5 * n) * phi0


def psi0_moment(y, n: int = 1):
    """Return y . grad(psi0) for the radial profile psi0."""
    y = np.asarray(y, dtype=float)
    rho2 = y * y
    phi0, _ = gaussian_profile(y, n)
    return 0.5 * rho2 * phi0 * (1.0 - (0.25 * rho2 - 0.5 * n))


def y_grid(n: int, y_max: float, dy: float) -> Grid:
    """Uniform y grid: the full line [-y_max, y_max] for n = 1, radial otherwise."""
    return Grid.uniform(n, n > 1, y_max, dy)


# ----------------------------------------------------------------- transform

@dataclass(eq=False)
class ScaledState:
    """Fields v, w on a y grid at scaled time s.

    Attributes
    ----------
    s : float
        Scaled time log(B(t)+1).
    grid : Grid
        The y grid (full line for n = 1, radial for n >= 2).
    v, w : ndarray
        Scaled unknowns on ``grid``.
    t_of_s : float
        Original time.
    b_at_t, b_prime_at_t, B_at_t : float
        Damping data cached at ``t_of_s``.
    """

    s: float
    grid: Grid
    v: np.ndarray
    w: np.ndarray
    t_of_s: float
    b_at_t: float
    b_prime_at_t: float
    B_at_t: float

    @property
    def y(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def kappa(self) -> float:
        """Coefficient e^{-s}/b(t(s))^2 of the inertial terms."""
        return math.exp(-self.s) / self.b_at_t**2

    @property
    def eta(self) -> float:
        """Coefficient b'(t(s))/b(t(s))^2."""
        return self.b_prime_at_t / self.b_at_t**2


def _field_spline(grid: Grid, values) -> CubicSpline:
    """Cubic spline of a field; radial fields are mirrored to keep them even."""
    x = grid.nodes
    if grid.radial:
        x = np.concatenate([-x[:0:-1], x])
        values = np.concatenate([values[:0:-1], values])
    return CubicSpline(x, values)


def state_from_snapshot(snap: Snapshot, grid: Grid, geometry: str = "radial") -> WaveState:
    """Wrap a stored snapshot as a WaveState on its parent grid."""
    return WaveState(grid=grid, u=snap.u, ut=snap.ut, t=snap.t, geometry=geometry)


def to_scaling_vars(wave: WaveState, profile: BProfile, ygrid: Grid,
                    tol: float = 1e-10) -> ScaledState:
    """Resample a wave state onto scaling variables by cubic interpolation.

    Raises
    ------
    CoverageError
        If |u| or |u_t| exceeds ``tol`` times its maximum outside the image of
        the y grid, so that integrals over the y grid would miss mass.
    """
    if not wave.alive:
        raise PreconditionError("cannot transform a dead state")
    if ygrid.n != wave.n:
        raise PreconditionError("y grid dimension does not match the wave state")
    t = float(wave.t)
    spec = profile.spec
    B = float(profile.B(t))
    b = float(spec.b(t))
    bp = float(spec.b_prime(t))
    scale = math.sqrt(B + 1.0)
    n = wave.n

    x_reach = scale * float(np.max(np.abs(ygrid.nodes)))
    outside = np.abs(wave.grid.nodes) > x_reach
    for name, arr in (("u", wave.u), ("u_t", wave.ut)):
        peak = float(np.max(np.abs(arr)))
        if peak > 0 and outside.any() and float(np.max(np.abs(arr[outside]))) > tol * peak:
            raise CoverageError(
                f"{name} is not negligible beyond |x| = {x_reach:.6g}; widen the y grid")

    x = ygrid.nodes * scale
    if wave.radial and not ygrid.radial:
        x = np.abs(x)
    inside = np.abs(x) <= np.max(np.abs(wave.grid.nodes))
    u = np.zeros_like(x)
    ut = np.zeros_like(x)
    u[inside] = _field_spline(wave.grid, wave.u)(x[inside])
    ut[inside] = _field_spline(wave.grid, wave.ut)(x[inside])
    v = (B + 1.0) ** (0.5 * n) * u
    w = b * (B + 1.0) ** (0.5 * n + 1.0) * ut
    return ScaledState(s=math.log1p(B), grid=ygrid, v=v, w=w, t_of_s=t, b_at_t=b,
                       b_prime_at_t=bp, B_at_t=B)


def from_scaling_vars(scaled: ScaledState, x_grid: Grid):
    """Map (v, w) back to (u, u_t) on ``x_grid``; zero outside the y window."""
    n = scaled.n
    B1 = scaled.B_at_t + 1.0
    y = x_grid.nodes / math.sqrt(B1)
    if x_grid.radial and not scaled.grid.radial:
        y = np.abs(y)
    inside = np.abs(y) <= np.max(np.abs(scaled.grid.nodes))
    v = np.zeros_like(y)
    w = np.zeros_like(y)
    v[inside] = _field_spline(scaled.grid, scaled.v)(y[inside])
    w[inside] = _field_spline(scaled.grid, scaled.w)(y[inside])
    u = B1 ** (-0.5 * n) * v
    ut = w / (scaled.b_at_t * B1 ** (0.5 * n + 1.0))
    return u, ut


# ----------------------------------------------------------------- decomposition

@dataclass(eq=False)
class Decomposition:
    """Split of (v, w) around the Gaussian profile at one scaled time.

    ``F``, ``G``, ``H`` are the primitives from the left edge (n = 1 only;
    ``None`` otherwise).
    """

    s: float
    t: float
    grid: Grid
    kappa: float
    eta: float
    alpha: float
    alpha_prime: float
    f: np.ndarray
    g: np.ndarray
    r_src: np.ndarray
    h_src: np.ndarray
    int_r: float
    phi0: np.ndarray
    psi0: np.ndarray
    F: np.ndarray | None = None
    G: np.ndarray | None = None
    H_src: np.ndarray | None = None

    @property
    def y(self) -> np.ndarray:
        return self.grid.nodes


def decompose(scaled: ScaledState, nonlinearity: NonlinearityKind) -> Decomposition:
    """Project (v, w) onto the Gaussian mode and assemble the forcing terms."""
    grid, n, y = scaled.grid, scaled.n, scaled.y
    s, kappa, eta = scaled.s, scaled.kappa, scaled.eta
    phi0, psi0 = gaussian_profile(y, n)
    alpha = grid.integrate(scaled.v)
    alpha_p = grid.integrate(scaled.w)
    f = scaled.v - alpha * phi0
    g = scaled.w - alpha_p * phi0 - alpha * psi0
    growth = math.exp(0.5 * n * (fujita_exponent(n) - nonlinearity.p) * s)
    r = eta * scaled.w + growth * nonlinearity(scaled.v)
    int_r = grid.integrate(r)
    h = (kappa * (-2.0 * alpha_p * psi0
                  + alpha * (0.5 * psi0_moment(y, n) + (0.5 * n + 1.0) * psi0))
         + r - int_r * phi0)
    dec = Decomposition(s=s, t=scaled.t_of_s, grid=grid, kappa=kappa, eta=eta, alpha=alpha,
                        alpha_prime=alpha_p, f=f, g=g, r_src=r, h_src=h, int_r=int_r,
                        phi0=phi0, psi0=psi0)
    if n == 1:
        dec.F = cumulative_trapezoid(f, y, initial=0.0)
        dec.G = cumulative_trapezoid(g, y, initial=0.0)
        dec.H_src = cumulative_trapezoid(h, y, initial=0.0)
    return dec


# ----------------------------------------------------------------- Hardy

@dataclass(frozen=True)
class HardyResult:
    lhs: float
    rhs: float
    holds: bool


def hardy_check(f, y) -> HardyResult:
    """Compare int F^2 with 4 int y^2 f^2 for the zero-mean part of ``f``.

    The mean is removed along the Gaussian profile so the projected field
    still decays; F is the primitive from the left edge.
    """
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    phi0, _ = gaussian_profile(y, 1)
    f = f - np.trapezoid(f, y) / np.trapezoid(phi0, y) * phi0
    F = cumulative_trapezoid(f, y, initial=0.0)
    lhs = float(np.trapezoid(F * F, y))
    rhs = 4.0 * float(np.trapezoid(y * y * f * f, y))
    return HardyResult(lhs, rhs, lhs <= rhs * (1.0 + 1e-8))


# ----------------------------------------------------------------- energies

@dataclass(frozen=True)
class EnergyParams:
    """Free parameters of the combined energy; C_2 = C_3 = C_4 = 1."""

    lam: float = 0.125
    C0: float = 100.0
    C1: float = 10.0

    def __post_init__(self):
        if not 0 < self.lam <= 0.25:
            raise PreconditionError("lambda must lie in (0, 1/4]")
        if not self.C0 > self.C1 > 1:
            raise PreconditionError("need C0 > C1 > 1")

    @property
    def C(self) -> np.ndarray:
        return np.array([self.C0, self.C1, 1.0, 1.0, 1.0])

    @property
    def delta(self) -> np.ndarray:
        return np.array([0.5, 0.5, 0.5, 2.0 * self.lam, 0.0])


@dataclass(frozen=True)
class EnergyRow:
    """E_j, L_j, R_j for j = 0..5 at one scaled time, plus the E_5 lower-bound terms."""

    s: float
    t: float
    E: np.ndarray
    L: np.ndarray
    R: np.ndarray
    lower: float


def energies_n1(dec: Decomposition, params: EnergyParams = EnergyParams()) -> EnergyRow:
    """Evaluate the weighted energies of the remainder (n = 1) by quadrature.

    F_y is taken as f itself rather than differentiating the primitive.
    """
    if dec.grid.n != 1 or dec.F is None:
        raise UnsupportedDimensionError("energies are implemented for n = 1 only")
    y = dec.y
    k, eta, s, lam = dec.kappa, dec.eta, dec.s, params.lam
    f, g, F, G, h, H = dec.f, dec.g, dec.F, dec.G, dec.h_src, dec.H_src
    a, ap, ir = dec.alpha, dec.alpha_prime, dec.int_r
    fy = np.gradient(f, y, edge_order=2)
    y2 = y * y
    q = lambda arr: float(np.trapezoid(arr, y))
    decay = math.exp(-2.0 * lam * s)

    E = np.empty(N_ENERGIES)
    L = np.empty(N_ENERGIES)
    R = np.empty(N_ENERGIES)
    E[0] = q(0.5 * (f * f + k * G * G) + 0.5 * F * F + k * F * G)
    E[1] = q(0.5 * (fy * fy + k * g * g) + f * f + 2.0 * k * f * g)
    E[2] = q(y2 * (0.5 * (fy * fy + k * g * g) + 0.5 * f * f + k * f * g))
    E[3] = 0.5 * k * ap * ap + decay * a * a
    E[4] = 0.5 * a * a + k * a * ap

    L[0] = q(0.5 * f * f + G * G)
    L[1] = q(fy * fy + g * g) - q(f * f)
    L[2] = q(y2 * (0.5 * fy * fy + g * g)) + 2.0 * q(y * fy * (f + g))
    L[3] = ap * ap
    L[4] = 0.0

    R[0] = 1.5 * k * q(G * G) - eta * q(G * G + 2.0 * F * G) + q((F + G) * H)
    R[1] = (3.0 * k * q(g * g) + 2.0 * k * q(f * g) - eta * q(g * g + 4.0 * f * g)
            + q((2.0 * f + g) * h))
    R[2] = 1.5 * k * q(y2 * g * g) - eta * q(y2 * (2.0 * f + g) * g) + q(y2 * (f + g) * h)
    R[3] = (0.5 * (2.0 * lam + 1.0) * k * ap * ap - eta * ap * ap + ap * ir
            + 2.0 * decay * a * ap)
    R[4] = k * ap * ap - 2.0 * eta * a * ap + a * ir

    C = params.C
    E[5] = float(np.dot(C, E[:5]))
    L[5] = float(np.sum((0.5 - 2.0 * lam) * C[:3] * E[:3] + C[:3] * L[:3]) + C[3] * L[3])
    R[5] = float(np.dot(C, R[:5]))
    lower = (q((1.0 + y2) * (f * f + fy * fy)) + k * q((1.0 + y2) * g * g)
             + a * a + k * ap * ap)
    return EnergyRow(s=dec.s, t=dec.t, E=E, L=L, R=R, lower=lower)


@dataclass(eq=False)
class EnergyTrace:
    """Energies along a trajectory sampled at increasing scaled times.

    Attributes
    ----------
    s, t : ndarray
        Scaled and original sample times (strictly increasing).
    E, L, R : ndarray, shape (k, 6)
        Energies and balance terms for j = 0..5.
    lower : ndarray
        ||f||^2_{H^{1,1}} + kappa ||g||^2_{H^{0,1}} + alpha^2 + kappa alpha'^2.
    params : EnergyParams
    residuals : ndarray, shape (k, 6)
        dE_j/ds + delta_j E_j + L_j - R_j by central differences; NaN at the ends.
    e5_margin : ndarray
        Slack of the E_5 growth estimate at each sample (NaN until fitted).
    """

    s: np.ndarray
    t: np.ndarray
    E: np.ndarray
    L: np.ndarray
    R: np.ndarray
    lower: np.ndarray
    params: EnergyParams
    residuals: np.ndarray = field(default=None)
    e5_margin: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.s.size > 1 and not np.all(np.diff(self.s) > 0):
            raise PreconditionError("scaled times must be strictly increasing")
        if self.residuals is None:
            self.residuals = identity_residuals(self.s, self.E, self.L, self.R, self.params)
        if self.e5_margin is None:
            self.e5_margin = np.full(self.s.size, math.nan)

    def subsample(self, stride: int) -> "EnergyTrace":
        sl = slice(None, None, stride)
        return EnergyTrace(self.s[sl], self.t[sl], self.E[sl], self.L[sl], self.R[sl],
                           self.lower[sl], self.params)

    def dE5_ds(self) -> np.ndarray:
        return central_difference(self.s, self.E[:, 5])

    def columns(self) -> dict:
        cols = {"s": self.s, "t": self.t}
        for name, arr in (("E", self.E), ("L", self.L), ("R", self.R)):
            for j in range(N_ENERGIES):
                cols[f"{name}{j}"] = arr[:, j]
        for j in range(5):
            cols[f"residual{j}"] = self.residuals[:, j]
        cols["e5_margin"] = self.e5_margin
        return cols


def central_difference(s, values) -> np.ndarray:
    """Central difference quotient at interior samples; NaN at both ends."""
    values = np.asarray(values, dtype=float)
    s = np.asarray(s, dtype=float)
    out = np.full(values.shape, math.nan)
    if s.size >= 3:
        h = (s[2:] - s[:-2]).reshape((-1,) + (1,) * (values.ndim - 1))
        out[1:-1] = (values[2:] - values[:-2]) / h
    return out


def identity_residuals(s, E, L, R, params: EnergyParams) -> np.ndarray:
    """Residuals of the six balance laws at interior samples."""
    dE = central_difference(s, E)
    res = np.empty_like(E)
    delta = params.delta
    res[:, :5] = dE[:, :5] + delta * E[:, :5] + L[:, :5] - R[:, :5]
    damp5 = 2.0 * params.lam * (E[:, :4] @ params.C[:4])
    res[:, 5] = dE[:, 5] + damp5 + L[:, 5] - R[:, 5]
    return res


def energy_trace(decs, params: EnergyParams = EnergyParams()) -> EnergyTrace:
    """Assemble an EnergyTrace from decompositions ordered by s."""
    rows = [energies_n1(d, params) for d in decs]
    return EnergyTrace(s=np.array([r.s for r in rows]), t=np.array([r.t for r in rows]),
                       E=np.array([r.E for r in rows]), L=np.array([r.L for r in rows]),
                       R=np.array([r.R for r in rows]), lower=np.array([r.lower for r in rows]),
                       params=params)


def scaled_times(s_end: float, ds: float, profile: BProfile) -> tuple[np.ndarray, np.ndarray]:
    """Uniform scaled times 0, ds, ... <= s_end and the matching original times."""
    k = int(math.floor(s_end / ds + 1e-9))
    s = ds * np.arange(k + 1)
    t = np.array([float(profile.B_inverse(math.expm1(v))) for v in s])
    t[0] = 0.0
    return s, t


def trace_from_snapshots(snapshots, grid: Grid, geometry: str, profile: BProfile,
                         nonlinearity: NonlinearityKind, ygrid: Grid,
                         params: EnergyParams = EnergyParams(), tol: float = 1e-10) -> EnergyTrace:
    """Energy trace along stored PDE snapshots."""
    decs = [decompose(to_scaling_vars(state_from_snapshot(sn, grid, geometry), profile,
                                      ygrid, tol), nonlinearity)
            for sn in snapshots]
    return energy_trace(decs, params)


# ----------------------------------------------------------------- refinement

@dataclass(frozen=True)
class IdentityConvergence:
    """Convergence of one balance-law residual under s-refinement.

    ``order`` is estimated from successive differences of the residuals at
    shared samples, which cancels any refinement-independent floor (spatial
    discretisation error); ``raw_order`` uses the residuals themselves.
    ``floor`` is the finest-level residual and ``scale`` the size of the
    largest term in the balance law, so ``floor / scale`` measures how well
    the identity holds beyond the time-difference error.
    """

    j: int
    order: float
    raw_order: float
    floor: float
    scale: float
    residual_max: tuple


def identity_convergence(fine: EnergyTrace, levels: int = 3) -> list[IdentityConvergence]:
    """Observed order of each residual from traces with spacing ds, ds/2, ..., ds/2^(levels-1).

    ``fine`` must be sampled at the finest spacing; coarser traces are
    subsampled from it and compared on the samples interior to the coarsest.
    """
    if levels < 3:
        raise PreconditionError("need at least three refinement levels")
    top = 2 ** (levels - 1)
    k = fine.s.size
    if k < 2 * top + 1:
        raise PreconditionError("trace too short for the requested refinement levels")
    traces = [fine.subsample(top // 2**i) for i in range(levels)]
    # interior samples of the coarsest trace, located on every level
    idx_coarse = np.arange(1, traces[0].s.size - 1)
    res = []
    for i, tr in enumerate(traces):
        stride = 2**i
        res.append(tr.residuals[idx_coarse * stride])
    out = []
    for j in range(N_ENERGIES):
        r = [x[:, j] for x in res]
        maxes = tuple(float(np.max(np.abs(x))) for x in r)
        d1 = float(np.max(np.abs(r[-3] - r[-2])))
        d2 = float(np.max(np.abs(r[-2] - r[-1])))
        order = math.log2(d1 / d2) if d1 > 0 and d2 > 0 else math.inf
        raw = math.log2(maxes[-3] / maxes[-2]) if maxes[-2] > 0 else math.inf
        sl = idx_coarse * top
        dE = np.abs(fine.dE5_ds()) if j == 5 else np.abs(central_difference(fine.s, fine.E[:, j]))
        scale = float(max(np.max(dE[sl]), np.max(np.abs(fine.E[sl, j])),
                          np.max(np.abs(fine.L[sl, j])), np.max(np.abs(fine.R[sl, j]))))
        out.append(IdentityConvergence(j, order, raw, maxes[-1], scale, maxes))
    return out


# ----------------------------------------------------------------- a priori estimates

@dataclass(frozen=True)
class E5Check:
    """Smallest constant in the E_5 growth estimate over the sampled s >= s0."""

    fitted_C: float
    s0_used: float
    holds: bool
    margin: np.ndarray
    lower_C: float


def select_s0(trace: EnergyTrace) -> int:
    """Index of the first sample after which E_5 stays positive.

    The lower bound ``lower <= C E_5`` admits a finite constant exactly from
    this sample on; identically zero traces return 0.
    """
    E5 = trace.E[:, 5]
    if not np.any(E5 != 0):
        return 0
    bad = np.nonzero(~(E5 > 0))[0]
    return 0 if bad.size == 0 else int(bad[-1]) + 1


def e5_terms(trace: EnergyTrace, beta: float, p: float, n: int = 1,
             K: float = 50.0) -> np.ndarray:
    """Sum of the three right-hand terms of the E_5 growth estimate (C = 1).

    For beta = -1 the exponent (1-beta)/(1+beta) is replaced by ``K``.
    """
    s = trace.s
    E5 = np.maximum(trace.E[:, 5], 0.0)
    k = K if beta <= -1.0 else (1.0 - beta) / (1.0 + beta)
    gap = n * (fujita_exponent(n) - p)
    return (np.exp(-k * s) * E5 + np.exp(gap * s) * E5**p
            + np.exp(0.5 * gap * s) * E5 ** (0.5 * (p + 1.0)))


def check_e5est(trace: EnergyTrace, beta: float, p: float, n: int = 1, K: float = 50.0,
                s0_index: int | None = None) -> E5Check:
    """Fit the smallest C with dE_5/ds <= C (terms) at all interior samples s >= s0."""
    if not -1.0 <= beta < 1.0:
        raise PreconditionError("beta must lie in [-1, 1)")
    i0 = select_s0(trace) if s0_index is None else int(s0_index)
    idx = np.arange(max(i0, 1), trace.s.size - 1)
    if idx.size < 2:
        raise PreconditionError("trace too short beyond s0 for the E_5 estimate")
    dE = trace.dE5_ds()
    terms = e5_terms(trace, beta, p, n, K)
    lhs, rhs = dE[idx], terms[idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lhs <= 0, 0.0, lhs / rhs)
    C = float(np.max(ratio)) if ratio.size else 0.0
    margin = np.full(trace.s.size, math.nan)
    margin[idx] = C * rhs - lhs
    trace.e5_margin = margin
    E5 = trace.E[idx, 5]
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.where(trace.lower[idx] == 0, 0.0, trace.lower[idx] / E5)
    return E5Check(fitted_C=C, s0_used=float(trace.s[i0]), holds=math.isfinite(C),
                   margin=margin, lower_C=float(np.max(lr)))


@dataclass(frozen=True)
class MTrack:
    """Running supremum of E_5 and the fitted constant in its a priori bound.

    ``form`` is ``"subcritical"`` or ``"critical"`` (p equal to the Fujita
    exponent, where the source terms carry the factor s - s0).
    """

    s: np.ndarray
    M: np.ndarray
    fitted_C0: float
    holds: bool
    form: str


def track_M(trace: EnergyTrace, eps: float, I0: float, p: float, n: int = 1,
            s0_index: int | None = None) -> MTrack:
    """Fit the smallest C0' bounding the running supremum M(s) of E_5.

    Subcritical: M <= C0' (eps^2 I0 + e^{n(pF-p)s} M^p + e^{n(pF-p)s/2} M^{(p+1)/2}).
    Critical: M <= C0' (eps^2 I0 + (s - s0)(M^p + M^{(p+1)/2})).
    """
    i0 = select_s0(trace) if s0_index is None else int(s0_index)
    s = trace.s[i0:]
    M = np.maximum.accumulate(np.maximum(trace.E[i0:, 5], 0.0))
    pF = fujita_exponent(n)
    if abs(p - pF) <= 1e-12 * pF:
        form = "critical"
        rhs = eps * eps * I0 + (s - s[0]) * (M**p + M ** (0.5 * (p + 1)))
    else:
        form = "subcritical"
        gap = n * (pF - p)
        rhs = (eps * eps * I0 + np.exp(gap * s) * M**p
               + np.exp(0.5 * gap * s) * M ** (0.5 * (p + 1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(M == 0, 0.0, M / rhs)
    C0 = float(np.max(ratio)) if ratio.size else 0.0
    return MTrack(s=s, M=M, fitted_C0=C0, holds=math.isfinite(C0), form=form)


def weighted_sobolev_norm2(a0, a1, grid: Grid, m: float = 1.0) -> float:
    """||a0||^2_{H^{1,m}} + ||a1||^2_{H^{0,m}} with weight (1+|x|^2)^{m/2}."""
    x = grid.nodes
    wt = (1.0 + x * x) ** m
    da0 = np.gradient(a0, x, edge_order=2)
    return grid.integrate(wt * (a0 * a0 + da0 * da0 + a1 * a1))
