"""Method-of-lines solver for u_tt - Laplacian(u) + b(t) u_t = N(u).

Space: second-order centered differences on a uniform grid, either radial
(r in [0, L], even reflection at the origin) or a line [-L, L] with Dirichlet
or periodic ends. Time: classical RK4 with a step limited by CFL, by damping
stability, and by a per-step cap on the growth of sup|u|.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numpy as np

from . import _kernels as K
from .cutoff import CutoffSpec, compute_mu
from .damping import BProfile, DampingSpec
from .errors import ConfigurationError, PreconditionError
from .extrapolation import (
    DEAD,
    HORIZON,
    STEP_COLLAPSE,
    THRESHOLD,
    BlowupReport,
    estimate_from_fit,
    fit_power_blowup,
)
from .grid import Grid

VARIANTS = {"abs_p": 0, "signed_p": 1, "neg_abs_p": 2, "none": 3}
_GEOM = {"radial": 0, "dirichlet": 1, "periodic": 2}


@dataclass(frozen=True)
class NonlinearityKind:
    variant: str = "abs_p"
    p: float = 2.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown nonlinearity {self.variant!r}")
        if not self.p > 1:
            raise ConfigurationError("p must exceed 1")

    def __call__(self, u):
        a = np.abs(u) ** self.p
        if self.variant == "abs_p":
            return a
        if self.variant == "signed_p":
            return np.sign(u) * a
        if self.variant == "neg_abs_p":
            return -a
        return np.zeros_like(u)


# ----------------------------------------------------------------- data

@dataclass(frozen=True)
class DataFamily:
    """Analytic initial profile: ``bump`` (C^infinity, compact) or ``gaussian``."""

    family: str = "bump"
    width: float = 1.0
    amplitude: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if self.family not in ("bump", "gaussian", "zero"):
            raise ConfigurationError(f"unknown data family {self.family!r}")
        if not self.width > 0:
            raise ConfigurationError("width must be positive")

    @property
    def support_radius(self) -> float:
        if self.family == "zero":
            return 0.0
        if self.family == "bump":
            return abs(self.center) + self.width
        # below 1e-17 of the peak beyond this radius
        return abs(self.center) + self.width * math.sqrt(17 * math.log(10))

    def __call__(self, x):
        z = (np.asarray(x, dtype=float) - self.center) / self.width
        if self.family == "zero":
            return np.zeros_like(z)
        if self.family == "gaussian":
            return self.amplitude * np.exp(-z * z)
        out = np.zeros_like(z)
        inside = np.abs(z) < 1.0
        out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - z[inside] ** 2))
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DataFamily":
        return cls(family=d.get("family", "bump"), width=float(d.get("width", 1.0)),
                   amplitude=float(d.get("amplitude", 1.0)), center=float(d.get("center", 0.0)))

    def to_dict(self) -> dict:
        return {"family": self.family, "width": self.width, "amplitude": self.amplitude,
                "center": self.center}


# ----------------------------------------------------------------- state

@dataclass(eq=False)
class WaveState:
    grid: Grid
    u: np.ndarray
    ut: np.ndarray
    t: float = 0.0
    geometry: str = "radial"
    alive: bool = True
    diagnostic: str = ""
    window: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def radial(self) -> bool:
        return self.grid.radial

    def copy(self) -> "WaveState":
        return replace(self, u=self.u.copy(), ut=self.ut.copy(),
                       window=None if self.window is None else self.window.copy())

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.u)))

    def energy(self) -> float:
        """Discrete energy (1/2) int u_t^2 + |grad u|^2 with one-sided differences."""
        g = self.grid
        dx = g.dx
        kin = 0.5 * g.integrate(self.ut**2)
        if self.geometry == "periodic":
            du = np.diff(np.append(self.u, self.u[0]))
            return kin + 0.5 * float(np.sum(du**2)) / dx
        du = np.diff(self.u)
        if g.radial:
            from .grid import sphere_area
            rm = 0.5 * (g.nodes[1:] + g.nodes[:-1])
            return kin + 0.5 * sphere_area(g.n) * float(np.sum(rm ** (g.n - 1) * du**2)) / dx
        return kin + 0.5 * float(np.sum(du**2)) / dx


def _full_window(n_nodes, geometry):
    if geometry == "periodic":
        return np.array([0, n_nodes - 1], dtype=np.int64)
    if geometry == "dirichlet":
        return np.array([1, n_nodes - 2], dtype=np.int64)
    return np.array([0, n_nodes - 2], dtype=np.int64)


def init_state(n: int, radial: bool, a0, a1, eps: float, L: float, dx: float,
               horizon: float | None = None, support_radius: float | None = None,
               geometry: str | None = None) -> WaveState:
    """Sample u = eps a0, u_t = eps a1 on a uniform grid.

    ``a0``, ``a1`` are callables of the radius (radial) or of x (line). When
    a horizon is given the domain must contain the light cone of the data,
    L >= support_radius + horizon + 2 dx.
    """
    geometry = geometry or ("radial" if radial else "dirichlet")
    if radial and geometry != "radial":
        raise ConfigurationError("radial grids use the radial geometry")
    if horizon is not None and geometry != "periodic":
        if support_radius is None:
            support_radius = max(getattr(a0, "support_radius", 0.0),
                                 getattr(a1, "support_radius", 0.0))
        if L < support_radius + horizon + 2 * dx:
            raise ConfigurationError(
                f"domain L = {L} too small for support {support_radius} + horizon {horizon}")
    if geometry == "periodic":
        m = int(round(2 * L / dx))
        nodes = -L + dx * np.arange(m)
        grid = Grid(nodes=nodes, n=1, radial=False)
    else:
        grid = Grid.uniform(n, radial, L, dx)
    u = eps * np.asarray(a0(grid.nodes), dtype=float)
    ut = eps * np.asarray(a1(grid.nodes), dtype=float)
    if geometry != "periodic":
        u[-1] = ut[-1] = 0.0
        if geometry == "dirichlet":
            u[0] = ut[0] = 0.0
    state = WaveState(grid=grid, u=u, ut=ut, t=0.0, geometry=geometry)
    state.window = _initial_window(state)
    return state


def _initial_window(state: WaveState, pad: int = 32) -> np.ndarray:
    full = _full_window(state.u.size, state.geometry)
    if state.geometry == "periodic":
        return full
    mag = np.abs(state.u) + np.abs(state.ut)
    nz = np.nonzero(mag > 0)[0]
    if nz.size == 0:
        return np.array([full[0], min(full[1], full[0] + pad)], dtype=np.int64)
    lo = max(full[0], nz[0] - pad) if state.geometry == "dirichlet" else 0
    hi = min(full[1], nz[-1] + pad)
    return np.array([lo, hi], dtype=np.int64)


# ----------------------------------------------------------------- stepping

@dataclass(frozen=True)
class SolverControls:
    cfl: float = 0.5
    cap: float = 1e8
    growth_max: float = 1.1
    output_dt: float | None = None
    n_outputs: int = 400
    snapshot_times: tuple = ()
    damping_stability: float = 2.0
    window_tol: float = 1e-18
    hist_decades: float = 2.0
    hist_size: int = 200_000
    dt_min_rel: float = 1e-15
    cutoff: CutoffSpec | None = None
    A_const: float = 0.0


class _Workspace:
    def __init__(self, m):
        self.arrays = [np.zeros(m) for _ in range(8)]


def _damping_args(damping: DampingSpec):
    if damping.kind == "power_law":
        return 0, damping.b0, damping.beta, np.zeros(2), np.zeros((4, 1))
    pp = damping._interp
    return 1, 0.0, 0.0, np.ascontiguousarray(pp.x), np.ascontiguousarray(pp.c)


def _r_inv(grid: Grid):
    r = grid.nodes
    out = np.zeros_like(r)
    out[1:] = 1.0 / r[1:] if grid.radial else 0.0
    return out


def step(state: WaveState, damping: DampingSpec, nonlinearity: NonlinearityKind, dt: float,
         cfl: float = 0.5) -> WaveState:
    """Advance a copy of ``state`` by exactly one RK4 step of size dt."""
    if not state.alive:
        raise PreconditionError("state is dead: " + state.diagnostic)
    if dt > cfl * state.grid.dx * (1 + 1e-12):
        raise PreconditionError(f"dt = {dt} exceeds CFL limit {cfl * state.grid.dx}")
    new = state.copy()
    m = new.u.size
    ws = _Workspace(m)
    un, vn, ku, kv, uu, vv, au, av = ws.arrays
    window = _full_window(m, new.geometry)
    bkind, b0, beta, bx, bc = _damping_args(damping)
    sup = K.rk4_step(new.u, new.ut, un, vn, ku, kv, uu, vv, au, av, int(window[0]),
                     int(window[1]), _GEOM[new.geometry], new.n, new.grid.dx, _r_inv(new.grid),
                     new.t, dt, VARIANTS[nonlinearity.variant], float(nonlinearity.p),
                     bkind, b0, beta, bx, bc)
    if sup != sup:
        new.alive = False
        new.diagnostic = f"non-finite values after step at t={state.t}"
        return new
    lo, hi = int(window[0]), int(window[1])
    new.u[lo:hi + 1] = un[lo:hi + 1]
    new.ut[lo:hi + 1] = vn[lo:hi + 1]
    new.t = state.t + dt
    return new


# ----------------------------------------------------------------- traces

@dataclass(eq=False)
class AverageTrace:
    """Sampled diagnostics along a run.

    ``I_phi`` is int u psi^ell and ``dI_phi`` is int u_t psi^ell; ``J_phi``
    subtracts the constant A. ``envelope`` and ``margin`` are filled by
    :func:`verify_rate_envelope`.
    """

    times: np.ndarray
    sup_norm: np.ndarray
    energy: np.ndarray
    I_phi: np.ndarray
    dI_phi: np.ndarray
    J_phi: np.ndarray
    damping_work: np.ndarray = None
    source_work: np.ndarray = None
    envelope: np.ndarray = None
    margin: np.ndarray = None

    def columns(self) -> dict:
        nan = np.full(self.times.size, np.nan)
        return {
            "t": self.times, "sup_norm": self.sup_norm, "energy": self.energy,
            "I_phi": self.I_phi, "J_phi": self.J_phi,
            "envelope": self.envelope if self.envelope is not None else nan,
            "margin": self.margin if self.margin is not None else nan,
        }


@dataclass(eq=False)
class Snapshot:
    t: float
    nodes: np.ndarray
    u: np.ndarray
    ut: np.ndarray


@dataclass(eq=False)
class LifespanResult:
    report: BlowupReport
    trace: AverageTrace
    snapshots: list
    state: WaveState
    history: np.ndarray


def _diagnostics(state: WaveState, psi_l, weights, damping, nonlinearity):
    w = weights
    u, ut = state.u, state.ut
    I = float(w @ (psi_l * u))
    dI = float(w @ (psi_l * ut))
    b = float(damping.b(state.t))
    dw = b * float(w @ (ut * ut))
    sw = float(w @ (nonlinearity(u) * ut))
    return state.sup_norm(), state.energy(), I, dI, dw, sw


def run_lifespan(state: WaveState, damping: DampingSpec, nonlinearity: NonlinearityKind,
                 horizon: float, controls: SolverControls | None = None) -> LifespanResult:
    """Integrate until sup|u| crosses the cap, the step collapses, or t = horizon.

    Diagnostics are sampled at uniform output times and at requested snapshot
    times (landed on exactly). The blow-up time is extrapolated from the
    recorded sup-norm history by an anchored power-law fit over its last decade.
    """
    controls = controls or SolverControls()
    if not state.alive:
        raise PreconditionError("state is dead: " + state.diagnostic)
    st = state.copy()
    if st.window is None:
        st.window = _initial_window(st)
    grid = st.grid
    m = st.u.size
    ws = _Workspace(m)
    un, vn, ku, kv, uu, vv, au, av = ws.arrays
    r_inv = _r_inv(grid)
    geom = _GEOM[st.geometry]
    variant = VARIANTS[nonlinearity.variant]
    bkind, b0, beta, bx, bc = _damping_args(damping)
    dt_base = controls.cfl * grid.dx
    dt = dt_base
    dt_min = controls.dt_min_rel * horizon
    weights = grid.weights()
    if controls.cutoff is not None:
        psi_l = controls.cutoff.radial(grid.radius)[0] ** controls.cutoff.ell
    else:
        psi_l = np.ones(m)

    out_dt = controls.output_dt or horizon / controls.n_outputs
    n_out = int(math.floor(horizon / out_dt + 1e-9))
    out_times = np.union1d(out_dt * np.arange(1, n_out + 1),
                           np.asarray(controls.snapshot_times, dtype=float))
    out_times = out_times[(out_times > st.t) & (out_times <= horizon)]
    if out_times.size == 0 or out_times[-1] < horizon:
        out_times = np.append(out_times, horizon)
    snap_set = set(float(s) for s in controls.snapshot_times)

    rows = [(st.t,) + _diagnostics(st, psi_l, weights, damping, nonlinearity)]
    snapshots = []
    if st.t in snap_set:
        snapshots.append(Snapshot(st.t, grid.nodes.copy(), st.u.copy(), st.ut.copy()))
    sup0 = max(st.sup_norm(), 1e-300)
    hist = np.zeros((controls.hist_size, 3))
    hist_n = 0
    hist_thresh = controls.cap * 10.0 ** (-controls.hist_decades)
    status = K.OK_END
    t_prev = st.t
    k = 0
    while k < out_times.size:
        t_end = float(out_times[k])
        t, dt, status, steps, hist_n, t_prev_chunk = K.advance(
            st.u, st.ut, un, vn, ku, kv, uu, vv, au, av, r_inv, st.window, geom, st.n,
            grid.dx, st.t, t_end, dt, dt_base, variant, float(nonlinearity.p), bkind, b0, beta,
            bx, bc, controls.cap, controls.growth_max, dt_min, controls.damping_stability,
            10**9, controls.window_tol, hist, hist_n, hist_thresh)
        if steps > 0:
            t_prev = t_prev_chunk
        st.t = t
        if status != K.OK_END:
            break
        rows.append((st.t,) + _diagnostics(st, psi_l, weights, damping, nonlinearity))
        if t_end in snap_set:
            snapshots.append(Snapshot(st.t, grid.nodes.copy(), st.u.copy(), st.ut.copy()))
        _shrink_window(st, controls.window_tol)
        k += 1

    if status == K.CAP:
        rows.append((st.t,) + _diagnostics(st, psi_l, weights, damping, nonlinearity))
    arr = np.array(rows)
    trace = AverageTrace(times=arr[:, 0], sup_norm=arr[:, 1], energy=arr[:, 2], I_phi=arr[:, 3],
                         dI_phi=arr[:, 4], J_phi=arr[:, 3] - controls.A_const,
                         damping_work=arr[:, 5], source_work=arr[:, 6])
    history = hist[:hist_n].copy()

    if status == K.CAP:
        report = _blowup_report(history, t_prev, st.t, nonlinearity.p, dt_base)
    elif status == K.OK_END:
        report = BlowupReport(st.t, st.t, math.nan, math.nan, math.nan, HORIZON, dt_base)
    elif status == K.COLLAPSE:
        report = BlowupReport(st.t, st.t, math.nan, math.nan, math.nan, STEP_COLLAPSE, dt_base,
                              f"step fell below {dt_min:.3g} at t={st.t:.17g}")
    else:
        st.alive = False
        st.diagnostic = f"non-finite field values near t={st.t:.17g}"
        report = BlowupReport(st.t, st.t, math.nan, math.nan, math.nan, DEAD, dt_base,
                              st.diagnostic)
    return LifespanResult(report=report, trace=trace, snapshots=snapshots, state=st,
                          history=history)


def _shrink_window(st: WaveState, tol: float, pad: int = 32):
    if st.geometry == "periodic":
        return
    lo, hi = int(st.window[0]), int(st.window[1])
    seg = np.abs(st.u[lo:hi + 1]) + np.abs(st.ut[lo:hi + 1])
    sup = float(seg.max()) if seg.size else 0.0
    if sup == 0:
        return
    big = np.nonzero(seg > tol * sup)[0]
    new_hi = min(hi, lo + int(big[-1]) + pad)
    if new_hi < hi:
        st.u[new_hi + 1:hi + 1] = 0.0
        st.ut[new_hi + 1:hi + 1] = 0.0
        st.window[1] = new_hi
    if st.geometry == "dirichlet":
        new_lo = max(lo, lo + int(big[0]) - pad)
        if new_lo > lo:
            st.u[lo:new_lo] = 0.0
            st.ut[lo:new_lo] = 0.0
            st.window[0] = new_lo


def _blowup_report(history, t_last, t_thr, p, base_step) -> BlowupReport:
    q = 2.0 / (p - 1.0)
    h = history
    if h.shape[0] >= 2:
        # drop duplicate times
        keep = np.concatenate([[True], np.diff(h[:, 0]) > 0])
        h = h[keep]
    sel = h[h[:, 1] >= h[-1, 1] / 10.0] if h.shape[0] else h
    if sel.shape[0] < 3:
        sel = h[-min(h.shape[0], 8):]
    if sel.shape[0] < 3:
        return BlowupReport(t_last, t_thr, t_thr, t_thr - t_last, math.nan, THRESHOLD,
                            base_step, "too few samples near blow-up for a fit")
    fit = fit_power_blowup(sel[:, 0], sel[:, 1], q, t_tail=float(sel[-1, 0]),
                           y_tail=float(sel[-1, 1]), dy_tail=float(sel[-1, 2]))
    est, unc = estimate_from_fit(fit, t_last, t_thr, base_step)
    return BlowupReport(t_last, t_thr, est, unc, fit.q_free, THRESHOLD, base_step)


# ----------------------------------------------------------------- envelope

@dataclass(frozen=True)
class EnvelopeReport:
    min_margin: float
    holds: bool
    t_singular: float
    mu: float
    A1: float
    checked_until: float
    envelope: np.ndarray = field(repr=False, default=None)


def verify_rate_envelope(trace: AverageTrace, constants, profile: BProfile,
                         form: str = "average", eps: float | None = None,
                         until: float | None = None, rel_tol: float = 1e-9) -> EnvelopeReport:
    """Compare the sampled average with its lower blow-up envelope.

    ``form="average"``: J(t) >= J(0) (1 - mu(A1) Jt(0)^(p-1) B(t))^(-2/(p-1)),
    with A1 = I'(0)/J(0) and Jt(0) = 2^(-1/(p-1)) J(0) / ||phi^ell||.
    ``form="scaled"``: I(t) >= (eps/4) I0 (1 - mu0 eps^kappa B(t))^(-2/(p-1)).

    Rows beyond ``until`` (default: all) are ignored. ``holds`` means the
    minimal margin is above -rel_tol times the local magnitude.
    """
    if trace.times.size == 0:
        raise PreconditionError("empty trace")
    p = constants.p
    t = trace.times
    sel = np.ones(t.size, dtype=bool) if until is None else t <= until
    B = np.asarray(profile.B(t), dtype=float)
    if form == "average":
        J0 = float(trace.J_phi[0])
        if not J0 > 0:
            raise PreconditionError("J_phi(0) must be positive")
        A1 = float(trace.dI_phi[0]) / J0
        mu = compute_mu(p, constants.damping, constants.damping.beta, A1)
        Jt0 = 2.0 ** (-1.0 / (p - 1.0)) * J0 / constants.phi_ell_norm
        rate = mu * Jt0 ** (p - 1.0)
        base = J0
        lhs = trace.J_phi
    elif form == "scaled":
        from .cutoff import rate_exponent
        A1 = math.nan
        mu = constants.mu0
        rate = constants.mu0 * eps ** rate_exponent(constants.n, p)
        base = 0.25 * eps * constants.I0
        lhs = trace.I_phi
    else:
        raise ValueError(f"unknown envelope form {form!r}")
    X = 1.0 - rate * B
    with np.errstate(divide="ignore", invalid="ignore"):
        env = np.where(X > 0, base * X ** (-2.0 / (p - 1.0)), np.inf)
    margin = lhs - env
    scale = np.maximum(np.abs(lhs), np.abs(base))
    ok = margin[sel] >= -rel_tol * scale[sel]
    t_sing = float(profile.B_inverse(1.0 / rate)) if rate > 0 else math.inf
    trace.envelope = env
    trace.margin = margin
    return EnvelopeReport(min_margin=float(np.min(margin[sel])), holds=bool(np.all(ok)),
                          t_singular=t_sing, mu=mu, A1=A1,
                          checked_until=float(t[sel][-1]), envelope=env)
