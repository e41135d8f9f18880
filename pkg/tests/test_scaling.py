import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from blowup_lab.damping import BProfile, DampingSpec
from blowup_lab.errors import CoverageError, PreconditionError, UnsupportedDimensionError
from blowup_lab.grid import Grid
from blowup_lab.pde import (
    DataFamily,
    NonlinearityKind,
    SolverControls,
    WaveState,
    init_state,
    run_lifespan,
)
from blowup_lab.scaling import (
    EnergyParams,
    ScaledState,
    check_e5est,
    decompose,
    energies_n1,
    energy_trace,
    from_scaling_vars,
    gaussian_profile,
    hardy_check,
    identity_convergence,
    psi0_moment,
    scaled_times,
    select_s0,
    to_scaling_vars,
    trace_from_snapshots,
    track_M,
    weighted_sobolev_norm2,
    y_grid,
)

D1 = DampingSpec.power_law(1.0, 0.0)
P1 = BProfile(D1)
NEG = NonlinearityKind("neg_abs_p", 2.0)
BUMP = DataFamily("bump", 1.0, 1.0)


# ----------------------------------------------------------------- phi_0

@pytest.mark.parametrize("n", [1, 2, 3])
def test_phi0_unit_mass(n):
    if n == 1:
        val = integrate.quad(lambda y: gaussian_profile(y, 1)[0], -np.inf, np.inf,
                             epsabs=0, epsrel=1e-13)[0]
    else:
        area = 2 * math.pi if n == 2 else 4 * math.pi
        val = integrate.quad(lambda r: area * r ** (n - 1) * gaussian_profile(r, n)[0], 0,
                             np.inf, epsabs=0, epsrel=1e-13)[0]
    assert abs(val - 1) < 1e-10


def test_phi0_at_origin():
    expected = float(1 / mpmath.sqrt(4 * mpmath.pi))
    assert gaussian_profile(0.0)[0] == pytest.approx(expected, rel=1e-15)
    assert gaussian_profile(0.0)[0] == pytest.approx(0.2820948, abs=1e-7)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_phi0_eigen_identity(n):
    rng = np.random.default_rng(7 + n)
    rho = rng.uniform(0.0, 12.0, 1000)
    phi, psi = gaussian_profile(rho, n)
    dphi = -0.5 * rho * phi
    # radial Laplacian of phi0 from an independent differentiation
    lap = np.array([float(mpmath.diff(lambda r: (4 * mpmath.pi) ** (-n / 2) * mpmath.exp(-r * r / 4), x, 2))
                    for x in rho[:50]])
    if n > 1:
        lap = lap + (n - 1) / rho[:50] * dphi[:50]
    assert np.allclose(psi[:50], lap, rtol=0, atol=1e-14)
    resid = psi + 0.5 * rho * dphi + 0.5 * n * phi
    assert np.max(np.abs(resid)) <= 1e-12


@pytest.mark.parametrize("n", [1, 3])
def test_psi0_moment_matches_derivative(n):
    rho = np.linspace(0.1, 8, 200)
    h = 1e-5
    d = (gaussian_profile(rho + h, n)[1] - gaussian_profile(rho - h, n)[1]) / (2 * h)
    assert np.allclose(psi0_moment(rho, n), rho * d, atol=1e-9)


# ----------------------------------------------------------------- transform

def _line_state(u, ut, t, dx=1 / 64, L=30.0):
    g = Grid.uniform(1, False, L, dx)
    return WaveState(grid=g, u=u(g.nodes), ut=ut(g.nodes), t=t, geometry="dirichlet")


def test_t0_identity():
    s = init_state(1, True, BUMP, BUMP, 0.5, 5.0, 1 / 32)
    yg = y_grid(1, 3.0, 1 / 32)
    sc = to_scaling_vars(s, P1, yg)
    assert sc.s == 0.0
    a = 0.5 * BUMP(yg.nodes)
    assert np.allclose(sc.v, a, atol=1e-6)
    assert np.allclose(sc.w, D1.b(0.0) * a, atol=1e-6)


@pytest.mark.parametrize("beta", [0.0, 0.5, -1.0])
def test_pure_dilation(beta):
    spec = DampingSpec.power_law(1.3, beta)
    prof = BProfile(spec)
    t = 3.0
    B1 = float(prof.B(t)) + 1
    b = float(spec.b(t))
    u = lambda x: B1**-0.5 * gaussian_profile(x / math.sqrt(B1))[0]
    ut = lambda x: gaussian_profile(x / math.sqrt(B1))[1] / (b * B1**1.5)
    sc = to_scaling_vars(_line_state(u, ut, t), prof, y_grid(1, 14.0, 1 / 16))
    phi, psi = gaussian_profile(sc.y)
    assert sc.s == pytest.approx(math.log(B1))
    assert np.max(np.abs(sc.v - phi)) < 1e-8
    assert np.max(np.abs(sc.w - psi)) < 1e-8


def test_round_trip_third_order():
    errs = []
    g = lambda x: np.exp(-x * x / 2)
    gt = lambda x: x * np.exp(-x * x / 2)
    for dx in (1 / 4, 1 / 8, 1 / 16):
        st_ = _line_state(g, gt, 2.0, dx=dx, L=20.0)
        sc = to_scaling_vars(st_, P1, y_grid(1, 11.0, dx))
        u, ut = from_scaling_vars(sc, st_.grid)
        errs.append(max(np.max(np.abs(u - st_.u)), np.max(np.abs(ut - st_.ut))))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 2.9)


def test_round_trip_radial():
    gauss = DataFamily("gaussian", 1.0, 1.0)
    s = init_state(1, True, gauss, gauss, 1.0, 20.0, 1 / 32)
    s.t = 1.5
    sc = to_scaling_vars(s, P1, y_grid(1, 12.0, 1 / 32))
    u, ut = from_scaling_vars(sc, s.grid)
    assert np.max(np.abs(u - s.u)) < 1e-5
    assert np.max(np.abs(ut - s.ut)) < 1e-5


def test_coverage_error():
    s = init_state(1, True, BUMP, BUMP, 1.0, 10.0, 1 / 32)
    with pytest.raises(CoverageError):
        to_scaling_vars(s, P1, y_grid(1, 0.5, 1 / 32))


def test_dimension_mismatch():
    s = init_state(2, True, BUMP, BUMP, 1.0, 10.0, 1 / 32)
    with pytest.raises(PreconditionError):
        to_scaling_vars(s, P1, y_grid(1, 5.0, 1 / 32))


# ----------------------------------------------------------------- decomposition

def _scaled(v, w, yg, s=0.0):
    return ScaledState(s=s, grid=yg, v=v, w=w, t_of_s=0.0, b_at_t=1.0, b_prime_at_t=0.0, B_at_t=0.0)


def test_pure_gaussian_mode():
    yg = y_grid(1, 14.0, 1 / 32)
    phi, psi = gaussian_profile(yg.nodes)
    dec = decompose(_scaled(2.5 * phi, 0.7 * phi + 2.5 * psi, yg), NonlinearityKind("none", 2.0))
    assert dec.alpha == pytest.approx(2.5, rel=1e-12)
    assert dec.alpha_prime == pytest.approx(0.7, rel=1e-12)
    assert np.max(np.abs(dec.f)) < 1e-14
    assert np.max(np.abs(dec.g)) < 1e-14
    assert np.max(np.abs(dec.F)) < 1e-13


@pytest.mark.parametrize("n", [1, 2, 3])
def test_zero_means(n):
    yg = y_grid(n, 14.0, 1 / 32)
    y = yg.nodes
    v = np.exp(-(y - 0.7) ** 2) * (1 + 0.3 * y) if n == 1 else np.exp(-y**2) * (1 + 0.3 * y)
    w = np.sin(y) * np.exp(-0.5 * y * y)
    dec = decompose(_scaled(v, w, yg, s=0.4), NEG)
    scale = yg.integrate(np.abs(v)) + yg.integrate(np.abs(w))
    assert abs(yg.integrate(dec.f)) <= 1e-9 * scale
    assert abs(yg.integrate(dec.g)) <= 1e-9 * scale
    assert abs(yg.integrate(dec.h_src)) <= 1e-9 * (scale + yg.integrate(np.abs(dec.r_src)))
    if n == 1:
        assert abs(dec.F[-1]) <= 1e-9 * scale
        assert abs(dec.G[-1]) <= 1e-9 * scale
        assert abs(dec.H_src[-1]) <= 1e-9 * (scale + yg.integrate(np.abs(dec.r_src)))
    else:
        assert dec.F is None


# ----------------------------------------------------------------- Hardy

def test_hardy_analytic():
    y = np.linspace(-40, 40, 400001)
    res = hardy_check(y * np.exp(-y * y / 2), y)
    assert res.lhs == pytest.approx(math.sqrt(math.pi), rel=1e-6)
    assert res.rhs == pytest.approx(3 * math.sqrt(math.pi), rel=1e-6)
    assert abs(res.lhs / res.rhs - 1 / 3) < 1e-6
    assert res.holds


def test_hardy_zero():
    y = np.linspace(-5, 5, 101)
    res = hardy_check(np.zeros_like(y), y)
    assert res.lhs == 0 and res.rhs == 0 and res.holds


def _random_compact(rng, y):
    f = np.zeros_like(y)
    for _ in range(rng.integers(1, 6)):
        c, w, a = rng.uniform(-6, 6), rng.uniform(0.2, 3), rng.normal()
        z = (y - c) / w
        inside = np.abs(z) < 1
        f[inside] += a * np.exp(1 - 1 / (1 - z[inside] ** 2))
    return f


def test_hardy_random_batch():
    rng = np.random.default_rng(11)
    y = np.linspace(-20, 20, 4001)
    assert all(hardy_check(_random_compact(rng, y), y).holds for _ in range(1000))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0.1, 3), st.floats(-10, 10)),
                min_size=1, max_size=5))
def test_hardy_property(bumps):
    y = np.linspace(-20, 20, 4001)
    f = sum(a * np.exp(-((y - c) / w) ** 2) for c, w, a in bumps)
    assert hardy_check(f, y).holds


# ----------------------------------------------------------------- energies

def _zero_dec(n=1):
    yg = y_grid(n, 6.0, 1 / 16)
    return decompose(_scaled(np.zeros(yg.size), np.zeros(yg.size), yg), NEG)


def test_zero_energies():
    row = energies_n1(_zero_dec())
    assert not row.E.any() and not row.L.any() and not row.R.any()


def test_delta_wiring():
    p = EnergyParams(lam=0.2)
    assert p.delta.tolist() == [0.5, 0.5, 0.5, 0.4, 0.0]
    assert p.C.tolist() == [100.0, 10.0, 1.0, 1.0, 1.0]


@pytest.mark.parametrize("kw", [dict(lam=0.0), dict(lam=0.3), dict(C0=5.0, C1=10.0), dict(C1=1.0)])
def test_energy_params_preconditions(kw):
    with pytest.raises(PreconditionError):
        EnergyParams(**kw)


def test_energies_reject_higher_dimension():
    with pytest.raises(UnsupportedDimensionError):
        energies_n1(_zero_dec(2))


def test_energy_alpha_terms():
    yg = y_grid(1, 14.0, 1 / 32)
    phi, psi = gaussian_profile(yg.nodes)
    dec = decompose(_scaled(2.0 * phi, 3.0 * phi + 2.0 * psi, yg, s=0.5),
                    NonlinearityKind("none", 2.0))
    row = energies_n1(dec, EnergyParams(lam=0.125))
    k = math.exp(-0.5)
    assert row.E[3] == pytest.approx(0.5 * k * 9 + math.exp(-0.125) * 4, rel=1e-10)
    assert row.E[4] == pytest.approx(2.0 + k * 6, rel=1e-10)
    assert row.L[3] == pytest.approx(9.0, rel=1e-10)
    assert abs(row.E[0]) < 1e-20 and abs(row.E[1]) < 1e-20


# ----------------------------------------------------------------- trajectory

def _trajectory(dx, ds, eps=0.1, T=20.0, lam=0.125):
    s_end = math.log1p(float(P1.B(T)))
    s, t = scaled_times(s_end, ds / 4, P1)
    st_ = init_state(1, True, DataFamily("zero"), BUMP, eps, T + 4, dx)
    r = run_lifespan(st_, D1, NEG, float(t[-1]),
                     SolverControls(snapshot_times=tuple(t), output_dt=1.0))
    assert r.report.reason == "horizon"
    return trace_from_snapshots(r.snapshots, st_.grid, "radial", P1, NEG,
                                y_grid(1, 14.0, 1 / 64), EnergyParams(lam=lam))


@pytest.fixture(scope="module")
def traj():
    return _trajectory(1 / 32, 0.08)


def test_trace_times_increasing(traj):
    assert np.all(np.diff(traj.s) > 0)
    assert traj.s[0] == 0.0
    assert np.isnan(traj.residuals[0]).all() and np.isnan(traj.residuals[-1]).all()


def test_identity_orders(traj):
    for c in identity_convergence(traj):
        assert c.order >= 1.9, c
        assert c.floor <= 1e-2 * c.scale, c


def test_e5_estimate_and_lower_bound(traj):
    chk = check_e5est(traj, 0.0, 2.0)
    assert chk.holds and chk.fitted_C > 0
    assert np.nanmin(chk.margin) >= -1e-12
    assert math.isfinite(chk.lower_C)


def test_e5_constant_stable_under_dx_refinement(traj):
    coarse = _trajectory(1 / 16, 0.08)
    c1 = check_e5est(coarse, 0.0, 2.0).fitted_C
    c2 = check_e5est(traj, 0.0, 2.0).fitted_C
    assert abs(c1 - c2) <= 0.2 * c2


def test_e5_zero_trace():
    decs = [_zero_dec() for _ in range(5)]
    for k, d in enumerate(decs):
        d.s = 0.1 * k
    tr = energy_trace(decs)
    chk = check_e5est(tr, 0.0, 2.0)
    assert chk.fitted_C == 0.0 and chk.holds
    assert select_s0(tr) == 0


def test_e5_too_short(traj):
    with pytest.raises(PreconditionError):
        check_e5est(traj.subsample(traj.s.size), 0.0, 2.0)


def test_e5_beta_minus_one_uses_large_rate(traj):
    a = check_e5est(traj, -1.0, 2.0, K=50.0).fitted_C
    b = check_e5est(traj, -1.0, 2.0, K=100.0).fitted_C
    assert b >= a


def test_M_tracker(traj):
    I0 = weighted_sobolev_norm2(np.zeros(11), np.ones(11), Grid.uniform(1, False, 1.0, 0.2))
    m = track_M(traj, 0.1, I0, 2.0)
    assert m.form == "subcritical" and m.holds and m.fitted_C0 > 0
    assert np.all(np.diff(m.M) >= 0)


def test_M_tracker_critical(traj):
    m = track_M(traj, 0.1, 1.0, 3.0)
    assert m.form == "critical" and m.holds and math.isfinite(m.fitted_C0)


def test_weighted_norm_gaussian():
    g = Grid.uniform(1, False, 30.0, 1 / 64)
    x = g.nodes
    a0 = np.exp(-x * x / 2)
    # int (1+x^2)(e^{-x^2} + x^2 e^{-x^2}) dx = sqrt(pi)(1 + 1/2 + 1/2 + 3/4);
    # the derivative is a second-order difference
    assert weighted_sobolev_norm2(a0, np.zeros_like(x), g) == pytest.approx(
        math.sqrt(math.pi) * 2.75, rel=1e-4)
