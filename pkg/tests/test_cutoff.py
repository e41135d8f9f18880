import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blowup_lab.cutoff import (
    CutoffSpec,
    check_data_conditions,
    compute_A,
    compute_mu,
    compute_mu0_and_bound,
    compute_R_eps,
    default_ell,
    eval_cutoff,
    eval_Phi,
    find_eps0,
    profile_derivatives,
    psi_ell_norm,
    rate_exponent,
)
from blowup_lab.damping import BProfile, DampingSpec, exact_constants
from blowup_lab.errors import ConfigurationError, InfeasibleError, PreconditionError
from blowup_lab.grid import Grid


def bump(r, width=1.0, amp=1.0):
    r = np.asarray(r, dtype=float) / width
    out = np.zeros_like(r)
    inside = r < 1
    out[inside] = amp * np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


# ---------------------------------------------------------------- profile

def test_profile_flat_core_and_outside():
    assert eval_cutoff(CutoffSpec(5, 1.0), 0.5)[0] == 1.0
    v, g, lap = eval_cutoff(CutoffSpec(5, 1.0), 0.5)
    assert (float(g[0]), lap) == (0.0, 0.0)
    v, g, lap = eval_cutoff(CutoffSpec(5, 1.0), 3.0)
    assert (v, float(g[0]), lap) == (0.0, 0.0, 0.0)


def test_dilation_identity():
    a = eval_cutoff(CutoffSpec(5, 2.0), 2.9)[0]
    b = eval_cutoff(CutoffSpec(5, 1.0), 1.45)[0]
    assert a == b


def test_profile_monotone_and_bounded():
    r = np.linspace(0, 3, 3001)
    v, d1, _ = profile_derivatives(r)
    assert np.all((v >= 0) & (v <= 1))
    mid = (r > 1.02) & (r < 1.98)
    assert np.all(d1[mid] < 0) and np.all(d1 <= 0)
    assert np.all(np.diff(v) <= 0)


def test_profile_derivatives_match_finite_differences():
    r = np.linspace(1.05, 1.95, 37)
    h = 1e-5
    v, d1, d2 = profile_derivatives(r)
    vp, _, _ = profile_derivatives(r + h)
    vm, _, _ = profile_derivatives(r - h)
    assert np.allclose((vp - vm) / (2 * h), d1, rtol=1e-6, atol=1e-8)
    assert np.allclose((vp - 2 * v + vm) / h**2, d2, rtol=1e-4, atol=1e-4)


def test_second_derivative_continuous_at_junctions():
    for r0 in (1.0, 2.0):
        jumps = []
        for h in (1e-2, 5e-3, 2.5e-3):
            d2 = profile_derivatives(np.array([r0 - h, r0 + h]))[2]
            jumps.append(abs(d2[1] - d2[0]))
        # flat junctions: the jump vanishes faster than any power of h
        assert jumps[-1] <= jumps[0] and jumps[-1] < 1e-6


@pytest.mark.parametrize("n", [1, 2, 3])
def test_laplacian_identity_random_points(n):
    """Laplacian of psi^ell equals Phi psi^(ell-2), via a radial FD oracle."""
    spec = CutoffSpec(ell=6, R=1.3, n=n)
    rng = np.random.default_rng(n)
    rho = rng.uniform(1.3 * 1.02, 1.3 * 1.98, 1000)
    errs = []
    for h in (2e-3, 1e-3):
        f = lambda r: spec.radial(r)[0] ** spec.ell
        frr = (f(rho + h) - 2 * f(rho) + f(rho - h)) / h**2
        fr = (f(rho + h) - f(rho - h)) / (2 * h)
        lap = frr + (n - 1) / rho * fr
        exact = spec.Phi_radial(rho) * spec.radial(rho)[0] ** (spec.ell - 2)
        errs.append(np.max(np.abs(lap - exact)))
    assert errs[1] < errs[0] / 3.5  # second order
    assert errs[1] < 1e-3 * np.max(np.abs(exact))


def test_Phi_zero_off_transition():
    spec = CutoffSpec(ell=5, R=1.0)
    assert eval_Phi(spec, 0.3) == 0.0
    assert eval_Phi(spec, 2.5) == 0.0


def test_eval_cutoff_vector_point():
    spec = CutoffSpec(ell=5, R=1.0, n=3)
    x = np.array([0.8, 0.9, 0.4])
    v, g, lap = eval_cutoff(spec, x)
    rho = np.linalg.norm(x)
    v1, g1, l1 = spec.radial(rho)
    assert v == pytest.approx(float(v1))
    assert np.allclose(g, float(g1) * x / rho)


# ---------------------------------------------------------------- A constant

A_STAR = compute_A(1, 2.0, 5, CutoffSpec(5, 1.0, 1))


def composite_A(n, p, ell, R, m):
    """Composite Simpson oracle for A on m subintervals of [R, 2R]."""
    spec = CutoffSpec(ell, R, n)
    pp = p / (p - 1)
    r = np.linspace(R, 2 * R, m + 1)
    v = spec.radial(r)[0]
    Phi = spec.Phi_radial(r)
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(v > 0, np.abs(Phi) ** pp * np.where(v > 0, v, 1) ** (ell - 2 * pp), 0.0)
    w = np.ones(m + 1)
    w[1:-1:2], w[2:-1:2] = 4, 2
    w *= (r[1] - r[0]) / 3
    omega = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    shell1 = omega * np.sum(w * f1 * r ** (n - 1))
    shell2 = omega * np.sum(w * v**ell * r ** (n - 1))
    norm = omega * R**n / n + shell2
    pref = 2 ** (pp - 1) * pp ** (-1 / p) * p ** ((1 - pp) / p)
    return pref * shell1 ** (1 / p) * norm ** (1 / pp)


def test_A_star_cross_checked_by_composite_rules():
    a1 = composite_A(1, 2.0, 5, 1.0, 4000)
    a2 = composite_A(1, 2.0, 5, 1.0, 8000)
    assert abs(a1 - a2) < 1e-6 * a2
    assert A_STAR == pytest.approx(a2, rel=1e-6)
    assert A_STAR > 0


@pytest.mark.parametrize("n, p", [(1, 2.0), (1, 2.5), (2, 1.5), (3, 1.3)])
@pytest.mark.parametrize("R", [0.5, 2.0, 10.0])
def test_A_scaling_law(n, p, R):
    ell = default_ell(p)
    base = compute_A(n, p, ell, CutoffSpec(ell, 1.0, n))
    pF = 1 + 2 / n
    scaled = compute_A(n, p, ell, CutoffSpec(ell, R, n))
    assert scaled == pytest.approx(base * R ** (n * (p - pF) / (p - 1)), rel=1e-6)


def test_A_scaling_three_decades():
    base = compute_A(1, 2.0, 6, CutoffSpec(6, 1.0, 1))
    for R in (0.1, 1.0, 10.0, 100.0):
        assert compute_A(1, 2.0, 6, CutoffSpec(6, R, 1)) == pytest.approx(base / R, rel=1e-6)


@pytest.mark.parametrize("ell", [5, 10])
def test_A_riemann_oracle(ell):
    a = compute_A(1, 2.0, ell, CutoffSpec(ell, 1.0, 1))
    m = 200000
    r = (np.arange(m) + 0.5) / m + 1.0
    spec = CutoffSpec(ell, 1.0, 1)
    v = spec.radial(r)[0]
    Phi = spec.Phi_radial(r)
    s1 = 2 * np.sum(np.abs(Phi) ** 2 * v ** (ell - 4)) / m
    s2 = 2 * (1 + np.sum(v**ell) / m)
    oracle = 2 * 2 ** -0.5 * 2 ** (-1 / 2) * s1**0.5 * s2**0.5
    assert a == pytest.approx(oracle, rel=1e-4)


def test_A_precondition():
    with pytest.raises(PreconditionError):
        compute_A(1, 2.0, 4, CutoffSpec(4, 1.0, 1))


# ---------------------------------------------------------------- mu

CONST_1 = exact_constants(DampingSpec.power_law(1.0, 0.0))


@pytest.mark.parametrize("A, expected", [(1.0, 1 / 8), (0.1, 0.05)])
def test_mu_examples(A, expected):
    assert compute_mu(2.0, CONST_1, 0.0, A) == pytest.approx(expected, rel=1e-15)


def test_mu_missing_constants():
    with pytest.raises(ConfigurationError):
        compute_mu(2.0, None, 0.0, 1.0)


@pytest.mark.parametrize("beta", [-1.0, -0.4, 0.0, 0.3, 1.0])
@pytest.mark.parametrize("p", [1.2, 2.0, 3.0])
def test_mu_range_and_monotone(beta, p):
    c = exact_constants(DampingSpec.power_law(0.7, beta))
    A = np.geomspace(1e-4, 1e4, 50)
    mu = np.array([compute_mu(p, c, beta, a) for a in A])
    assert np.all((mu > 0) & (mu <= 1))
    assert np.all(np.diff(mu) >= 0)


def test_mu_beta_minus_one_convention():
    c = exact_constants(DampingSpec.power_law(1.0, -1.0))
    # bracket = 2*3*1 + 2*(1 + 1) = 10
    assert compute_mu(2.0, c, -1.0, 1.0) == pytest.approx(0.1)


# ---------------------------------------------------------------- R(eps), data

def test_R_eps_homogeneity_and_identity():
    n, p, ell = 1, 2.0, 5
    R1 = compute_R_eps(0.1, 1.0, A_STAR, n, p, ell)
    R2 = compute_R_eps(0.05, 1.0, A_STAR, n, p, ell)
    assert R2 / R1 == pytest.approx(2 ** ((p - 1) / (n * (1 + 2 / n - p))), rel=1e-12)
    assert compute_A(n, p, ell, CutoffSpec(ell, R1, n)) == pytest.approx(0.025, rel=1e-6)


def test_R_eps_by_root_finding():
    from scipy.optimize import brentq
    R = compute_R_eps(0.1, 1.0, A_STAR, 1, 2.0, 5)
    root = brentq(lambda r: compute_A(1, 2.0, 5, CutoffSpec(5, r, 1)) - 0.025, 1.0, 1e5,
                  rtol=1e-12)
    assert R == pytest.approx(root, rel=1e-7)
    assert R == pytest.approx(4 * A_STAR / 0.1, rel=1e-12)


def test_R_eps_precondition():
    with pytest.raises(PreconditionError):
        compute_R_eps(0.1, 1.0, 1.0, 1, 3.0, 5)


GRID = Grid.uniform(1, True, 40.0, 1 / 64)


def test_compact_data_full_cutoff():
    a0 = bump(GRID.radius)
    eps0, R0 = find_eps0(a0, a0, GRID, 2.0)
    assert R0 >= 1
    rep = check_data_conditions(a0, a0, GRID, eps0, CutoffSpec(default_ell(2.0), R0, 1), 2.0)
    assert rep.cond3 and rep.cond4 and rep.cond41 and rep.cond2


def test_eps0_monotone_in_support():
    vals = []
    for width in (1.0, 3.0, 10.0, 30.0):
        a0 = bump(GRID.radius, width) / width
        vals.append(find_eps0(a0, a0, GRID, 2.0, rel_width=1e-4)[0])
    assert all(b <= a * (1 + 1e-3) for a, b in zip(vals, vals[1:]))


def test_eps0_bracket_is_tight():
    a0 = bump(GRID.radius, 25.0, amp=100.0)
    eps0, _ = find_eps0(a0, a0, GRID, 2.0)
    assert eps0 < 1
    ell = default_ell(2.0)
    A_ref = compute_A(1, 2.0, ell, CutoffSpec(ell, 1.0, 1))
    I0 = GRID.integrate(a0)

    def conds(eps):
        R = compute_R_eps(eps, I0, A_ref, 1, 2.0, ell)
        return check_data_conditions(a0, a0, GRID, eps, CutoffSpec(ell, R, 1), 2.0)

    assert conds(eps0).all_ok
    assert not conds(eps0 * 1.002).small_data_ok


def test_large_eps_breaks_cond41():
    a0 = bump(GRID.radius, 5.0, amp=50.0)
    ell = default_ell(2.0)
    A_ref = compute_A(1, 2.0, ell, CutoffSpec(ell, 1.0, 1))
    I0 = GRID.integrate(a0)
    eps = 1.0
    R = compute_R_eps(eps, I0, A_ref, 1, 2.0, ell)
    rep = check_data_conditions(a0, a0, GRID, eps, CutoffSpec(ell, R, 1), 2.0)
    assert not rep.cond41


def test_zero_mean_data_fails_cond2():
    x = GRID.radius
    a0 = bump(x, 2.0) - 0.5 ** 1 * bump(x, 4.0) * 2.0 ** 0  # not zero mean yet
    a0 = a0 - GRID.integrate(a0) / GRID.integrate(bump(x, 6.0)) * bump(x, 6.0)
    assert abs(GRID.integrate(a0)) < 1e-12
    rep = check_data_conditions(a0, bump(x), GRID, 0.01, CutoffSpec(6, 50.0, 1), 2.0)
    assert not rep.cond2


def test_infeasible_eps0():
    x = GRID.radius
    a0 = bump(x, 2.0)
    a1 = -bump(x, 2.0)
    with pytest.raises(PreconditionError):
        find_eps0(a0, a1, GRID, 2.0)


# ---------------------------------------------------------------- mu0 bound

def test_mu0_bound_scaling_beta0():
    prof = BProfile(DampingSpec.power_law(1.0, 0.0))
    ell = default_ell(2.0)
    spec1 = CutoffSpec(ell, 1.0, 1)
    b = compute_mu0_and_bound(2.0, 1, CONST_1, 1.0, 1.0, compute_A(1, 2.0, ell, spec1),
                              psi_ell_norm(spec1), prof)
    assert rate_exponent(1, 2.0) == 2.0
    eps = np.geomspace(1e-3, 1e-1, 9)
    slope = np.polyfit(np.log(eps), np.log(b.T_upper(eps)), 1)[0]
    assert slope == pytest.approx(-2.0, abs=1e-6)
    assert b.B_argument(0.05) / b.B_argument(0.1) == pytest.approx(4.0)


def test_mu0_bound_beta_minus_one_exponential():
    c = exact_constants(DampingSpec.power_law(1.0, -1.0))
    prof = BProfile(DampingSpec.power_law(1.0, -1.0))
    b = compute_mu0_and_bound(2.0, 1, c, 1.0, 1.0, 50.0, 2.5, prof)
    eps = np.array([40.0, 50.0, 60.0])
    logT = np.log(b.T_upper(eps))
    x = eps**-2 / b.mu0
    # log B^{-1}(tau) = b0 tau + log(1 - e^{-b0 tau}), affine in eps^-2 up to that tail
    assert np.allclose(logT, x + np.log(-np.expm1(-x)), rtol=1e-12)


def test_mu0_precondition():
    prof = BProfile(DampingSpec.power_law(1.0, 0.0))
    with pytest.raises(PreconditionError):
        compute_mu0_and_bound(3.0, 1, CONST_1, 1.0, 1.0, 1.0, 1.0, prof)


def test_mu0_formula_against_hand_derivation():
    """mu0 eps^kappa equals mu(2 I1/3I0) J~^{p-1} with J = eps I0 / 4 at R(eps)."""
    prof = BProfile(DampingSpec.power_law(1.0, 0.0))
    p, n, ell, I0, I1, eps = 2.0, 1, 6, 1.7, 0.9, 0.03
    spec1 = CutoffSpec(ell, 1.0, n)
    A1, N1 = compute_A(n, p, ell, spec1), psi_ell_norm(spec1)
    b = compute_mu0_and_bound(p, n, CONST_1, I0, I1, A1, N1, prof)
    R = compute_R_eps(eps, I0, A1, n, p, ell)
    Jt = 0.5 / psi_ell_norm(CutoffSpec(ell, R, n)) * (eps * I0 / 4)
    lhs = b.mu0 * eps ** rate_exponent(n, p)
    rhs = compute_mu(p, CONST_1, 0.0, 2 * I1 / (3 * I0)) * Jt ** (p - 1)
    assert lhs == pytest.approx(rhs, rel=1e-8)
