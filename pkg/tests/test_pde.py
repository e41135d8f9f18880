import math

import numpy as np
import pytest

from blowup_lab.cutoff import (
    BlowupConstantSet,
    CutoffSpec,
    check_data_conditions,
    compute_A,
    compute_mu,
    compute_mu0_and_bound,
    compute_R_eps,
    default_ell,
    find_eps0,
    psi_ell_norm,
)
from blowup_lab.damping import BProfile, DampingSpec, exact_constants
from blowup_lab.errors import ConfigurationError, PreconditionError
from blowup_lab.pde import (
    DataFamily,
    NonlinearityKind,
    SolverControls,
    init_state,
    run_lifespan,
    step,
    verify_rate_envelope,
)

BUMP = DataFamily("bump", 1.0, 1.0)
ZERO = DataFamily("zero")
D1 = DampingSpec.power_law(1.0, 0.0)
ABS2 = NonlinearityKind("abs_p", 2.0)
OFF = NonlinearityKind("none", 2.0)
NO_DAMPING = DampingSpec.tabulated([0.0, 100.0], [0.0, 0.0], [0.0, 0.0])


def test_zero_data_stays_zero():
    s = init_state(1, True, BUMP, BUMP, 0.0, 10.0, 1 / 32)
    assert not s.u.any() and not s.ut.any()
    r = run_lifespan(s, D1, ABS2, 2.0)
    assert r.report.reason == "horizon"
    assert not r.state.u.any()


def test_sup_of_initial_bump():
    s = init_state(1, True, BUMP, ZERO, 1.0, 10.0, 1 / 32)
    assert s.sup_norm() == pytest.approx(BUMP(s.grid.nodes).max())
    assert s.sup_norm() == 1.0


def test_domain_too_small():
    with pytest.raises(ConfigurationError):
        init_state(1, True, BUMP, BUMP, 1.0, 5.0, 1 / 32, horizon=10.0)


def test_sampling_error_second_order():
    fine = np.linspace(-1, 1, 20001)
    errs = []
    for dx in (1 / 16, 1 / 32, 1 / 64):
        s = init_state(1, False, BUMP, ZERO, 1.0, 3.0, dx)
        interp = np.interp(fine, s.grid.nodes, s.u)
        errs.append(np.sqrt(np.mean((interp - BUMP(fine)) ** 2)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_step_rejects_cfl_violation():
    s = init_state(1, True, BUMP, BUMP, 1.0, 10.0, 1 / 16)
    with pytest.raises(PreconditionError):
        step(s, D1, ABS2, 0.1)


def periodic_sine(dx):
    prof = lambda x: np.sin(np.pi * x)
    return init_state(1, False, prof, ZERO, 1.0, 1.0, dx, geometry="periodic")


def test_energy_conserved_periodic():
    errs = []
    for dx in (1 / 16, 1 / 32):
        s = periodic_sine(dx)
        e0 = s.energy()
        dt = 0.5 * dx
        for _ in range(int(round(1.0 / dt))):
            s = step(s, NO_DAMPING, OFF, dt)
        errs.append(abs(s.energy() - e0) / e0)
    assert errs[1] < 1e-5
    assert errs[1] < errs[0]


def test_damped_energy_nonincreasing():
    s = init_state(1, True, BUMP, BUMP, 1.0, 20.0, 1 / 32)
    r = run_lifespan(s, D1, OFF, 8.0, SolverControls(output_dt=0.05))
    assert np.all(np.diff(r.trace.energy) <= 1e-14)


def test_energy_identity_with_source():
    s = init_state(1, True, BUMP, BUMP, 0.5, 20.0, 1 / 64)
    r = run_lifespan(s, D1, ABS2, 3.0, SolverControls(output_dt=0.005))
    tr = r.trace
    dwork = np.concatenate([[0], np.cumsum(0.5 * np.diff(tr.times) * (tr.damping_work[1:] + tr.damping_work[:-1]))])
    swork = np.concatenate([[0], np.cumsum(0.5 * np.diff(tr.times) * (tr.source_work[1:] + tr.source_work[:-1]))])
    resid = tr.energy + dwork - tr.energy[0] - swork
    assert np.max(np.abs(resid)) < 1e-4 * (1 + tr.times[-1])


GAUSS = DataFamily("gaussian", 1.0, 1.0)


def _evolve(dx, dt, T, nl=OFF, damp=D1):
    s = init_state(1, True, GAUSS, GAUSS, 0.8, 8.0, dx)
    for _ in range(int(round(T / dt))):
        s = step(s, damp, nl, dt)
    return s


def test_spatial_order():
    T = 0.5
    sols = [_evolve(dx, dx / 8, T, ABS2) for dx in (1 / 16, 1 / 32, 1 / 64)]
    c = [s.u[:: 2**k] for k, s in enumerate(sols)]
    m = min(len(x) for x in c)
    e1 = np.max(np.abs(c[0][:m] - c[1][:m]))
    e2 = np.max(np.abs(c[1][:m] - c[2][:m]))
    assert np.log2(e1 / e2) >= 1.9


def test_temporal_order():
    T, dx = 0.5, 1 / 16
    sols = [_evolve(dx, dt, T, ABS2) for dt in (dx / 2, dx / 4, dx / 8)]
    e1 = np.max(np.abs(sols[0].u - sols[1].u))
    e2 = np.max(np.abs(sols[1].u - sols[2].u))
    assert np.log2(e1 / e2) >= 3.5


@pytest.mark.parametrize("n", [2, 3])
def test_radial_against_line(n):
    """Radial solver agrees with the n-d linear-wave solution shape: a constant
    initial state with zero velocity must stay constant inside the light cone."""
    const = lambda r: np.ones_like(np.asarray(r, dtype=float))
    s = init_state(n, True, const, ZERO, 1.0, 4.0, 1 / 32)
    s.u[-1] = 0.0
    for _ in range(16):
        s = step(s, NO_DAMPING, OFF, 1 / 64)
    inner = s.grid.nodes < 3.0
    assert np.allclose(s.u[inner], 1.0, atol=1e-13)


def test_finite_propagation():
    # the discrete stencil leaks a super-exponentially small tail past the cone
    T, leak = 4.0, []
    for dx in (1 / 32, 1 / 64):
        s = init_state(1, True, BUMP, BUMP, 0.5, 20.0, dx)
        r = run_lifespan(s, D1, ABS2, T)
        x = r.state.grid.nodes
        far = x > 1.0 + T + 1.0
        assert np.max(np.abs(r.state.u[far])) < 1e-15
        assert np.max(np.abs(r.state.ut[far])) < 1e-15
        leak.append(np.max(np.abs(r.state.u[x > 1.0 + T + 0.5])))
    assert leak[1] < 1e-3 * leak[0]


def test_neg_abs_small_data_no_blowup():
    s = init_state(1, True, BUMP, BUMP, 0.1, 60.0, 1 / 16)
    r = run_lifespan(s, D1, NonlinearityKind("neg_abs_p", 2.0), 50.0)
    assert r.report.reason == "horizon"


def test_window_matches_full_domain():
    s = init_state(1, True, BUMP, BUMP, 0.3, 40.0, 1 / 16)
    fast = run_lifespan(s, D1, ABS2, 35.0)
    full = run_lifespan(s, D1, ABS2, 35.0, SolverControls(window_tol=0.0))
    assert fast.report.reason == full.report.reason == "threshold"
    assert fast.report.t_estimate == pytest.approx(full.report.t_estimate, rel=1e-9)


def test_report_invariants_and_refinement():
    reps = []
    for dx in (1 / 32, 1 / 64):
        s = init_state(1, True, BUMP, BUMP, 0.5, 20.0, dx)
        r = run_lifespan(s, D1, ABS2, 15.0)
        rep = r.report
        assert rep.reason == "threshold"
        assert rep.t_last_finite <= rep.t_threshold <= 15.0
        assert rep.t_last_finite <= rep.t_estimate <= rep.t_threshold + rep.base_step
        assert rep.rate_exponent_fit == pytest.approx(2.0, rel=0.1)
        reps.append(rep.t_estimate)
    assert abs(reps[0] - reps[1]) < 0.02 * reps[1]


def test_output_spacing_does_not_change_estimate():
    # output times that are not multiples of the step must not stall the run;
    # the step sequence changes, so agreement is far below O(dx^2) but not exact
    s = init_state(1, True, BUMP, BUMP, 0.5, 60.0, 1 / 32)
    a = run_lifespan(s, D1, ABS2, 50.0).report
    b = run_lifespan(s, D1, ABS2, 50.0, SolverControls(output_dt=0.01)).report
    assert a.reason == b.reason == "threshold"
    assert b.t_estimate == pytest.approx(a.t_estimate, rel=1e-6)


def test_signed_variant_matches_abs_for_positive_solution():
    s = init_state(1, True, BUMP, BUMP, 0.5, 20.0, 1 / 32)
    a = run_lifespan(s, D1, ABS2, 15.0).report.t_estimate
    b = run_lifespan(s, D1, NonlinearityKind("signed_p", 2.0), 15.0).report.t_estimate
    assert a == pytest.approx(b, rel=1e-6)


class TestLifespanChecks:
    p, n = 2.0, 1

    def setup_method(self):
        self.ell = default_ell(self.p)
        self.cons = exact_constants(D1)
        self.prof = BProfile(D1)
        s = init_state(1, True, BUMP, BUMP, 1.0, 2.0, 1 / 64)
        self.grid = s.grid
        self.a = BUMP(self.grid.nodes)

    def _run(self, eps):
        g, a, ell, p = self.grid, self.a, self.ell, self.p
        spec1 = CutoffSpec(ell, 1.0, 1)
        A_ref, N1 = compute_A(1, p, ell, spec1), psi_ell_norm(spec1)
        I0 = g.integrate(a)
        R = compute_R_eps(eps, I0, A_ref, 1, p, ell)
        spec = CutoffSpec(ell, R, 1)
        conds = check_data_conditions(a, a, g, eps, spec, p)
        bound = compute_mu0_and_bound(p, 1, self.cons, I0, g.integrate(a), A_ref, N1, self.prof)
        s = init_state(1, True, BUMP, BUMP, eps, 60.0, 1 / 32)
        res = run_lifespan(s, D1, ABS2, 50.0,
                           SolverControls(cutoff=spec, A_const=conds.A_R, output_dt=0.01))
        cs = BlowupConstantSet(p=p, n=1, ell=ell, A_const=conds.A_R,
                               mu=compute_mu(p, self.cons, 0.0, conds.A1),
                               phi_ell_norm=conds.psi_norm, damping=self.cons,
                               mu0=bound.mu0, I0=I0, I1=I0)
        return conds, bound, res, cs

    def test_upper_bound_and_envelope(self):
        eps = 0.5
        conds, bound, res, cs = self._run(eps)
        assert conds.all_ok
        rep = res.report
        assert rep.reason == "threshold"
        assert rep.t_estimate <= bound.T_upper(eps)
        env = verify_rate_envelope(res.trace, cs, self.prof, until=0.95 * rep.t_threshold)
        assert res.trace.margin[0] == 0.0
        assert env.holds
        assert env.t_singular >= rep.t_estimate - rep.uncertainty
        env2 = verify_rate_envelope(res.trace, cs, self.prof, form="scaled", eps=eps,
                                    until=0.95 * rep.t_threshold)
        assert env2.holds

    def test_eps0_for_bump(self):
        eps0, R0 = find_eps0(self.a, self.a, self.grid, self.p)
        assert 0 < eps0 <= 1

    def test_empty_trace(self):
        from blowup_lab.pde import AverageTrace
        e = np.array([])
        with pytest.raises(PreconditionError):
            verify_rate_envelope(AverageTrace(e, e, e, e, e, e), None, self.prof)
