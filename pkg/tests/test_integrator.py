import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad, solve_ivp

from polylab.errors import InvalidSpec, OutOfRange, TailNotIntegrable
from polylab.integrator import (
    IntegrationControls,
    Termination,
    TerminationKind,
    evaluate,
    evaluate_u,
    integrate,
    quadrature_weighted,
    synthetic_trajectory,
    weighted_integral,
)
from polylab.radial_system import N4_BETA0, ProblemSpec, closed_form_n4, closed_form_n4_state, make_rhs, taylor_start


def reference(spec, r_end, rtol=1e-13):
    s = taylor_start(spec)
    return solve_ivp(make_rhs(spec), (s.r, r_end), s.y, method="DOP853", rtol=rtol, atol=1e-14, dense_output=True)


@pytest.mark.parametrize("spec,r_end", [
    (ProblemSpec.exponential(3, -2.0), 20.0),
    (ProblemSpec.exponential(5, -3.0, 0.3), 15.0),
    (ProblemSpec(4, 2, __import__("polylab").Exp(), (0.0, -1.0, 0.5, -2.0)), 6.0),
    (ProblemSpec.negative_power(3, 2.0, 1.0, 4.0), 50.0),
])
def test_matches_scipy_dop853(spec, r_end):
    traj = integrate(spec, IntegrationControls(r_max=r_end))
    assert traj.termination.kind is TerminationKind.REACHED_HORIZON
    ref = reference(spec, r_end)
    for r in np.linspace(0.5, r_end, 23):
        got = evaluate(traj, float(r)).y
        want = ref.sol(r)
        assert np.allclose(got, want, rtol=1e-7, atol=1e-8)


def test_closed_form_profile():
    traj = integrate(ProblemSpec.exponential(4, N4_BETA0), IntegrationControls(r_max=10.0))
    rs = np.linspace(traj.r_first, 10.0, 200)
    err = np.max(np.abs(evaluate_u(traj, rs) - closed_form_n4(rs)))
    assert err < 1e-7


def test_blowup_event_and_fit():
    traj = integrate(ProblemSpec.exponential(3, 0.0), IntegrationControls(r_max=40.0))
    assert traj.termination.kind is TerminationKind.BLOWUP
    R = traj.termination.radius
    assert 5.0 < R < 6.0
    assert traj.r_last == R
    # u' ~ 4 / (R - r) near the event, so a small radius tolerance shows up in u
    assert traj.u[-1] == pytest.approx(traj.controls.u_max, abs=1e-2)
    # raising the threshold barely moves the event radius
    t2 = integrate(ProblemSpec.exponential(3, 0.0), IntegrationControls(r_max=40.0, u_max=60.0))
    assert abs(t2.termination.radius - R) < 1e-2 * R


def test_extinction_event():
    traj = integrate(ProblemSpec.negative_power(3, 1.0, 1.0, -1.0), IntegrationControls(r_max=50.0))
    assert traj.termination.kind is TerminationKind.EXTINCT
    assert traj.r_last == traj.termination.radius
    assert traj.u[-1] == pytest.approx(traj.controls.u_min, abs=1e-9)
    assert np.all(np.diff(traj.r) > 0)


def test_step_limit_is_reported():
    traj = integrate(ProblemSpec.exponential(3, -2.0), IntegrationControls(r_max=40.0, max_steps=5))
    assert traj.termination.kind is TerminationKind.STEP_LIMIT


def test_outputs_read_only_and_errors_recorded():
    traj = integrate(ProblemSpec.exponential(3, -2.0), IntegrationControls(r_max=10.0))
    with pytest.raises(ValueError):
        traj.y[0, 0] = 1.0
    assert traj.error_estimates.shape == traj.r.shape
    assert np.all(traj.error_estimates[1:] <= 1.0)
    with pytest.raises(OutOfRange):
        evaluate(traj, 11.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-8.0, -0.5), st.sampled_from([3, 4, 5]))
def test_dense_output_hits_nodes(beta, N):
    traj = integrate(ProblemSpec.exponential(N, beta), IntegrationControls(r_max=8.0))
    idx = np.linspace(0, len(traj.r) - 1, 7).astype(int)
    for i in idx:
        assert np.allclose(traj.interpolant(float(traj.r[i])), traj.y[i], rtol=1e-12, atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.floats(-6.0, 2.0))
def test_deterministic(beta):
    spec = ProblemSpec.exponential(3, beta)
    a = integrate(spec, IntegrationControls(r_max=10.0))
    b = integrate(spec, IntegrationControls(r_max=10.0))
    assert np.array_equal(a.r, b.r) and np.array_equal(a.y, b.y)


def test_controls_validation():
    for kw in (dict(rtol=0), dict(atol=-1), dict(r_max=0), dict(r0=0.1), dict(max_steps=0)):
        with pytest.raises(InvalidSpec):
            IntegrationControls(**kw)
    c = IntegrationControls()
    assert IntegrationControls.from_dict(c.to_dict()) == c
    assert c.tightened(10).rtol == pytest.approx(c.rtol / 10)


def test_termination_dict_round_trip():
    t = Termination(TerminationKind.BLOWUP, 5.25, {"kappa": 4.0})
    assert Termination.from_dict(t.to_dict()) == t


# --- quadrature -------------------------------------------------------------

def test_weighted_integral_against_scipy_quad():
    traj = integrate(ProblemSpec.exponential(3, -2.0), IntegrationControls(r_max=20.0))
    for k in (0, 2, 4):
        got, err = weighted_integral(traj, k, 0.3, 17.0)
        want = quad(lambda t: t**k * math.exp(evaluate(traj, t).u), 0.3, 17.0, limit=400, epsabs=0, epsrel=1e-12)[0]
        assert got == pytest.approx(want, rel=1e-9)
        assert err < 1e-6 * abs(want)


def test_gamma_integrals_on_linear_profile():
    # u = -r: int_0^inf t^k e^{-t} dt = k!
    radii = np.geomspace(1e-4, 60.0, 3000)
    tr = synthetic_trajectory(ProblemSpec.exponential(3, 0.0), lambda r: (-r, -1.0, -2.0 / r, 2.0 / (r * r)), radii)
    for k in (1, 2, 3, 4):
        q = quadrature_weighted(tr, k)
        assert q.value == pytest.approx(math.factorial(k), abs=1e-9)
        assert q.tail_model == "exponential"


def test_beta_integral_on_closed_form():
    # int_0^inf t^3 (1 + c t^2)^{-4} dt = 1 / (12 c^2) = 32 for c = 1/(8 sqrt 6)
    radii = np.geomspace(1e-4, 4000.0, 2000)
    tr = synthetic_trajectory(ProblemSpec.exponential(4, N4_BETA0), lambda r: closed_form_n4_state(r).y, radii)
    q = quadrature_weighted(tr, 3, tail="power")
    assert q.value == pytest.approx(32.0, abs=1e-8)
    assert q.error_bound >= abs(q.value - 32.0)


def test_tail_not_integrable():
    radii = np.geomspace(1e-4, 50.0, 400)
    tr = synthetic_trajectory(ProblemSpec.exponential(3, 0.0), lambda r: (-math.log1p(r), 0.0, 0.0, 0.0), radii)
    with pytest.raises(TailNotIntegrable):
        quadrature_weighted(tr, 2, tail="power")


def test_quadrature_needs_horizon():
    traj = integrate(ProblemSpec.exponential(3, 0.0), IntegrationControls(r_max=40.0))
    with pytest.raises(InvalidSpec):
        quadrature_weighted(traj, 2)


def test_synthetic_guards():
    spec = ProblemSpec.exponential(3, 0.0)
    with pytest.raises(InvalidSpec):
        synthetic_trajectory(spec, lambda r: (0, 0, 0, 0), [1.0, 1.0])
    with pytest.raises(InvalidSpec):
        synthetic_trajectory(spec, lambda r: (0, 0), [1.0, 2.0])
