import math

import numpy as np
import pytest
import sympy as sp
from scipy.optimize import minimize_scalar

from polylab.asymptotics import (
    alphas_space_form,
    check_supersolution,
    coefficients_from_masses,
    correction_mode,
    expansion_coefficients,
    integral_representation_check,
    log_limit_check,
    log_limit_target,
    psi,
    psi_max,
    radial_mass_to_space,
    supersolution_margin,
    tail_residual,
)
from polylab.errors import InvalidSpec, NotSeparatrix
from polylab.integrator import IntegrationControls, integrate, synthetic_trajectory
from polylab.radial_system import ProblemSpec
from polylab.shooting import find_separatrix


@pytest.fixture(scope="module")
def sep3():
    return find_separatrix(3, 100.0, 1e-8)


@pytest.fixture(scope="module")
def report(sep3):
    return expansion_coefficients(sep3.witness_lo, sep3.witness_hi)


def test_coefficients_from_linear_profile():
    # u = -r gives masses 2, 6, 24 and alphas (-1, 3, -4)
    assert coefficients_from_masses(2.0, 6.0, 24.0) == (-1.0, 3.0, -4.0)
    assert np.allclose(alphas_space_form(2.0, 6.0, 24.0), (-1.0, 3.0, -4.0), rtol=1e-15)
    assert radial_mass_to_space(1.0, 3) == pytest.approx(4 * math.pi)


def test_expansion_signs_and_consistency(report):
    assert report.signs_ok
    assert report.a_consistent
    assert report.a_err < 1e-6
    assert report.alpha1 == pytest.approx(-1.72414726, abs=1e-6)


def test_report_round_trip(report):
    from polylab.asymptotics import ExpansionReport

    again = ExpansionReport.from_dict(report.to_dict())
    assert again.alpha1 == report.alpha1 and again.residual_samples == report.residual_samples


def test_fit_tracks_solution_at_moderate_radius(report, sep3):
    from polylab.integrator import evaluate

    for r in (20.0, 30.0):
        assert abs(evaluate(sep3.witness_lo, r).u - float(report.fit(r))) < 1e-5


def test_integral_representation(sep3):
    rc = integral_representation_check(sep3.witness_lo, [1.0, 5.0, 30.0])
    assert rc.max_u_deviation < 1e-5
    assert rc.max_v_deviation < 1e-5


def test_identity_residual_decays(report, sep3):
    assert report.details["identity_decay_ratio"] <= 0.5
    assert abs(tail_residual(sep3.witness_lo, 20.0)) < 1e-12


def test_expansion_rejects_blowup():
    t = integrate(ProblemSpec.exponential(3, 0.0), IntegrationControls(r_max=40.0))
    with pytest.raises(NotSeparatrix):
        expansion_coefficients(t)


@pytest.mark.parametrize("N", [5, 6, 8])
def test_correction_mode_is_a_root(N):
    g = sp.symbols("g")
    poly = g * (g + N - 2) * (g - 2) * (g + N - 4) - 8 * (N - 2) * (N - 4)
    mu, om = correction_mode(N)
    assert mu == pytest.approx((4 - N) / 2, abs=1e-12)
    assert abs(complex(poly.subs(g, mu + 1j * om).evalf())) < 1e-8


def test_log_limit_guards():
    with pytest.raises(InvalidSpec):
        log_limit_target(4)
    with pytest.raises(InvalidSpec):
        correction_mode(3)


def test_log_limit_on_exact_profile():
    # -4 ln r + L plus a decaying oscillation must return L
    N = 5
    mu, om = correction_mode(N)
    L = log_limit_target(N)
    radii = np.geomspace(1e-4, 80.0, 800)

    def state(r):
        u = -4 * math.log(r) + L + 0.3 * r**mu * math.cos(om * math.log(r)) if r > 0 else 0.0
        return (u, 0.0, 0.0, 0.0)

    tr = synthetic_trajectory(ProblemSpec.exponential(N, 0.0), state, radii)
    assert log_limit_check(tr).gap < 1e-3


def test_log_limit_n5_separatrix():
    s = find_separatrix(5, 40.0, 1e-12)
    ll = log_limit_check(s.witness_lo)
    assert ll.gap < 5e-2
    assert ll.target == pytest.approx(math.log(24.0))


def test_psi_max_against_scipy():
    x0, pmax = psi_max(0.1)
    ref = minimize_scalar(lambda r: -psi(r, 0.1), bounds=(0.1, 20.0), method="bounded",
                          options={"xatol": 1e-12})
    assert x0 == pytest.approx(ref.x, rel=1e-6)
    assert pmax == pytest.approx(-ref.fun, rel=1e-12)
    with pytest.raises(InvalidSpec):
        psi_max(0.0)


def test_supersolution_threshold():
    good = check_supersolution(0.1)
    assert good.passed and good.worst_margin >= -1e-10 and good.unimodal
    assert abs(good.margin_at_argmax) < 1e-12
    bad = check_supersolution(0.1, b=math.log(good.psi_max) - 1.0)
    assert not bad.passed


def test_supersolution_margin_symbolic():
    r, eps, b = sp.symbols("r eps b", positive=True)
    U = -eps * r**2 + sp.log(1 + r) - b
    lhs = sp.diff(r**4 * sp.diff(U, r, 3), r)
    expr = (lhs - r**4 * sp.exp(U)) / lhs
    for x in (0.5, 3.0, 9.0):
        ref = float(expr.subs({r: x, eps: 0.1, b: 0.7}))
        assert float(supersolution_margin(x, 0.1, 0.7)) == pytest.approx(ref, rel=1e-12)


def test_richardson_exact_on_inverse_powers():
    from polylab.asymptotics import richardson_log_limit

    L = log_limit_target(6)
    radii = np.geomspace(1e-4, 64.0, 300)
    tr = synthetic_trajectory(ProblemSpec.exponential(6, 0.0),
                              lambda r: (-4 * math.log(r) + L + 2.0 / r - 5.0 / r**2, 0.0, 0.0, 0.0), radii)
    assert richardson_log_limit(tr).gap < 1e-12
