import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polylab.errors import BracketFailure, InvalidSpec
from polylab.integrator import IntegrationControls, TerminationKind, integrate
from polylab.radial_system import N4_BETA0, Exp, ProblemSpec
from polylab.shooting import (
    Classification,
    ClassificationKind,
    blowup_radii_nonincreasing,
    classify,
    confirm_blowup,
    find_separatrix,
    lower_bound_margin,
    m2_lattice,
    mass_certificate,
    monotone_classification,
    predicted_mass_limit,
    resolve,
    scaling_error,
    scan_n2,
    sigma_shrinks,
    sign_crossing_check,
    upper_bound_margin,
)

C40 = IntegrationControls(r_max=40.0)


@pytest.fixture(scope="module")
def sep4():
    return find_separatrix(4, 40.0, 1e-6)


def test_n4_separatrix_bracket(sep4):
    assert sep4.beta_lo < N4_BETA0 < sep4.beta_hi
    assert sep4.width <= 1e-6
    assert abs(sep4.beta0_est - N4_BETA0) < 1e-6
    assert sep4.witness_lo.termination.kind is TerminationKind.REACHED_HORIZON
    assert sigma_shrinks(sep4)
    d = sep4.to_dict()
    assert d["beta0_est"] == sep4.beta0_est and d["N"] == 4


def test_separatrix_deterministic(sep4):
    again = find_separatrix(4, 40.0, 1e-6)
    assert (again.beta_lo, again.beta_hi) == (sep4.beta_lo, sep4.beta_hi)


def test_n2_has_no_bracket():
    with pytest.raises(BracketFailure):
        find_separatrix(2, 40.0, 1e-6)


def test_classify_both_sides():
    below = classify(ProblemSpec.exponential(4, -3.0), C40)
    above = classify(ProblemSpec.exponential(4, -1.0), C40)
    assert below.kind is ClassificationKind.GLOBAL and below.sigma < 0
    assert above.is_blowup
    with pytest.raises(InvalidSpec):
        classify(ProblemSpec.negative_power(3, 1.0, 1.0, 0.0), C40)


def test_mass_certificate_and_prediction():
    # above the separatrix the mass bound turns positive before any blowup at this horizon
    t = integrate(ProblemSpec.exponential(4, N4_BETA0 + 1e-3), C40)
    assert predicted_mass_limit(t) > 0
    t = integrate(ProblemSpec.exponential(4, N4_BETA0 - 1e-3), C40)
    assert predicted_mass_limit(t) < 0
    assert mass_certificate(t) is None
    t = integrate(ProblemSpec.exponential(2, -3.0), C40)
    assert mass_certificate(t) is None


def test_resolve_certifies_blowup_in_dimension_two():
    c = resolve(ProblemSpec.exponential(2, -60.0), IntegrationControls(r_max=200.0))
    assert c.is_blowup
    assert c.log_R_est is not None and math.isfinite(c.log_R_est)


def test_confirm_blowup():
    spec = ProblemSpec.exponential(3, 1.0)
    assert confirm_blowup(spec, C40)
    assert not confirm_blowup(ProblemSpec.exponential(3, -5.0), IntegrationControls(r_max=10.0))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([2, 3, 4, 5]), st.floats(-6.0, 4.0))
def test_sign_crossing_implies_blowup(N, beta):
    spec = ProblemSpec.exponential(N, beta)
    c, traj = resolve(spec, C40, return_trajectory=True)
    if sign_crossing_check(traj) is not None:
        assert c.is_blowup


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([2, 3, 4, 5]), st.floats(-8.0, 4.0), st.floats(-1.0, 1.0))
def test_lower_bound_property(N, beta, alpha):
    traj = integrate(ProblemSpec.exponential(N, beta, alpha), IntegrationControls(r_max=20.0))
    assert lower_bound_margin(traj) >= -1e-8


@pytest.mark.parametrize("beta", [-1.8, -3.0, -6.0])
def test_upper_bound_below_separatrix(sep4, beta):
    traj = integrate(ProblemSpec.exponential(4, beta), C40)
    assert upper_bound_margin(traj, sep4.beta0_est) >= -1e-6
    with pytest.raises(InvalidSpec):
        upper_bound_margin(traj, beta - 1.0)


@settings(max_examples=10, deadline=None)
@given(st.sampled_from([3, 4, 5]), st.floats(-4.0, 1.0))
def test_scaling_invariance(N, beta):
    assert scaling_error(N, beta, 2.0) <= 1e-6


def test_scaling_guard():
    with pytest.raises(InvalidSpec):
        scaling_error(3, -1.0, 0.5)


def test_n2_scan_small():
    recs = scan_n2(np.linspace(-100.0, 10.0, 6).tolist())
    assert all(r.classification.is_blowup for r in recs)
    assert not any(r.falsification for r in recs)
    assert blowup_radii_nonincreasing(recs)
    assert monotone_classification(recs)


def test_m2_lattice_shape():
    lat = m2_lattice()
    assert len(lat) == 12 and len(set(lat)) == 12
    assert all(len(x) == 4 and x[0] == 0.0 for x in lat)
    with pytest.raises(InvalidSpec):
        scan_n2([(0.0, 1.0)], m=3)


def test_classification_dict_round_trip():
    c = Classification(ClassificationKind.BLOWUP, R_est=5.0, log_R_est=math.log(5.0), evidence="event")
    assert Classification.from_dict(c.to_dict()) == c


def test_monotone_classification_detects_violation():
    from polylab.shooting import ScanRecord

    g = Classification(ClassificationKind.GLOBAL, sigma=-1.0)
    b = Classification(ClassificationKind.BLOWUP, R_est=2.0, log_R_est=math.log(2.0))
    recs = [ScanRecord((0.0, 0.0), b), ScanRecord((0.0, 1.0), g)]
    assert not monotone_classification(recs)


def test_m2_shots_blow_up_with_positive_top():
    spec = ProblemSpec(3, 2, Exp(), (0.0, 0.0, 0.0, 1.0))
    c, traj = resolve(spec, C40, return_trajectory=True)
    assert sign_crossing_check(traj) == 0.0
    assert c.is_blowup
