import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from polylab.errors import BadRadius, InvalidSpec, NonfiniteState
from polylab.radial_system import (
    N4_BETA0,
    Exp,
    NegPower,
    ProblemSpec,
    StateVector,
    closed_form_n4,
    closed_form_n4_derivatives,
    emden_fowler_polynomial,
    laplacian_eigenvalue,
    make_rhs,
    radial_rhs,
    series_coefficients,
    taylor_start,
)

r_sym = sp.symbols("r", positive=True)


def radial_laplacian(expr, N):
    return sp.diff(expr, r_sym, 2) + (N - 1) / r_sym * sp.diff(expr, r_sym)


@pytest.mark.parametrize("N,m", [(3, 1), (4, 1), (5, 1), (2, 2), (6, 2), (7, 3)])
def test_operator_polynomial_matches_sympy(N, m):
    # r^{4m} Delta^{2m} r^k = p(k) r^k, so compare p at symbolic k
    k = sp.symbols("k")
    expr = r_sym**k
    for _ in range(2 * m):
        expr = radial_laplacian(expr, N)
    ref = sp.expand(sp.simplify(expr * r_sym ** (4 * m) / r_sym**k))
    poly = emden_fowler_polynomial(N, m)
    assert sp.expand(poly(k) - ref) == 0
    assert poly.coefficients[-1] == 1
    assert all(isinstance(c, int) for c in poly.coefficients)


@given(st.integers(1, 9), st.integers(0, 12), st.integers(0, 4))
def test_laplacian_eigenvalue(N, k, times):
    expr = r_sym**k
    for _ in range(times):
        expr = radial_laplacian(expr, N)
    ref = sp.simplify(expr / r_sym ** (k - 2 * times))
    assert laplacian_eigenvalue(N, k, times) == ref


def test_closed_form_solves_biharmonic_equation():
    c = 1 / (8 * sp.sqrt(6))
    u = -4 * sp.log(1 + c * r_sym**2)
    bilap = radial_laplacian(radial_laplacian(u, 4), 4)
    assert sp.simplify(bilap - sp.exp(u)) == 0
    lap0 = sp.limit(radial_laplacian(u, 4), r_sym, 0)
    assert sp.simplify(lap0 + 4 / sp.sqrt(6)) == 0
    assert float(lap0) == pytest.approx(N4_BETA0, abs=1e-15)


def test_closed_form_derivatives_against_sympy():
    c = 1 / (8 * sp.sqrt(6))
    u = -4 * sp.log(1 + c * r_sym**2)
    lap = radial_laplacian(u, 4)
    exprs = {"u": u, "d1": sp.diff(u, r_sym), "d2": sp.diff(u, r_sym, 2), "d3": sp.diff(u, r_sym, 3),
             "d4": sp.diff(u, r_sym, 4), "lap": lap, "dlap": sp.diff(lap, r_sym),
             "bilap": radial_laplacian(lap, 4)}
    for x in (0.1, 1.0, 7.5, 40.0):
        got = closed_form_n4_derivatives(x)
        for name, e in exprs.items():
            ref = float(e.subs(r_sym, x))
            assert got[name] == pytest.approx(ref, rel=1e-12, abs=1e-15), name
    assert closed_form_n4(np.array([0.0, 1.0])).shape == (2,)


@pytest.mark.parametrize("spec", [
    ProblemSpec.exponential(3, -2.0, 0.5),
    ProblemSpec.exponential(4, N4_BETA0),
    ProblemSpec(5, 2, Exp(), (0.0, -1.0, 2.0, -3.0)),
    ProblemSpec.negative_power(3, 0.5, 1.5, -1.0),
])
def test_series_satisfies_recursion(spec):
    # compare the truncated series with a sympy solution of the same chain
    a = series_coefficients(spec, terms=4)
    M = 2 * spec.m
    vs = [sum(sp.Rational(0) + float(a[k, j]) * r_sym ** (2 * j) for j in range(4)) for k in range(M)]
    for k in range(M - 1):
        resid = sp.expand(radial_laplacian(vs[k], spec.N) - vs[k + 1])
        # exact up to the truncated top-order term
        assert all(abs(float(resid.coeff(r_sym, d))) < 1e-12 for d in range(0, 5))
    u = vs[0]
    f = sp.exp(u) if spec.is_exp else -u ** (-spec.nonlinearity.p)
    lhs = radial_laplacian(vs[-1], spec.N)
    diff = sp.series(lhs - f, r_sym, 0, 5).removeO()
    assert all(abs(float(sp.N(diff.coeff(r_sym, d)))) < 1e-10 for d in range(0, 5))


def test_taylor_start_matches_closed_form():
    spec = ProblemSpec.exponential(4, N4_BETA0)
    s = taylor_start(spec, 1e-3)
    d = closed_form_n4_derivatives(1e-3)
    ref = [d["u"], d["d1"], d["lap"], d["dlap"]]
    assert np.allclose(s.y, ref, rtol=0, atol=1e-15)


def test_taylor_start_radius_guard():
    spec = ProblemSpec.exponential(3, 0.0)
    for r0 in (0.0, -1e-5, 1e-2):
        with pytest.raises(BadRadius):
            taylor_start(spec, r0)


def test_rhs_layout_matches_chain():
    spec = ProblemSpec(3, 2, Exp(), (0.0, 0.0, 0.0, 0.0))
    y = np.arange(1.0, 9.0)
    r = 2.0
    dy = make_rhs(spec)(r, y)
    c = 2.0 / r
    expected = [y[1], y[2] - c * y[1], y[3], y[4] - c * y[3], y[5], y[6] - c * y[5], y[7], math.exp(y[0]) - c * y[7]]
    assert np.allclose(dy, expected, rtol=1e-15)
    assert np.array_equal(radial_rhs(spec, StateVector(r, y)), dy)


def test_rhs_guards():
    spec = ProblemSpec.exponential(3, 0.0)
    with pytest.raises(BadRadius):
        radial_rhs(spec, StateVector(0.0, [0, 0, 0, 0]))
    with pytest.raises(NonfiniteState):
        radial_rhs(spec, StateVector(1.0, [800.0, 0, 0, 0]))
    with pytest.raises(InvalidSpec):
        radial_rhs(spec, StateVector(1.0, [0, 0]))


@pytest.mark.parametrize("kwargs", [
    dict(N=0, m=1, nonlinearity=Exp(), init=(0, 0)),
    dict(N=3, m=0, nonlinearity=Exp(), init=()),
    dict(N=3, m=1, nonlinearity=Exp(), init=(0, 0, 0)),
    dict(N=3, m=1, nonlinearity=Exp(), init=(0, math.nan)),
    dict(N=3, m=1, nonlinearity=NegPower(1.0), init=(0.0, 1.0)),
])
def test_invalid_specs(kwargs):
    with pytest.raises(InvalidSpec):
        ProblemSpec(**kwargs)


def test_negpower_requires_positive_p():
    with pytest.raises(InvalidSpec):
        NegPower(0.0)


@settings(max_examples=30)
@given(st.integers(1, 8), st.integers(1, 3), st.floats(-5, 5), st.floats(0.1, 3))
def test_spec_dict_round_trip(N, m, x, p):
    init = tuple([abs(x) + 0.1] + [x] * (2 * m - 1))
    for nl in (Exp(), NegPower(p)):
        spec = ProblemSpec(N, m, nl, init)
        assert ProblemSpec.from_dict(spec.to_dict()) == spec
