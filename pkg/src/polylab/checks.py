"""Named verification checks used by ``polylab verify``.

Every check is deterministic and returns a CheckResult whose ``margin`` is
positive when the check passes with room to spare.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np

from .asymptotics import (
    alphas_space_form,
    check_supersolution,
    coefficients_from_masses,
    expansion_coefficients,
    integral_representation_check,
    log_limit_check,
)
from .integrator import IntegrationControls, evaluate, integrate, quadrature_weighted, synthetic_trajectory
from .negpower import (
    Outcome,
    comparison_limit_check,
    extinction_scan,
    growth_bounds_check,
    lemma_implication_check,
    polynomial_obstruction,
)
from .radial_system import N4_BETA0, Exp, ProblemSpec, closed_form_n4, closed_form_n4_state
from .shooting import (
    blowup_radii_nonincreasing,
    find_separatrix,
    lower_bound_margin,
    monotone_classification,
    resolve,
    m2_lattice,
    scaling_error,
    scan_n2,
    sigma_shrinks,
    sign_crossing_check,
    upper_bound_margin,
)

__all__ = ["CheckResult", "REGISTRY", "DEFAULT_CHECKS", "run_checks"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "margin": self.margin, "detail": self.detail}


REGISTRY: Dict[str, Callable[[], CheckResult]] = {}
OPTIONAL = set()


def check(name: str, default: bool = True):
    def deco(fn):
        REGISTRY[name] = fn
        if not default:
            OPTIONAL.add(name)
        return fn

    return deco


def _result(name, slacks: dict, detail: dict) -> CheckResult:
    margin = min(slacks.values()) if slacks else 0.0
    return CheckResult(name, bool(margin >= 0), float(margin), dict(detail, slacks=slacks))


# --- shared runs (cached within one process) --------------------------------------

@functools.lru_cache(maxsize=None)
def _separatrix(N: int, r_max: float, tol: float):
    return find_separatrix(N, r_max, tol)


@functools.lru_cache(maxsize=1)
def _exp_suite():
    """m = 1 and m = 2 exponential shots across N = 2..5, with resolved fates."""
    controls = IntegrationControls(r_max=40.0)
    specs = []
    for N in (2, 3, 4, 5):
        for beta in np.linspace(-6.0, 4.0, 9):
            specs.append(ProblemSpec.exponential(N, float(beta)))
        for init in m2_lattice()[:4]:
            specs.append(ProblemSpec(N, 2, Exp(), init))
    return [(s, *resolve(s, controls, return_trajectory=True)) for s in specs]


# --- checks ---------------------------------------------------------------------

@check("n4_anchor")
def n4_anchor() -> CheckResult:
    s = _separatrix(4, 40.0, 1e-6)
    err_beta = abs(s.beta0_est - N4_BETA0)
    tr = s.trajectory()
    rs = np.concatenate([tr.r[tr.r <= 20.0], np.linspace(tr.r_first, 20.0, 401)])
    sup = max(abs(evaluate(tr, float(r)).u - closed_form_n4(float(r))) for r in rs)
    return _result("n4_anchor", {"beta": 1e-4 - err_beta, "profile": 1e-5 - sup},
                   {"beta0_est": s.beta0_est, "beta0_exact": N4_BETA0, "sup_error_0_20": sup})


@check("sign_crossings")
def sign_crossings() -> CheckResult:
    rows, bad = 0, []
    for spec, c, traj in _exp_suite():
        r_star = sign_crossing_check(traj)
        rows += 1
        if r_star is not None and not c.is_blowup:
            bad.append(list(spec.init) + [spec.N])
    return CheckResult("sign_crossings", not bad, float(-len(bad)),
                       {"trajectories": rows, "counterexamples": bad})


@check("lower_bound")
def lower_bound() -> CheckResult:
    worst = min(lower_bound_margin(t) for s, _, t in _exp_suite() if s.m == 1)
    return _result("lower_bound", {"bound": worst + 1e-8}, {"worst_scaled_margin": worst})


@check("upper_bound_below_separatrix")
def upper_bound_below_separatrix() -> CheckResult:
    s = _separatrix(4, 40.0, 1e-6)
    margins = {}
    for beta in (-1.8, -2.5, -4.0, -8.0):
        t = integrate(ProblemSpec.exponential(4, beta), IntegrationControls(r_max=40.0))
        margins[str(beta)] = upper_bound_margin(t, s.beta0_est) + 1e-6
    return _result("upper_bound_below_separatrix", margins, {"beta0_est": s.beta0_est})


@check("scaling")
def scaling() -> CheckResult:
    errs = {f"N{N}_beta{b}": scaling_error(N, b, 2.0) for N, b in ((3, -1.0), (4, -3.0), (5, 0.5))}
    return _result("scaling", {k: 1e-6 - v for k, v in errs.items()}, {"sup_errors": errs})


@check("supersolution")
def supersolution() -> CheckResult:
    good = check_supersolution(0.1)
    bad = check_supersolution(0.1, b=math.log(good.psi_max) - 1.0)
    return _result("supersolution",
                   {"tight": good.worst_margin + 1e-10, "reduced_fails": -bad.worst_margin - 1e-10},
                   {"argmax": good.argmax, "psi_max": good.psi_max, "worst_margin": good.worst_margin,
                    "reduced_worst_margin": bad.worst_margin, "unimodal": good.unimodal})


@check("n2_scan")
def n2_scan() -> CheckResult:
    recs1 = scan_n2(np.linspace(-100.0, 10.0, 31).tolist())
    recs2 = scan_n2(m2_lattice(), m=2)
    allrec = recs1 + recs2
    finite = [r for r in allrec if r.classification.is_blowup and r.classification.log_R_est is not None
              and math.isfinite(r.classification.log_R_est)]
    slacks = {
        "all_blowup": float(len(finite) - len(allrec)),
        "radii_nonincreasing": 0.0 if blowup_radii_nonincreasing(recs1) else -1.0,
        "monotone": 0.0 if monotone_classification(recs1) else -1.0,
    }
    return _result("n2_scan", slacks, {"m1_count": len(recs1), "m2_count": len(recs2),
                                       "evidence": sorted({r.classification.evidence for r in allrec})})


@check("extinction_grids")
def extinction_grids() -> CheckResult:
    survived = {}
    for p in (0.25, 0.5, 0.75, 1.0):
        survived[str(p)] = sum(r.outcome is Outcome.SURVIVED for r in extinction_scan(p))
    exps = [r.growth_exponent for r in extinction_scan(2.0) if r.outcome is Outcome.SURVIVED]
    in_band = [g for g in exps if 4 / 3 <= g <= 2.2]
    slacks = {f"p{p}": -float(n) for p, n in survived.items()}
    slacks["p2_survivor"] = float(len(in_band) > 0) - 0.5
    return _result("extinction_grids", slacks, {"survived": survived, "p2_growth_exponents": exps})


@check("lemma_implication")
def lemma_implication() -> CheckResult:
    cases = ((1.0, 1.0, 0.0), (1.0, 1.0, -1.0), (2.0, 1.0, 4.0), (0.5, 2.0, 2.0))
    fails = []
    for p, a, b in cases:
        t = integrate(ProblemSpec.negative_power(3, p, a, b), IntegrationControls(r_max=200.0))
        if not lemma_implication_check(t).passed:
            fails.append([p, a, b])
    return CheckResult("lemma_implication", not fails, float(-len(fails)), {"cases": len(cases), "failing": fails})


@check("growth_bounds")
def growth_bounds() -> CheckResult:
    t = integrate(ProblemSpec.negative_power(3, 2.0, 1.0, 4.0), IntegrationControls(r_max=200.0))
    g = growth_bounds_check(t)
    radii = np.geomspace(1.0, 1e3, 200)
    quad = synthetic_trajectory(ProblemSpec.negative_power(3, 2.0, 1.0, 6.0),
                                lambda r: (1 + r * r, 2 * r, 6.0, 0.0), radii)
    lin = synthetic_trajectory(ProblemSpec.negative_power(3, 1.0, 1.0, 1.0),
                               lambda r: (1 + r, 1.0, 2.0 / r, -2.0 / (r * r)), radii)
    gq, gl = growth_bounds_check(quad), growth_bounds_check(lin)
    slacks = {
        "p2_lower": 0.0 if g.lower_ok else -1.0,
        "p2_upper": 0.0 if g.upper_ok else -1.0,
        "p2_pointwise": g.worst_pointwise,
        "p2_kappa": 0.0 if g.chain_ok else -1.0,
        "quadratic_both": 0.0 if gq.lower_ok and gq.upper_ok else -1.0,
        "linear_lower_fails": 0.0 if not gl.lower_ok else -1.0,
    }
    return _result("growth_bounds", slacks, {"C_low": g.C_low, "kappa": g.kappa})


@check("comparison_limit")
def comparison_limit() -> CheckResult:
    c = comparison_limit_check(6.0, 1.0, 3, [1e3, 2e3])
    ratio = c.ratios[0]
    return _result("comparison_limit", {"deviation": 1e-2 - c.deviations[0], "ratio": 0.1 - abs(ratio - 0.5)},
                   {"target": c.target, "values": list(c.values), "ratio": ratio})


@check("expansion_n3")
def expansion_n3() -> CheckResult:
    s = _separatrix(3, 100.0, 1e-8)
    rep = expansion_coefficients(s.witness_lo, s.witness_hi)
    rc = integral_representation_check(s.witness_lo, [30.0])
    slacks = {
        "signs": 0.0 if rep.signs_ok else -1.0,
        "a_consistency": rep.a_err + 2 * rep.alpha1_err - abs(rep.a - 2 * rep.alpha1),
        "representation_u": 1e-5 - rc.max_u_deviation,
        "representation_v": 1e-5 - rc.max_v_deviation,
    }
    return _result("expansion_n3", slacks, {"alphas": [rep.alpha1, rep.alpha2, rep.alpha3], "a": rep.a})


@check("residual_decay_identity")
def residual_decay_identity() -> CheckResult:
    s = _separatrix(3, 100.0, 1e-8)
    rep = expansion_coefficients(s.witness_lo, s.witness_hi)
    ratio = rep.details["identity_decay_ratio"]
    return _result("residual_decay_identity", {"halving": 0.5 - ratio},
                   {"ratio": ratio, "residuals": rep.details["identity_residuals"]})


@check("residual_decay_direct", default=False)
def residual_decay_direct() -> CheckResult:
    s = _separatrix(3, 100.0, 1e-8)
    rep = expansion_coefficients(s.witness_lo, s.witness_hi, radii=(40.0, 60.0, 80.0))
    return _result("residual_decay_direct", {"halving": 0.5 - rep.decay_ratio},
                   {"ratio": rep.decay_ratio, "samples": [list(x) for x in rep.residual_samples]})


@check("log_limit_n5")
def log_limit_n5() -> CheckResult:
    g40 = log_limit_check(_separatrix(5, 40.0, 1e-12).witness_lo)
    g80 = log_limit_check(_separatrix(5, 80.0, 1e-12).witness_lo)
    return _result("log_limit_n5", {"gap40": 5e-2 - g40.gap, "shrinks": g40.gap - g80.gap},
                   {"target": g40.target, "estimate40": g40.estimate, "estimate80": g80.estimate})


def _gamma_case():
    radii = np.geomspace(1e-4, 60.0, 3000)
    spec = ProblemSpec.exponential(3, 0.0)
    tr = synthetic_trajectory(spec, lambda r: (-r, -1.0, -2.0 / r, 2.0 / (r * r)), radii)
    return coefficients_from_masses(*(quadrature_weighted(tr, k).value for k in (2, 3, 4)))


def _beta_case():
    radii = np.geomspace(1e-4, 4000.0, 2000)
    tr = synthetic_trajectory(ProblemSpec.exponential(4, N4_BETA0), lambda r: closed_form_n4_state(r).y, radii)
    return quadrature_weighted(tr, 3, tail="power")


@check("quadrature_oracle")
def quadrature_oracle() -> CheckResult:
    q = _beta_case()
    al = _gamma_case()
    exact = (-1.0, 3.0, -4.0)
    slacks = {"beta_integral": 1e-8 - abs(q.value - 32.0)}
    slacks.update({f"gamma_alpha{i + 1}": 1e-8 - abs(a - e) for i, (a, e) in enumerate(zip(al, exact))})
    return _result("quadrature_oracle", slacks, {"beta_integral": q.value, "beta_bound": q.error_bound,
                                                "gamma_alphas": list(al)})


@check("space_form_consistency")
def space_form_consistency() -> CheckResult:
    s = _separatrix(3, 100.0, 1e-8)
    masses = [quadrature_weighted(s.witness_lo, k).value for k in (2, 3, 4)]
    a = coefficients_from_masses(*masses)
    b = alphas_space_form(*masses)
    rel = max(abs(x - y) / abs(x) for x, y in zip(a, b))
    return _result("space_form_consistency", {"relative": 1e-14 - rel}, {"max_relative": rel})


@check("sigma_shrinks")
def sigma_shrinks_check() -> CheckResult:
    s = _separatrix(3, 100.0, 1e-8)
    ok = sigma_shrinks(s)
    return CheckResult("sigma_shrinks", ok, 0.0 if ok else -1.0, {"last_sigmas": list(s.sigma_history[-5:])})


@check("polynomial_obstruction")
def polynomial_obstruction_check() -> CheckResult:
    polys = ([1.0, 0.0, 1.0], [1.0, 0.0, 0.0, 0.0, -1.0], [2.0, 0.0, 1.0, 0.0, -0.01], [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0])
    fails = [p for p in polys if not polynomial_obstruction(p)["obstructed"]]
    return CheckResult("polynomial_obstruction", not fails, float(-len(fails)), {"tested": len(polys)})


DEFAULT_CHECKS = tuple(n for n in REGISTRY if n not in OPTIONAL)


def run_checks(names) -> list:
    return [REGISTRY[n]() for n in names]
