"""Far-field structure of separatrix solutions of Delta^2 u = e^u.

N = 3: u = alpha1 r + alpha2 + alpha3 / r + (exponentially small), with the
coefficients given by weighted masses of e^u.  N >= 5: u + 4 ln r tends to
ln[8(N-2)(N-4)].  Also houses the explicit supersolution used to show that a
negative limit of Delta u forces beta below the separatrix value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import InvalidSpec, NotSeparatrix
from .integrator import (
    QuadratureResult,
    TerminationKind,
    Trajectory,
    evaluate,
    evaluate_u,
    quadrature_weighted,
    weighted_integral,
)

__all__ = [
    "ExpansionReport",
    "expansion_coefficients",
    "coefficients_from_masses",
    "radial_mass_to_space",
    "integral_representation_check",
    "RepresentationCheck",
    "log_limit_target",
    "log_limit_check",
    "correction_mode",
    "LogLimit",
    "psi",
    "check_supersolution",
    "SupersolutionCheck",
    "RESIDUAL_RADII",
    "alphas_space_form",
    "tail_residual",
    "psi_max",
    "richardson_log_limit",
]

RESIDUAL_RADII = (20.0, 30.0, 40.0, 60.0, 80.0)


def radial_mass_to_space(radial_integral: float, N: int = 3) -> float:
    """int_{R^N} |x|^k e^u dx from int_0^inf t^{k+N-1} e^u dt (sphere area factor)."""
    area = 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)
    return area * radial_integral


def coefficients_from_masses(m2: float, m3: float, m4: float) -> tuple:
    """(alpha1, alpha2, alpha3) from int_0^inf t^k e^u dt, k = 2, 3, 4."""
    return -0.5 * m2, 0.5 * m3, -m4 / 6.0


def alphas_space_form(m2, m3, m4):
    # same coefficients through the R^3 integrals: -(1/8pi), (1/8pi), -(1/24pi)
    I0 = radial_mass_to_space(m2)
    I1 = radial_mass_to_space(m3)
    I2 = radial_mass_to_space(m4)
    return -I0 / (8 * math.pi), I1 / (8 * math.pi), -I2 / (24 * math.pi)


@dataclass(frozen=True)
class ExpansionReport:
    alpha1: float
    alpha2: float
    alpha3: float
    alpha1_err: float
    alpha2_err: float
    alpha3_err: float
    a: float
    a_err: float
    residual_samples: tuple
    decay_ratio: Optional[float]
    noise_floor: tuple = ()
    masses: tuple = ()
    details: dict = field(default_factory=dict)

    @property
    def a_consistent(self) -> bool:
        return abs(self.a - 2 * self.alpha1) <= self.a_err + 2 * self.alpha1_err

    @property
    def signs_ok(self) -> bool:
        return self.alpha1 < 0 < self.alpha2 and self.alpha3 < 0

    def fit(self, r):
        r = np.asarray(r, dtype=float)
        return self.alpha1 * r + self.alpha2 + self.alpha3 / r

    def to_dict(self) -> dict:
        return {
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "alpha3": self.alpha3,
            "alpha1_err": self.alpha1_err,
            "alpha2_err": self.alpha2_err,
            "alpha3_err": self.alpha3_err,
            "a": self.a,
            "a_err": self.a_err,
            "a_consistent": self.a_consistent,
            "residual_samples": [list(s) for s in self.residual_samples],
            "noise_floor": list(self.noise_floor),
            "decay_ratio": self.decay_ratio,
            "masses": list(self.masses),
            "details": self.details,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExpansionReport":
        return cls(
            d["alpha1"], d["alpha2"], d["alpha3"], d["alpha1_err"], d["alpha2_err"], d["alpha3_err"],
            d["a"], d["a_err"], tuple(tuple(s) for s in d["residual_samples"]), d["decay_ratio"],
            tuple(d.get("noise_floor", ())), tuple(d.get("masses", ())), d.get("details", {}),
        )


def _masses(traj: Trajectory):
    return tuple(quadrature_weighted(traj, k) for k in (2, 3, 4))


def _require_separatrix(traj: Trajectory):
    if traj.termination.kind is not TerminationKind.REACHED_HORIZON:
        raise NotSeparatrix(f"trajectory ended with {traj.termination}")


def _a_from_laplacian(traj: Trajectory, r: float):
    """a = r Delta u(r) - int_r^inf t^2 e^u + r int_r^inf t e^u (three-dimensional radial form)."""
    q2 = quadrature_weighted(traj, 2)
    q1 = quadrature_weighted(traj, 1)
    i2_head, e2 = weighted_integral(traj, 2, traj.r_first, r)
    i1_head, e1 = weighted_integral(traj, 1, traj.r_first, r)
    tail2 = q2.value - q2.head - i2_head
    tail1 = q1.value - q1.head - i1_head
    lap = evaluate(traj, r).laplacian
    a = r * lap - tail2 + r * tail1
    err = q2.error_bound + e2 + r * (q1.error_bound + e1)
    return a, err


def _max_ratio(values) -> Optional[float]:
    """Largest |x_{i+1}| / |x_i|; below 1/2 means halving at every step."""
    if len(values) < 2:
        return None
    res = np.abs(np.asarray(values, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.max(res[1:] / res[:-1]))


def expansion_coefficients(
    traj: Trajectory,
    companion: Optional[Trajectory] = None,
    radii: Sequence[float] = RESIDUAL_RADII,
    a_radii: Sequence[float] = (4.0, 6.0, 8.0),
) -> ExpansionReport:
    """alpha1, alpha2, alpha3 of the N = 3 separatrix from its weighted masses.

    ``traj`` is the lower-bracket (Global) separatrix trajectory;
    ``companion`` is the other bracket end or a neighbouring shot, used to
    fold the bracket sensitivity into the error bars.  The independent value
    of a comes from Delta u at the radii ``a_radii`` together with tail
    masses, rather than from the total mass.
    """
    if traj.spec.N != 3 or traj.spec.m != 1 or not traj.spec.is_exp:
        raise InvalidSpec("expansion_coefficients needs N = 3, m = 1, exponential nonlinearity")
    _require_separatrix(traj)
    q = _masses(traj)
    masses = tuple(x.value for x in q)
    alphas = coefficients_from_masses(*masses)
    weights = (0.5, 0.5, 1.0 / 6.0)
    errs = [w * x.error_bound for w, x in zip(weights, q)]
    spread = [0.0, 0.0, 0.0]
    if companion is not None and companion.termination.kind is TerminationKind.REACHED_HORIZON:
        try:
            alt = coefficients_from_masses(*(x.value for x in _masses(companion)))
            spread = [abs(a - b) for a, b in zip(alphas, alt)]
        except Exception:  # companion tail may not be integrable
            spread = [0.0, 0.0, 0.0]
    errs = [e + s for e, s in zip(errs, spread)]

    a_vals = [_a_from_laplacian(traj, r) for r in a_radii]
    a = float(np.mean([v for v, _ in a_vals]))
    a_err = max(e for _, e in a_vals) + float(np.ptp([v for v, _ in a_vals]))
    if companion is not None and companion.termination.kind is TerminationKind.REACHED_HORIZON:
        try:
            alt_a = float(np.mean([_a_from_laplacian(companion, r)[0] for r in a_radii]))
            a_err += abs(a - alt_a)
        except Exception:
            pass

    samples = []
    floors = []
    for r in radii:
        if r > traj.r_last:
            continue
        u = evaluate(traj, r).u
        fit = alphas[0] * r + alphas[1] + alphas[2] / r
        samples.append((float(r), float(u), float(fit), float(u - fit)))
        floors.append(errs[0] * r + errs[1] + errs[2] / r + traj.controls.rtol * 10 * abs(u))
    decay = _max_ratio([s[3] for s in samples])
    tails = {k: quadrature_weighted(traj, k).tail for k in (1, 2, 3, 4)}
    ident = [(s[0], _identity_residual(traj, s[0], tails)) for s in samples]
    return ExpansionReport(
        alphas[0], alphas[1], alphas[2], errs[0], errs[1], errs[2], a, a_err,
        tuple(samples), decay, tuple(floors), masses,
        {
            "tail_models": [x.tail_model for x in q],
            "bracket_spread": [float(x) for x in spread],
            "a_samples": [[float(v), float(e)] for v, e in a_vals],
            "identity_residuals": [[r, v] for r, v in ident],
            "identity_decay_ratio": _max_ratio([v for _, v in ident]),
        },
    )


def _identity_residual(traj: Trajectory, r: float, tails: dict) -> float:
    T = {k: weighted_integral(traj, k, r, traj.r_last)[0] + tails[k] for k in (1, 2, 3, 4)}
    return float(-0.5 * T[3] + T[4] / (6 * r) + 0.5 * r * T[2] - r * r * T[1] / 6)


def tail_residual(traj: Trajectory, r: float) -> float:
    """u - alpha1 r - alpha2 - alpha3/r written as tail masses beyond r.

    With T_k = int_r^inf t^k e^u this is -T_3/2 + T_4/(6r) + r T_2/2 - r^2 T_1/6.
    The tails are integrated directly, so there is no cancellation against
    the total masses and values far below round-off of u stay resolvable.
    """
    tails = {k: quadrature_weighted(traj, k).tail for k in (1, 2, 3, 4)}
    return _identity_residual(traj, float(r), tails)


@dataclass(frozen=True)
class RepresentationCheck:
    max_u_deviation: float
    max_v_deviation: float
    rows: tuple


def integral_representation_check(traj: Trajectory, r_samples: Sequence[float]) -> RepresentationCheck:
    """Compare u and v = -Delta u with their mass representations on the N = 3 separatrix.

    u(r) = a r/2 + (1/2) I_3 - I_4/(6r) + (r/2) T_2 - (r^2/6) T_1
    with I_k = int_0^r t^k e^u and T_k = int_r^inf t^k e^u; this follows from
    integrating (r^2 u')' = a r + r T_2 - r^2 T_1 twice with u(0) = 0.
    v(r) = (1/r) int_0^inf t^2 e^u - (1/r) int_r^inf t^2 e^u + int_r^inf t e^u
    with a = -int_0^inf t^2 e^u.
    """
    _require_separatrix(traj)
    if traj.spec.N != 3:
        raise InvalidSpec("integral representation is the three-dimensional one")
    tot = {k: quadrature_weighted(traj, k) for k in (1, 2)}
    M2 = tot[2].value
    a = -M2
    u0 = traj.spec.init[0]
    rows = []
    for r in r_samples:
        r = float(r)
        if r <= traj.r_first:
            # head only: e^{u(0)} t^k integrated over [0, r]
            h = {k: math.exp(u0) * r ** (k + 1) / (k + 1) for k in (1, 2, 3, 4)}
            head = h
        else:
            head = {k: weighted_integral(traj, k, traj.r_first, r)[0]
                    + math.exp(u0) * traj.r_first ** (k + 1) / (k + 1) for k in (1, 2, 3, 4)}
        tail1 = tot[1].value - head[1]
        tail2 = M2 - head[2]
        u_rep = a * r / 2 + 0.5 * head[3] - head[4] / (6 * r) + 0.5 * r * tail2 - r * r * tail1 / 6
        v_rep = M2 / r - tail2 / r + tail1
        st = evaluate(traj, max(r, traj.r_first))
        rows.append((r, st.u, u_rep, -st.laplacian, v_rep))
    du = max(abs(x[1] - x[2]) for x in rows)
    dv = max(abs(x[3] - x[4]) for x in rows)
    return RepresentationCheck(du, dv, tuple(rows))


def log_limit_target(N: int) -> float:
    """ln[8(N-2)(N-4)], the limit of u + 4 ln r on the separatrix for N >= 5."""
    if N < 5:
        raise InvalidSpec("the log limit is stated for N >= 5")
    return math.log(8 * (N - 2) * (N - 4))


@dataclass(frozen=True)
class LogLimit:
    estimate: float
    target: float
    samples: tuple

    @property
    def gap(self) -> float:
        return abs(self.estimate - self.target)


def correction_mode(N: int) -> tuple:
    """(mu, omega) of the decaying oscillatory perturbation r^mu cos(omega ln r) of -4 ln r + L.

    Roots g of g(g+N-2)(g-2)(g+N-4) = 8(N-2)(N-4); the complex pair has
    real part (4-N)/2.
    """
    if N < 5:
        raise InvalidSpec("the log limit is stated for N >= 5")
    c = np.poly1d([1.0, 0.0]) * np.poly1d([1.0, N - 2.0]) * np.poly1d([1.0, -2.0]) * np.poly1d([1.0, N - 4.0])
    roots = (c - 8.0 * (N - 2) * (N - 4)).roots
    z = max((x for x in roots if abs(x.imag) > 1e-12), key=lambda x: x.imag)
    return float(z.real), float(z.imag)


def log_limit_check(traj: Trajectory, r_lo: float = 2.0, window: float = 0.5, samples: int = 400) -> LogLimit:
    """Estimate lim u + 4 ln r by least squares on [r_lo, window * r_max].

    The model carries the linearised correction r^mu (A cos + B sin)(omega ln r)
    and its square (mean and second harmonic at r^{2 mu}).  The last part of the
    run is left out because the unstable mode grows there.
    """
    N = traj.spec.N
    target = log_limit_target(N)
    _require_separatrix(traj)
    hi = window * traj.r_last
    if hi <= r_lo:
        raise InvalidSpec("horizon too short for the log-limit fit")
    mu, om = correction_mode(N)
    r = np.geomspace(r_lo, hi, samples)
    ell = np.log(r)
    g = evaluate_u(traj, r) + 4.0 * ell
    a1, a2 = r**mu, r ** (2 * mu)
    A = np.column_stack([np.ones_like(r), a1 * np.cos(om * ell), a1 * np.sin(om * ell),
                         a2, a2 * np.cos(2 * om * ell), a2 * np.sin(2 * om * ell)])
    coef = np.linalg.lstsq(A, g, rcond=None)[0]
    pick = np.geomspace(r_lo, hi, 5)
    return LogLimit(float(coef[0]), target, tuple((float(x), float(evaluate(traj, x).u + 4 * math.log(x))) for x in pick))


def richardson_log_limit(traj: Trajectory) -> LogLimit:
    """Three-point extrapolation of u + 4 ln r to 1/r -> 0 from r_max/4, r_max/2, r_max.

    Assumes corrections are a power series in 1/r.  For N >= 5 the leading
    correction oscillates in ln r instead, so this estimate is unreliable;
    :func:`log_limit_check` models the oscillation.
    """
    N = traj.spec.N
    target = log_limit_target(N)
    _require_separatrix(traj)
    R = traj.r_last
    rs = (R / 4, R / 2, R)
    g = [evaluate(traj, r).u + 4 * math.log(r) for r in rs]
    h = [1 / r for r in rs]
    # Neville's scheme evaluated at h = 0
    p01 = (h[0] * g[1] - h[1] * g[0]) / (h[0] - h[1])
    p12 = (h[1] * g[2] - h[2] * g[1]) / (h[1] - h[2])
    est = (h[0] * p12 - h[2] * p01) / (h[0] - h[2])
    return LogLimit(float(est), target, tuple(zip(rs, g)))


# --- supersolution --------------------------------------------------------

def psi(r, eps: float):
    """psi(r) = r (1+r)^5 e^{-eps r^2} / (2 (r + 4))."""
    r = np.asarray(r, dtype=float)
    return r * (1 + r) ** 5 * np.exp(-eps * r * r) / (2 * (r + 4))


def _dlog_psi(r, eps):
    return 1 / r + 5 / (1 + r) - 1 / (r + 4) - 2 * eps * r


def psi_max(eps: float):
    """Location and value of max psi: golden-section search, then a root of (ln psi)'."""
    if not eps > 0:
        raise InvalidSpec("eps must be positive")
    hi = 1.0
    while _dlog_psi(hi, eps) > 0:
        hi *= 2
    gs = minimize_scalar(lambda x: -math.log(psi(x, eps)), bracket=(1e-6, hi / 2, hi), method="golden",
                         tol=1e-10)
    x0 = float(gs.x)
    a, b = max(x0 * 0.5, 1e-12), x0 * 1.5
    if _dlog_psi(a, eps) > 0 > _dlog_psi(b, eps):
        x0 = brentq(_dlog_psi, a, b, args=(eps,), xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return x0, float(psi(x0, eps))


def _unimodal(eps: float, r_hi: float, n: int = 20001) -> bool:
    r = np.linspace(r_hi / n, r_hi, n)
    s = np.sign(_dlog_psi(r, eps))
    changes = np.count_nonzero(np.diff(s) != 0)
    return changes <= 1


@dataclass(frozen=True)
class SupersolutionCheck:
    passed: bool
    worst_margin: float
    worst_r: float
    argmax: float
    psi_max: float
    margin_at_argmax: float
    unimodal: bool


def supersolution_margin(r, eps: float, b: float):
    """Relative margin of (r^4 U''')' >= r^4 e^U for U = -eps r^2 + ln(1+r) - b.

    (r^4 U''')' = 4 r^3 U''' + r^4 U'''' with U''' = 2/(1+r)^3, U'''' = -6/(1+r)^4.
    """
    r = np.asarray(r, dtype=float)
    d3 = 2 / (1 + r) ** 3
    d4 = -6 / (1 + r) ** 4
    lhs = 4 * r**3 * d3 + r**4 * d4
    U = -eps * r * r + np.log1p(r) - b
    rhs = r**4 * np.exp(U)
    return (lhs - rhs) / lhs


def check_supersolution(eps: float, b: Optional[float] = None, r_grid=None,
                        tol: float = 1e-10) -> SupersolutionCheck:
    """Check the supersolution inequality for U(r) = -eps r^2 + ln(1+r) - b on a grid.

    ``b`` defaults to ln(max psi), the smallest admissible value; the margin
    then vanishes at the maximiser of psi.
    """
    x0, pmax = psi_max(eps)
    if b is None:
        b = math.log(pmax)
    if r_grid is None:
        r_grid = np.linspace(1e-3, x0 + 10.0, 20001)
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(r_grid <= 0):
        raise InvalidSpec("grid must lie in (0, inf)")
    if r_grid.max() < x0 + 5:
        raise InvalidSpec("grid must extend at least 5 beyond the maximiser of psi")
    pts = np.sort(np.append(r_grid, x0))
    margin = supersolution_margin(pts, eps, b)
    i = int(np.argmin(margin))
    at_max = float(supersolution_margin(x0, eps, b))
    return SupersolutionCheck(
        passed=bool(margin[i] >= -tol),
        worst_margin=float(margin[i]),
        worst_r=float(pts[i]),
        argmax=x0,
        psi_max=pmax,
        margin_at_argmax=at_max,
        unimodal=_unimodal(eps, float(pts[-1])),
    )
