"""Experiments for Delta^2 u = -u^{-p}: extinction scans, growth bounds, comparison limit."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import InvalidSpec, NotSurvived
from .integrator import IntegrationControls, TerminationKind, Trajectory, integrate
from .radial_system import ProblemSpec

__all__ = [
    "Outcome",
    "ExtinctionRecord",
    "extinction_scan",
    "DEFAULT_A_GRID",
    "DEFAULT_B_GRID",
    "LemmaCheck",
    "lemma_implication_check",
    "GrowthBounds",
    "growth_bounds_check",
    "growth_exponent",
    "ComparisonLimit",
    "comparison_limit_check",
    "comparison_target",
    "polynomial_obstruction",
]

DEFAULT_A_GRID = (0.5, 1.0, 2.0, 4.0)
DEFAULT_B_GRID = (-2.0, -1.0, 0.0, 1.0, 2.0, 4.0)
SURVIVAL_HORIZON = 200.0

# decade-ratio tolerance for "bounded" / "not decaying" along the last decade
_DECADE_SLACK = 10 ** 0.25


class Outcome(str, enum.Enum):
    EXTINCT = "Extinct"
    SURVIVED = "Survived"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class ExtinctionRecord:
    p: float
    a: float
    b: float
    N: int
    outcome: Outcome
    rho: Optional[float]
    r_max: float
    growth_exponent: Optional[float]
    min_u: float
    first_negative_laplacian_r: Optional[float]
    escalated: bool = False
    falsification: bool = False

    def row(self) -> dict:
        return {
            "p": self.p,
            "a": self.a,
            "b": self.b,
            "outcome": self.outcome.value,
            "rho": self.rho,
            "min_u": self.min_u,
            "first_negative_laplacian_r": self.first_negative_laplacian_r,
        }

    def to_dict(self) -> dict:
        d = self.row()
        d.update(N=self.N, r_max=self.r_max, growth_exponent=self.growth_exponent,
                 escalated=self.escalated, falsification=self.falsification)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExtinctionRecord":
        def num(x):
            return None if x is None or x == "" else float(x)

        return cls(float(d["p"]), float(d["a"]), float(d["b"]), int(d.get("N", 3)), Outcome(d["outcome"]),
                   num(d.get("rho")), float(d.get("r_max", SURVIVAL_HORIZON)), num(d.get("growth_exponent")),
                   float(d["min_u"]), num(d.get("first_negative_laplacian_r")),
                   bool(d.get("escalated", False)), bool(d.get("falsification", False)))


def _last_decade(traj: Trajectory):
    mask = traj.r >= traj.r_last / 10.0
    return traj.r[mask], traj.y[mask]


def growth_exponent(traj: Trajectory) -> float:
    """Log-log slope of u over the last decade of radii."""
    r, y = _last_decade(traj)
    if r.size < 2 or np.any(y[:, 0] <= 0):
        raise NotSurvived("growth exponent needs positive u on the last decade")
    return float(np.polyfit(np.log(r), np.log(y[:, 0]), 1)[0])


def _first_negative_laplacian(traj: Trajectory) -> Optional[float]:
    # Delta u decreases strictly from Delta u(0), so b <= 0 means negative from 0+
    if traj.spec.init[1] <= 0:
        return 0.0
    v2 = traj.y[:, 2]
    idx = np.flatnonzero(v2 < 0)
    if idx.size == 0:
        return None
    i = int(idx[0])
    if i == 0:
        return float(traj.r[0])
    lo, hi = float(traj.r[i - 1]), float(traj.r[i])
    while hi - lo > 1e-12 * (1 + hi):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if traj.interpolant(mid)[2] < 0:
            hi = mid
        else:
            lo = mid
    return hi


def _record(p, a, b, N, traj: Trajectory, escalated=False) -> ExtinctionRecord:
    kind = traj.termination.kind
    min_u = float(np.min(traj.u))
    first_neg = _first_negative_laplacian(traj)
    rho = growth = None
    if kind is TerminationKind.EXTINCT:
        outcome, rho = Outcome.EXTINCT, float(traj.termination.radius)
    elif kind is TerminationKind.REACHED_HORIZON and min_u > traj.controls.u_min:
        outcome = Outcome.SURVIVED
        growth = growth_exponent(traj)
    else:
        outcome = Outcome.INDETERMINATE
    return ExtinctionRecord(float(p), float(a), float(b), int(N), outcome, rho, float(traj.r_last),
                            growth, min_u, first_neg, escalated)


def _cell(args):
    p, a, b, N, controls = args
    spec = ProblemSpec.negative_power(N, p, a, b)
    rec = _record(p, a, b, N, integrate(spec, controls))
    if p <= 1 and rec.outcome is Outcome.SURVIVED:
        strict = replace(controls.tightened(10.0), r_max=2 * controls.r_max)
        rec = _record(p, a, b, N, integrate(spec, strict), escalated=True)
        if rec.outcome is Outcome.SURVIVED:
            rec = replace(rec, falsification=True)
    return rec


def extinction_scan(
    p: float,
    a_grid: Sequence[float] = DEFAULT_A_GRID,
    b_grid: Sequence[float] = DEFAULT_B_GRID,
    controls: Optional[IntegrationControls] = None,
    N: int = 3,
    workers: int = 1,
) -> list:
    """Integrate every (a, b) cell with u(0) = a, Delta u(0) = b.

    For p <= 1 no entire solution exists, so a Survived cell is re-run at
    ten times tighter tolerance and twice the horizon; if it still
    survives it is kept and flagged as a falsification candidate.
    """
    if not p > 0:
        raise InvalidSpec("p must be positive")
    if any(a <= 0 for a in a_grid):
        raise InvalidSpec("u(0) = a must be positive")
    if not all(math.isfinite(x) for x in (*a_grid, *b_grid)):
        raise InvalidSpec("grids must be finite")
    controls = controls or IntegrationControls(r_max=SURVIVAL_HORIZON)
    cells = [(float(p), float(a), float(b), int(N), controls) for a in a_grid for b in b_grid]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_cell, cells))
    return [_cell(c) for c in cells]


@dataclass(frozen=True)
class LemmaCheck:
    decreasing: bool
    implication: bool
    first_negative_laplacian_r: Optional[float]

    @property
    def passed(self) -> bool:
        return self.decreasing and self.implication


def lemma_implication_check(traj: Trajectory) -> LemmaCheck:
    """Delta u strictly decreasing, and Delta u < 0 somewhere forces extinction."""
    if traj.spec.is_exp:
        raise InvalidSpec("lemma check is for the negative-power equation")
    live = traj.u > 0
    v2 = traj.y[live, 2]
    decreasing = bool(np.all(np.diff(v2) < 0))
    r_neg = _first_negative_laplacian(traj)
    implication = True
    if r_neg is not None and r_neg < traj.r_last:
        implication = traj.termination.kind is TerminationKind.EXTINCT
    return LemmaCheck(decreasing, implication, r_neg)


@dataclass(frozen=True)
class GrowthBounds:
    lower_ok: bool
    upper_ok: bool
    C_low: float
    lower_decade_ratio: float
    upper_decade_ratio: float
    pointwise_ok: bool
    worst_pointwise: float
    kappa: float

    @property
    def chain_ok(self) -> bool:
        return self.kappa > 0


def growth_bounds_check(traj: Trajectory) -> GrowthBounds:
    """Lower growth r^{4/(p+1)}, upper growth 1 + r^2, and the pointwise inequalities.

    The lower bound holds when u / r^{4/(p+1)} stays positive and does not
    drop by more than a quarter decade across the last decade of radii; the
    upper bound is the same test on u / (1 + r^2) rising.  The pointwise
    check is u(r) >= u(0) + Delta u(r) r^2 / (2N) - 1e-8 (1 + r^2) at all
    nodes, and kappa = min of Delta u u^p / r^2 over the last decade.
    """
    if traj.termination.kind is not TerminationKind.REACHED_HORIZON or np.min(traj.u) <= traj.controls.u_min:
        raise NotSurvived(f"trajectory ended with {traj.termination}")
    p = traj.spec.nonlinearity.p
    N = traj.spec.N
    gamma = 4.0 / (p + 1.0)
    r, y = _last_decade(traj)
    u, lap = y[:, 0], y[:, 2]
    low = u / r**gamma
    up = u / (1 + r * r)
    C_low = float(np.min(low))
    lower_ratio = float(low[-1] / low[0])
    upper_ratio = float(up[-1] / up[0])
    lower_ok = C_low > 0 and lower_ratio >= 1 / _DECADE_SLACK
    upper_ok = upper_ratio <= _DECADE_SLACK

    ra, ua, la = traj.r, traj.u, traj.y[:, 2]
    slack = ua - (traj.spec.init[0] + la * ra * ra / (2 * N)) + 1e-8 * (1 + ra * ra)
    worst = float(np.min(slack / (1 + ra * ra)))
    kappa = float(np.min(lap * u**p / (r * r)))
    return GrowthBounds(lower_ok, upper_ok, C_low, lower_ratio, upper_ratio, worst >= 0, worst, kappa)


def comparison_target(alpha: float, N: int) -> float:
    """-2N / ((N - 2) alpha)."""
    return -2.0 * N / ((N - 2) * alpha)


@dataclass(frozen=True)
class ComparisonLimit:
    target: float
    radii: tuple
    values: tuple
    deviations: tuple

    @property
    def max_deviation(self) -> float:
        return max(self.deviations)

    @property
    def ratios(self) -> tuple:
        d = self.deviations
        return tuple(b / a for a, b in zip(d, d[1:]))


def comparison_limit_check(alpha: float, u0: float, N: int, r_samples: Sequence[float]) -> ComparisonLimit:
    """r W'(r) = -r^{2-N} int_0^r t^{N-1}/U(t) dt for U = u0 + alpha t^2/(2N)."""
    if N < 3 or alpha <= 0 or u0 <= 0:
        raise InvalidSpec("need N >= 3, alpha > 0, u0 > 0")
    target = comparison_target(alpha, N)

    def f(t):
        return t ** (N - 1) / (u0 + alpha * t * t / (2 * N))

    vals, devs = [], []
    for r in r_samples:
        r = float(r)
        # split at the quadratic/constant crossover so quad sees both regimes
        knee = min(r, math.sqrt(2 * N * u0 / alpha))
        i1 = quad(f, 0.0, knee, epsabs=0, epsrel=1e-13, limit=200)[0]
        i2 = quad(f, knee, r, epsabs=0, epsrel=1e-13, limit=400)[0] if r > knee else 0.0
        val = -(r ** (2 - N)) * (i1 + i2)
        vals.append(val)
        devs.append(abs(val - target))
    return ComparisonLimit(target, tuple(float(x) for x in r_samples), tuple(vals), tuple(devs))


def polynomial_obstruction(coeffs: Sequence[float], tol: float = 1e-12) -> dict:
    """One-dimensional structural check on a polynomial u (coefficients low to high).

    A positive solution of u'''' = -u^{-p} on the whole line would need
    u > 0 and u'''' < 0 everywhere.  For a polynomial u'''' < 0 on R forces
    even degree >= 4 with negative leading coefficient, hence u -> -inf,
    so the two conditions never hold together.  Returns both flags and
    ``obstructed`` (True unless both hold).
    """
    P = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float)).trim(tol)
    d4 = P.deriv(4) if P.degree() >= 4 else np.polynomial.Polynomial([0.0])

    def positive_everywhere(q, sign):
        q = (sign * q).trim(tol)
        if q.degree() == 0:
            return bool(q.coef[0] > 0)
        if q.degree() % 2 or q.coef[-1] <= 0:
            return False
        roots = q.roots()
        return not np.any(np.abs(roots.imag) <= tol * (1 + np.abs(roots.real)))

    u_pos = positive_everywhere(P, 1.0)
    d4_neg = positive_everywhere(d4, -1.0)
    return {"u_positive": u_pos, "fourth_derivative_negative": d4_neg, "obstructed": not (u_pos and d4_neg)}
