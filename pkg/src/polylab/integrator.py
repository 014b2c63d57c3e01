"""Adaptive Dormand-Prince 5(4) integration of the radial systems.

Integration starts from the series state at a small radius, runs with a PI
step-size controller and stops at the horizon or at the first threshold
crossing of v_1 (blowup for e^u, extinction for -u^{-p}).  Every accepted
step keeps the coefficients of the classical quartic continuous extension,
so trajectories can be evaluated anywhere between their nodes.
"""

from __future__ import annotations

import enum
import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaincc, gammaln

from .errors import (
    InvalidSpec,
    NonfiniteState,
    NonpositiveU,
    OutOfRange,
    TailNotIntegrable,
)
from .radial_system import DEFAULT_R0, ProblemSpec, StateVector, make_rhs, taylor_start

__all__ = [
    "IntegrationControls",
    "TerminationKind",
    "Termination",
    "Trajectory",
    "integrate",
    "evaluate",
    "quadrature_weighted",
    "weighted_integral",
    "synthetic_trajectory",
    "QuadratureResult",
]

# Dormand & Prince (1980), with Hairer's dense-output coefficients.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = _A[6]
# b - b_hat, the embedded 4th-order error weights (7 stages, FSAL)
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
_D = np.array(
    [
        -12715105075 / 11282082432,
        0.0,
        87487479700 / 32700410799,
        -10690763975 / 1880347072,
        701980252875 / 199316789632,
        -1453857185 / 822651844,
        69997945 / 29380423,
    ]
)

_SAFETY = 0.9
_PI_ALPHA = 0.7 / 5
_PI_BETA = 0.4 / 5
_FAC_MIN = 0.2
_FAC_MAX = 5.0


@dataclass(frozen=True)
class IntegrationControls:
    rtol: float = 1e-10
    atol: float = 1e-12
    r_max: float = 40.0
    u_max: float = 40.0
    u_min: float = 1e-8
    h_min: float = 1e-13
    max_steps: int = 10_000_000
    r0: float = DEFAULT_R0

    def __post_init__(self):
        checks = {
            "rtol": self.rtol > 0,
            "atol": self.atol > 0,
            "h_min": self.h_min > 0,
            "u_min": self.u_min > 0,
            "u_max": self.u_max > 0,
            "r_max": self.r_max > self.r0,
            "max_steps": self.max_steps >= 1,
            "r0": 0 < self.r0 <= 1e-3,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise InvalidSpec(f"invalid integration controls: {', '.join(bad)}")

    def tightened(self, factor: float = 10.0) -> "IntegrationControls":
        return replace(self, rtol=self.rtol / factor, atol=self.atol / factor)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "IntegrationControls":
        return cls(**d)


class TerminationKind(str, enum.Enum):
    REACHED_HORIZON = "ReachedHorizon"
    BLOWUP = "Blowup"
    EXTINCT = "Extinct"
    STEP_UNDERFLOW = "StepUnderflow"
    STEP_LIMIT = "StepLimit"


@dataclass(frozen=True)
class Termination:
    """Why integration stopped.

    ``radius`` is the event radius for Blowup (R_est) and Extinct (rho),
    the horizon for ReachedHorizon, and the last radius otherwise.  For
    Blowup, ``fit`` holds the exploratory refinement u ~ -kappa ln(R - r) + c.
    """

    kind: TerminationKind
    radius: float
    fit: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "radius": self.radius, "fit": self.fit}

    @classmethod
    def from_dict(cls, d: dict) -> "Termination":
        return cls(TerminationKind(d["kind"]), float(d["radius"]), d.get("fit"))

    def __str__(self):
        return f"{self.kind.value}(r={self.radius:.17g})"


class _Dense:
    """Per-step quartic interpolants plus node states."""

    def __init__(self, rs, ys, hs, conts):
        self.rs = rs
        self.ys = ys
        self.hs = hs
        self.conts = conts  # per step: (rcont1, rcont2, rcont3, rcont4)

    def __call__(self, r: float) -> np.ndarray:
        i = bisect_right(self.rs, r) - 1
        if i < 0:
            raise OutOfRange(r)
        if self.rs[i] == r:
            return self.ys[i].copy()
        if i >= len(self.conts):
            raise OutOfRange(r)
        th = (r - self.rs[i]) / self.hs[i]
        th1 = 1.0 - th
        c1, c2, c3, c4 = self.conts[i]
        return self.ys[i] + th * (c1 + th1 * (c2 + th * (c3 + th1 * c4)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted integration steps with dense output.

    ``r`` and ``y`` hold the node radii and states (``y[i]`` is the 4m state
    at ``r[i]``); ``interpolant`` evaluates the state between nodes.
    """

    spec: ProblemSpec
    controls: IntegrationControls
    r: np.ndarray
    y: np.ndarray
    termination: Termination
    interpolant: Callable[[float], np.ndarray] = field(repr=False)
    error_estimates: np.ndarray = field(default=None, repr=False)
    stats: dict = field(default_factory=dict)

    @property
    def r_first(self) -> float:
        return float(self.r[0])

    @property
    def r_last(self) -> float:
        return float(self.r[-1])

    @property
    def u(self) -> np.ndarray:
        return self.y[:, 0]

    def v(self, k: int) -> np.ndarray:
        return self.y[:, 2 * (k - 1)]

    def node(self, i: int) -> StateVector:
        return StateVector(self.r[i], self.y[i])

    @property
    def kind(self) -> TerminationKind:
        return self.termination.kind

    def __len__(self):
        return len(self.r)


def evaluate(traj: Trajectory, r: float) -> StateVector:
    """State at radius ``r`` from the dense output; exact at node radii.

    Raises
    ------
    OutOfRange
        If ``r`` lies outside ``[traj.r_first, traj.r_last]``.
    """
    r = float(r)
    if not (traj.r_first <= r <= traj.r_last):
        raise OutOfRange(f"r={r!r} outside [{traj.r_first!r}, {traj.r_last!r}]")
    return StateVector(r, traj.interpolant(r))


def evaluate_u(traj: Trajectory, rs) -> np.ndarray:
    """Vectorised v_1 evaluation for quadrature; no range checks."""
    return np.array([traj.interpolant(float(x))[0] for x in np.atleast_1d(rs)])


def _error_norm(err, y0, y1, rtol, atol):
    sc = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    with np.errstate(over="ignore", invalid="ignore"):
        val = math.sqrt(float(np.mean((err / sc) ** 2)))
    return val if math.isfinite(val) else math.inf


def _hermite_start_step(rhs, r0, y0, f0, rtol, atol, r_span):
    sc = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / sc) ** 2))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, r_span)
    try:
        f1 = rhs(r0 + h0, y0 + h0 * f0)
        d2 = np.sqrt(np.mean(((f1 - f0) / sc) ** 2)) / h0
    except (NonfiniteState, NonpositiveU):
        return h0 * 1e-3
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, r_span)


def _event_value(spec: ProblemSpec, controls: IntegrationControls):
    # positive while the trajectory is alive
    if spec.is_exp:
        return lambda u: controls.u_max - u
    return lambda u: u - controls.u_min


def _locate_event(dense_step, r_a, r_b, g, tol):
    # bisection on the dense output: g > 0 at r_a, g <= 0 at r_b
    lo, hi = r_a, r_b
    while hi - lo > tol * (1.0 + hi):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(dense_step(mid)[0]) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def _fit_blowup(r: np.ndarray, u: np.ndarray, du: np.ndarray, r_event: float) -> Optional[dict]:
    """Fit u ~ c - kappa ln(R - r) on the trailing nodes; exploratory only.

    Uses 1/u' = (R - r)/kappa, which is linear in r.
    """
    if len(r) < 5 or np.any(du <= 0) or not np.all(np.isfinite(du)):
        return None
    x = r - r[-1]
    scale = float(-x[0])
    # nodes closer than round-off at very large radii leave nothing to fit
    if not scale > 0 or len(np.unique(x)) < 3:
        return None
    try:
        slope, icpt = np.polyfit(x / scale, 1.0 / du, 1)
    except np.linalg.LinAlgError:
        return None
    slope /= scale
    if not slope < 0:
        return None
    kappa = -1.0 / slope
    R = r[-1] + icpt * kappa
    if not R > r[-1]:
        return None
    c = float(np.mean(u + kappa * np.log(R - r)))
    return {"R_fit": float(R), "kappa": float(kappa), "c": c, "r_event": float(r_event)}


def integrate(spec: ProblemSpec, controls: IntegrationControls = IntegrationControls()) -> Trajectory:
    """Integrate ``spec`` from its series start to ``controls.r_max`` or an event.

    Termination is one of ReachedHorizon, Blowup (v_1 >= u_max, e^u only),
    Extinct (v_1 <= u_min, negative power only), StepUnderflow or StepLimit.
    The event radius is located by bisection on the dense output to
    ``1e-10 (1 + r)``.  A step that would need to be shorter than ``h_min``
    ends the run as StepUnderflow unless v_1 is already within reach of the
    relevant threshold, in which case it is reported as that event.
    """
    rhs = make_rhs(spec)
    rtol, atol = controls.rtol, controls.atol
    g = _event_value(spec, controls)

    start = taylor_start(spec, controls.r0)
    r = start.r
    y = np.array(start.y)
    f = rhs(r, y)

    rs = [r]
    ys = [y.copy()]
    hs = []
    conts = []
    errs = [0.0]
    h = _hermite_start_step(rhs, r, y, f, rtol, atol, controls.r_max - r)
    err_prev = 1e-4
    n_rej = 0
    termination = None
    K = np.empty((7, y.size))

    steps = 0
    while termination is None:
        if steps >= controls.max_steps:
            termination = Termination(TerminationKind.STEP_LIMIT, r)
            break
        last = False
        if r + h >= controls.r_max:
            h = controls.r_max - r
            last = True
        if h < controls.h_min:
            termination = _underflow(spec, controls, r, y)
            break
        try:
            K[0] = f
            for s in range(1, 7):
                K[s] = rhs(r + _C[s] * h, y + h * (_A[s] @ K[:s]))
            y_new = y + h * (_B @ K[:6])
            ok = bool(np.all(np.isfinite(y_new)))
        except (NonfiniteState, NonpositiveU, OverflowError, FloatingPointError):
            ok = False
        if not ok:
            h *= 0.25
            n_rej += 1
            continue
        err = _error_norm(h * (_E @ K), y, y_new, rtol, atol)
        if err <= 1.0:
            err = max(err, 1e-10)
            fac = _SAFETY * err ** -_PI_ALPHA * err_prev ** _PI_BETA
            fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            if n_rej and fac > 1.0:
                fac = 1.0
            ydiff = y_new - y
            bspl = h * K[0] - ydiff
            cont = (ydiff, bspl, ydiff - h * K[6] - bspl, h * (_D @ K))
            r_new = controls.r_max if last else r + h
            steps += 1
            n_rej = 0
            err_prev = err
            if g(y_new[0]) <= 0:
                y0 = y.copy()
                r_a = r
                hh = h

                def step_dense(x, y0=y0, r_a=r_a, hh=hh, cont=cont):
                    th = (x - r_a) / hh
                    th1 = 1.0 - th
                    c1, c2, c3, c4 = cont
                    return y0 + th * (c1 + th1 * (c2 + th * (c3 + th1 * c4)))

                r_ev = _locate_event(step_dense, r_a, r_new, g, 1e-10)
                # the trajectory ends at the event; the step's interpolant still covers [r_a, r_ev]
                hs.append(h)
                conts.append(cont)
                rs.append(r_ev)
                ys.append(step_dense(r_ev))
                errs.append(err)
                termination = _event_termination(spec, rs, ys, r_ev)
                break
            hs.append(h)
            conts.append(cont)
            rs.append(r_new)
            ys.append(y_new.copy())
            errs.append(err)
            r, y, f = r_new, y_new, K[6].copy()
            if last:
                termination = Termination(TerminationKind.REACHED_HORIZON, r)
                break
            h *= fac
        else:
            fac = max(_FAC_MIN, _SAFETY * err ** -0.2)
            h *= min(1.0, fac)
            n_rej += 1

    r_arr = np.array(rs)
    y_arr = np.array(ys)
    r_arr.setflags(write=False)
    y_arr.setflags(write=False)
    dense = _Dense(rs, ys, hs, conts)
    return Trajectory(
        spec=spec,
        controls=controls,
        r=r_arr,
        y=y_arr,
        termination=termination,
        interpolant=dense,
        error_estimates=np.array(errs),
        stats={"steps": steps},
    )


def _event_termination(spec, rs, ys, r_ev):
    if spec.is_exp:
        tail = slice(max(0, len(rs) - 20), len(rs))
        yt = np.array(ys[tail])
        fit = _fit_blowup(np.array(rs[tail]), yt[:, 0], yt[:, 1], r_ev)
        return Termination(TerminationKind.BLOWUP, float(r_ev), fit)
    return Termination(TerminationKind.EXTINCT, float(r_ev))


def _underflow(spec, controls, r, y):
    u = float(y[0])
    if spec.is_exp and u >= 0.5 * controls.u_max:
        return Termination(TerminationKind.BLOWUP, float(r), None)
    if not spec.is_exp and u <= math.sqrt(controls.u_min):
        return Termination(TerminationKind.EXTINCT, float(r), None)
    return Termination(TerminationKind.STEP_UNDERFLOW, float(r))


def synthetic_trajectory(spec: ProblemSpec, state_fn, radii, termination=None) -> Trajectory:
    """Trajectory whose interpolant is an exact function of r.

    ``state_fn(r)`` must return the 4m state.  Used to exercise the
    quadrature and checking code on known profiles.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size < 2 or np.any(np.diff(radii) <= 0):
        raise InvalidSpec("synthetic radii must be strictly increasing with at least two points")
    ys = np.array([np.asarray(state_fn(float(x)), dtype=float) for x in radii])
    if ys.shape[1] != spec.dim:
        raise InvalidSpec("state_fn returns the wrong number of components")
    radii.setflags(write=False)
    ys.setflags(write=False)
    lo, hi = float(radii[0]), float(radii[-1])

    def interp(x):
        if not (lo <= x <= hi):
            raise OutOfRange(x)
        return np.asarray(state_fn(x), dtype=float)

    if termination is None:
        termination = Termination(TerminationKind.REACHED_HORIZON, hi)
    return Trajectory(spec, IntegrationControls(r_max=hi, r0=min(1e-3, lo) if lo > 0 else 1e-4),
                      radii, ys, termination, interp, np.zeros(len(radii)), {"synthetic": True})


# --- quadrature -------------------------------------------------------------

_GL5_X, _GL5_W = np.polynomial.legendre.leggauss(5)
_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_bound: float
    body: float = 0.0
    head: float = 0.0
    tail: float = 0.0
    tail_model: Optional[str] = None

    def __iter__(self):
        return iter((self.value, self.error_bound))


def weighted_integral(traj: Trajectory, k: int, a: float, b: float):
    """int_a^b t^k e^{u(t)} dt over the dense output, per-step 5-point Gauss-Legendre.

    Returns ``(value, error_estimate)``; the estimate is the summed
    difference to 3-point Gauss-Legendre on the same panels.
    """
    if b <= a:
        return 0.0, 0.0
    r = traj.r
    i0 = max(int(np.searchsorted(r, a, side="right")) - 1, 0)
    i1 = int(np.searchsorted(r, b, side="left"))
    edges = np.concatenate(([a], r[i0 + 1:i1], [b]))
    total = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        x5 = mid + half * _GL5_X
        x3 = mid + half * _GL3_X
        f5 = x5**k * np.exp(evaluate_u(traj, x5))
        f3 = x3**k * np.exp(evaluate_u(traj, x3))
        q5 = half * float(_GL5_W @ f5)
        q3 = half * float(_GL3_W @ f3)
        total += q5
        err += abs(q5 - q3)
    return total, err


def _tail_fit(traj: Trajectory):
    """Upper envelopes for u on the last decade of nodes.

    Returns a list of (model, slope, intercept, residual) with
    u <= slope * x + intercept on the window, x = r or ln r.
    """
    r, u = traj.r, traj.u
    R = r[-1]
    mask = r >= R / 10.0
    if mask.sum() < 3:
        mask = np.zeros_like(r, dtype=bool)
        mask[-3:] = True
    rw, uw = r[mask], u[mask]
    fits = []
    for model, x in (("exponential", rw), ("power", np.log(rw))):
        slope, icpt = np.polyfit(x, uw, 1)
        shift = float(np.max(uw - (slope * x + icpt)))
        resid = float(np.sqrt(np.mean((uw - (slope * x + icpt)) ** 2)))
        fits.append((model, float(slope), float(icpt + max(shift, 0.0)), resid))
    return fits


def _tail_integral(model, slope, icpt, k, R):
    if model == "exponential":
        if slope >= 0:
            return None
        lam = -slope
        # e^mu int_R^inf t^k e^{-lam t} dt = e^mu lam^{-(k+1)} Gamma(k+1, lam R)
        log_val = icpt - (k + 1) * math.log(lam) + gammaln(k + 1)
        q = gammaincc(k + 1, lam * R)
        return math.exp(log_val + math.log(q)) if q > 0 else 0.0
    s = k + 1 + slope
    if s >= 0:
        return None
    # work in logs: steep power envelopes have huge intercepts
    return math.exp(icpt + s * math.log(R) - math.log(-s))


def quadrature_weighted(traj: Trajectory, k: int, tail: str = "auto") -> QuadratureResult:
    """int_0^inf t^k e^{u(t)} dt along an exponential-case trajectory.

    The body [r0, R_max] uses per-step Gauss-Legendre on the dense output.
    The head [0, r0] contributes e^{u(0)} r0^{k+1}/(k+1).  The tail beyond
    R_max is bounded from an upper envelope of u fitted on the last decade
    of nodes: linear in r (``tail="exponential"``), linear in ln r
    (``tail="power"``), the better-fitting integrable one (``"auto"``), or
    omitted (``"none"``).  The tail estimate is included in ``value`` and
    also counted in ``error_bound``.

    Raises
    ------
    TailNotIntegrable
        If the requested envelope does not decay fast enough.
    """
    if traj.termination.kind != TerminationKind.REACHED_HORIZON:
        raise InvalidSpec(f"quadrature needs a trajectory that reached its horizon, got {traj.termination}")
    r0, R = traj.r_first, traj.r_last
    body, qerr = weighted_integral(traj, k, r0, R)
    u0 = traj.spec.init[0]
    head = math.exp(u0) * r0 ** (k + 1) / (k + 1)
    head_err = abs(head) * max(abs(traj.spec.init[1]), 1.0) * r0 * r0
    tail_val, model = 0.0, None
    if tail != "none":
        fits = _tail_fit(traj)
        if tail != "auto":
            fits = [f for f in fits if f[0] == tail]
        candidates = []
        for mdl, slope, icpt, resid in fits:
            t = _tail_integral(mdl, slope, icpt, k, R)
            if t is not None:
                candidates.append((resid, mdl, t))
        if not candidates:
            raise TailNotIntegrable(f"fitted tail envelope is not integrable for k={k} ({tail})")
        _, model, tail_val = min(candidates)
    # interpolation error of u carries into the integrand as a relative error
    interp_err = traj.controls.rtol * 10.0 * abs(body)
    value = head + body + tail_val
    bound = qerr + head_err + tail_val + interp_err
    return QuadratureResult(value, bound, body, head, tail_val, model)
