"""Classification of radial shots, separatrix bisection and parameter scans."""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import BracketFailure, IndeterminateShot, InvalidSpec
from .integrator import (
    IntegrationControls,
    TerminationKind,
    Trajectory,
    integrate,
)
from .continuation import NEGLIGIBLE_U, kernel_continuation
from .radial_system import Exp, ProblemSpec

__all__ = [
    "ClassificationKind",
    "Classification",
    "SeparatrixResult",
    "classify",
    "classify_trajectory",
    "find_separatrix",
    "default_horizon",
    "scan_n2",
    "ScanRecord",
    "sign_crossing_check",
    "confirm_blowup",
    "resolve",
    "mass_certificate",
    "predicted_mass_limit",
    "blowup_radii_nonincreasing",
    "monotone_classification",
    "m2_lattice",
    "lower_bound_margin",
    "upper_bound_margin",
    "scaling_error",
    "sigma_shrinks",
]

log = logging.getLogger(__name__)


class ClassificationKind(str, enum.Enum):
    BLOWUP = "Blowup"
    GLOBAL = "Global"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class Classification:
    """Outcome of one exponential-case shot.

    Blowup carries ``log_R_est`` (always finite) and ``R_est`` (which
    overflows to inf beyond ~1e308, or is None when only certified by the
    mass bound).  Global carries ``sigma`` = Delta u at the last radius.
    ``evidence`` names what decided the outcome: ``event`` (threshold hit
    during integration), ``continuation`` (polyharmonic continuation after
    e^u underflowed), ``mass`` (the bound lim v_{2m} >= v_{2m} + r v_{2m}'/(N-2)
    turned positive) or ``horizon`` (nothing happened up to r_max).
    """

    kind: ClassificationKind
    R_est: Optional[float] = None
    sigma: Optional[float] = None
    reason: Optional[str] = None
    log_R_est: Optional[float] = None
    evidence: Optional[str] = None
    R_bracket: Optional[tuple] = None

    @property
    def is_blowup(self) -> bool:
        return self.kind is ClassificationKind.BLOWUP

    @property
    def is_global(self) -> bool:
        return self.kind is ClassificationKind.GLOBAL

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "R_est": self.R_est,
            "log_R_est": self.log_R_est,
            "sigma": self.sigma,
            "evidence": self.evidence,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Classification":
        def num(x):
            return None if x is None else float(x)

        return cls(ClassificationKind(d["kind"]), num(d.get("R_est")), num(d.get("sigma")), d.get("reason"),
                   num(d.get("log_R_est")), d.get("evidence"))


def default_horizon(N: int) -> float:
    return 100.0 if N <= 3 else 40.0


def _blowup(R, evidence, bracket=None):
    return Classification(ClassificationKind.BLOWUP, R_est=float(R), log_R_est=math.log(R),
                          evidence=evidence, R_bracket=bracket)


def classify_trajectory(traj: Trajectory) -> Classification:
    """Classification from the termination of one integration, nothing else."""
    kind = traj.termination.kind
    if kind is TerminationKind.BLOWUP:
        return _blowup(traj.termination.radius, "event")
    if kind is TerminationKind.REACHED_HORIZON:
        return Classification(ClassificationKind.GLOBAL, sigma=float(traj.y[-1, 2]), evidence="horizon")
    return Classification(ClassificationKind.INDETERMINATE, reason=kind.value)


def mass_certificate(traj: Trajectory) -> Optional[float]:
    """First node radius where lim v_{2m} is certified positive, or None (N >= 3).

    v_{2m} increases and r^{N-1} v_{2m}' is nondecreasing, so for any r
    lim v_{2m} >= v_{2m}(r) + r v_{2m}'(r) / (N - 2).  A positive bound
    excludes an entire solution, which must then blow up.
    """
    N = traj.spec.N
    if N < 3:
        return None
    k = 2 * traj.spec.m
    bound = traj.y[:, 2 * (k - 1)] + traj.r * traj.y[:, 2 * k - 1] / (N - 2)
    idx = np.flatnonzero(bound > 0)
    return float(traj.r[idx[0]]) if idx.size else None


def _continue(traj: Trajectory, controls: IntegrationControls):
    """Resolve a horizon-reaching trajectory whose forcing has underflowed."""
    u_last, du_last = traj.y[-1, 0], traj.y[-1, 1]
    if not (u_last <= NEGLIGIBLE_U and du_last < 0):
        return None
    kc = kernel_continuation(traj.spec.N, traj.spec.m, traj.r_last, traj.y[-1])
    ell = kc.first_crossing(controls.u_max)
    if ell is None:
        return Classification(ClassificationKind.GLOBAL, sigma=float(traj.y[-1, 2]), evidence="continuation")
    ell_lo = kc.first_crossing(NEGLIGIBLE_U)
    log_hi = kc.log_r_c + ell
    log_lo = kc.log_r_c + (ell_lo if ell_lo is not None else ell)
    if log_hi < _DIRECT_LOG_RADIUS:
        t2 = integrate(traj.spec, replace(controls, r_max=2.0 * math.exp(log_hi)))
        if t2.termination.kind is TerminationKind.BLOWUP:
            return _blowup(t2.termination.radius, "event")
    R = math.exp(log_hi) if log_hi < 709 else math.inf
    return Classification(ClassificationKind.BLOWUP, R_est=R, log_R_est=log_hi, evidence="continuation",
                          R_bracket=(log_lo, log_hi))


_DIRECT_LOG_RADIUS = math.log(1e8)


def resolve(spec: ProblemSpec, controls: IntegrationControls, certificates: bool = False,
            extensions: int = 3, return_trajectory: bool = False):
    """Classify an exponential-case shot, pushing past the horizon when possible.

    The first integration runs to ``controls.r_max``.  If it reaches the
    horizon with e^u underflowed, the polyharmonic continuation decides;
    otherwise the horizon is extended fivefold up to ``extensions`` times.
    With ``certificates`` the mass bound also counts as Blowup evidence.
    """
    traj = integrate(spec, controls)
    first = traj
    for attempt in range(extensions + 1):
        c = classify_trajectory(traj)
        if c.kind is not ClassificationKind.GLOBAL:
            break
        if certificates and mass_certificate(traj) is not None:
            c = Classification(ClassificationKind.BLOWUP, evidence="mass",
                               reason=f"certified at r={mass_certificate(traj):.6g}")
            break
        cc = _continue(traj, replace(controls, r_max=traj.r_last))
        if cc is not None:
            c = cc
            break
        if attempt == extensions:
            break
        traj = integrate(spec, replace(controls, r_max=traj.r_last * 5.0))
    return (c, first) if return_trajectory else c


def predicted_mass_limit(traj: Trajectory) -> float:
    """Estimate of lim Delta u from the horizon state alone (m = 1, N >= 3).

    M(r) = v_2 + r v_2'/(N-2) has M' = r e^u/(N-2), so
    lim v_2 = M(R) + int_R^inf t e^u dt / (N-2).  The tail is taken from the
    local power law u(t) ~ u(R) + s ln(t/R), s = R u'(R), which gives
    e^{u(R)} R^2 / (-s - 2).  Along u = -4 ln r + L (N >= 5) this cancels
    the (16 - 4N)/R^2 offset of M exactly, and for exponential decay it
    matches the leading term.  Returns inf when u does not decay faster
    than r^{-2}.
    """
    N = traj.spec.N
    if N < 3 or traj.spec.m != 1:
        raise InvalidSpec("predicted_mass_limit needs N >= 3 and m = 1")
    R = traj.r_last
    u, du, lap, dlap = (float(x) for x in traj.y[-1])
    M = lap + R * dlap / (N - 2)
    s = R * du
    if not s < -2:
        return math.inf
    return M + math.exp(u + 2 * math.log(R)) / (-s - 2) / (N - 2)


def _above_reference(traj: Trajectory) -> bool:
    return traj.spec.N >= 3 and predicted_mass_limit(traj) > 0


def classify(spec: ProblemSpec, controls: IntegrationControls, return_trajectory: bool = False,
             certificates: bool = True):
    """Integrate an m = 1 exponential-case shot and classify its fate.

    Blowup when the integration hits the blowup threshold or, with
    ``certificates`` (N >= 3), when the mass bound certifies that Delta u has
    a positive limit.  Global when the horizon is reached with
    sigma = Delta u(r_max).  Indeterminate on step underflow or step limit.
    """
    if not spec.is_exp or spec.m != 1:
        raise InvalidSpec("classify is defined for Delta^2 u = e^u (m = 1)")
    traj = integrate(spec, controls)
    c = classify_trajectory(traj)
    if c.is_global and certificates:
        r_cert = mass_certificate(traj)
        if r_cert is not None:
            c = Classification(ClassificationKind.BLOWUP, evidence="mass", reason=f"certified at r={r_cert:.6g}")
    return (c, traj) if return_trajectory else c


@dataclass(frozen=True, eq=False)
class SeparatrixResult:
    N: int
    beta_lo: float
    beta_hi: float
    tol_beta: float
    r_max: float
    controls: IntegrationControls
    witness_lo: Trajectory = field(repr=False)
    witness_hi: Trajectory = field(repr=False)
    iterations: int = 0
    sigma_history: tuple = ()

    @property
    def beta0_est(self) -> float:
        return 0.5 * (self.beta_lo + self.beta_hi)

    @property
    def width(self) -> float:
        return self.beta_hi - self.beta_lo

    def trajectory(self) -> Trajectory:
        """The shot at the bracket midpoint.

        Either witness can sit a full bracket width away from the estimate,
        and the profile drifts like r^2/(2N) per unit of beta.
        """
        return integrate(ProblemSpec.exponential(self.N, self.beta0_est), self.controls)

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "beta_lo": self.beta_lo,
            "beta_hi": self.beta_hi,
            "beta0_est": self.beta0_est,
            "tol_beta": self.tol_beta,
            "r_max": self.r_max,
            "iterations": self.iterations,
            "controls": self.controls.to_dict(),
            "sigma_lo": float(self.witness_lo.y[-1, 2]),
            "R_est_hi": (self.witness_hi.termination.radius
                         if self.witness_hi.termination.kind is TerminationKind.BLOWUP else None),
        }


def find_separatrix(
    N: int,
    r_max: Optional[float] = None,
    tol_beta: float = 1e-8,
    controls: Optional[IntegrationControls] = None,
    alpha: float = 0.0,
    reference: bool = True,
) -> SeparatrixResult:
    """Bisect on beta = Delta u(0) between a Global and a Blowup shot.

    The bracket starts at [-8, 0]; the lower end is doubled downward until
    the shot reaches the horizon.  Every bisection step keeps a Global lower
    end and a Blowup upper end.

    With ``reference`` a shot that reaches the horizon is put on the upper
    side when its predicted limit of Delta u (``predicted_mass_limit``) is
    positive.  Without it the slowly departing blowup shots just above
    beta_0 count as Global and the bracket drifts with r_max.

    Raises
    ------
    BracketFailure
        No Global shot down to beta = -2**10, or the upper end does not blow up.
    IndeterminateShot
        A shot ended in step underflow or step limit.
    """
    if N < 3:
        # every shot blows up in dimensions one and two, so no lower end exists
        raise BracketFailure(f"no Global bracket end exists for N={N}")
    if r_max is None:
        r_max = default_horizon(N)
    controls = replace(controls or IntegrationControls(), r_max=float(r_max))

    def shoot(beta):
        c, traj = classify(ProblemSpec.exponential(N, beta, alpha), controls, return_trajectory=True)
        if c.kind is ClassificationKind.INDETERMINATE:
            raise IndeterminateShot(beta, traj.termination)
        if reference and c.is_global and _above_reference(traj):
            c = Classification(ClassificationKind.BLOWUP, evidence="reference",
                               reason="mass bound above the separatrix level at the horizon")
        return c, traj

    hi = 0.0
    c_hi, t_hi = shoot(hi)
    if not c_hi.is_blowup:
        raise BracketFailure(f"beta=0 does not blow up within r_max={r_max}")
    lo = -8.0
    c_lo, t_lo = shoot(lo)
    while not c_lo.is_global:
        hi, t_hi = lo, t_lo
        lo *= 2.0
        if lo < -(2.0**10):
            raise BracketFailure(f"no Global shot down to beta=-2^10 (N={N}, r_max={r_max})")
        c_lo, t_lo = shoot(lo)

    sigmas = [c_lo.sigma]
    it = 0
    while hi - lo > tol_beta:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        c, traj = shoot(mid)
        if c.is_global:
            lo, t_lo = mid, traj
            sigmas.append(c.sigma)
        else:
            hi, t_hi = mid, traj
        it += 1
    log.debug("separatrix N=%d: [%r, %r] after %d steps", N, lo, hi, it)
    return SeparatrixResult(N, lo, hi, tol_beta, float(r_max), controls, t_lo, t_hi, it, tuple(sigmas))


def sign_crossing_check(traj: Trajectory, m: Optional[int] = None) -> Optional[float]:
    """First radius where v_{2m} = Delta^{2m-1} u >= 0, or None.

    Nodes are scanned first; a crossing between nodes is located by
    bisection on the dense output.  Data with v_{2m}(0) >= 0 cross at 0.
    """
    m = traj.spec.m if m is None else m
    k = 2 * m
    if traj.spec.init[k - 1] >= 0:
        return 0.0
    vals = traj.y[:, 2 * (k - 1)]
    idx = np.flatnonzero(vals >= 0)
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
        if traj.interpolant(mid)[2 * (k - 1)] >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def confirm_blowup(spec: ProblemSpec, controls: IntegrationControls, traj: Optional[Trajectory] = None,
                   extra: float = 5.0, rel: float = 1e-3) -> bool:
    """Check that a Blowup event is a genuine finite-radius singularity.

    Re-integrates with the threshold raised by ``extra`` and requires the
    event radius to move by less than ``rel`` relative.
    """
    traj = traj if traj is not None else integrate(spec, controls)
    if traj.termination.kind is not TerminationKind.BLOWUP:
        return False
    R1 = traj.termination.radius
    t2 = integrate(spec, replace(controls, u_max=controls.u_max + extra))
    if t2.termination.kind is not TerminationKind.BLOWUP:
        return False
    return abs(t2.termination.radius - R1) < rel * R1


@dataclass(frozen=True)
class ScanRecord:
    init: tuple
    classification: Classification
    falsification: bool = False

    @property
    def beta(self) -> float:
        return self.init[1]

    def row(self) -> dict:
        c = self.classification
        return {
            "beta": self.init[1],
            "kind": c.kind.value,
            "R_est": c.R_est,
            "sigma": c.sigma,
            "log_R_est": c.log_R_est,
            "evidence": c.evidence,
        }


def _scan_cell(args):
    spec, controls = args
    return resolve(spec, controls)


def _run_cells(cells, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_scan_cell, cells))
    return [_scan_cell(c) for c in cells]


def m2_lattice() -> list:
    """Twelve m = 2 initial data (0, a, b, c) with a in {-5, -1, 1}, b in {-5, 5}, c in {-5, -1}."""
    return [(0.0, a, b, c) for a in (-5.0, -1.0, 1.0) for b in (-5.0, 5.0) for c in (-5.0, -1.0)]


def scan_n2(
    inits: Iterable,
    controls: Optional[IntegrationControls] = None,
    m: int = 1,
    workers: int = 1,
) -> list:
    """Shots of Delta^{2m} u = e^u in dimension two.

    ``inits`` holds beta values for m = 1 or full init tuples for m = 2.
    No entire solution exists in R^2, so every shot should blow up; a
    Global record is flagged as a falsification.  Shots whose forcing
    underflows before the horizon are resolved by the polyharmonic
    continuation, so blowup radii far beyond double range are reported
    through ``log_R_est``.
    """
    if m not in (1, 2):
        raise InvalidSpec("scan_n2 supports m in {1, 2}")
    controls = controls or IntegrationControls(r_max=200.0)
    specs = []
    for item in inits:
        init = (0.0, float(item)) if m == 1 and np.isscalar(item) else tuple(float(x) for x in item)
        specs.append(ProblemSpec(2, m, Exp(), init))
    results = _run_cells([(s, controls) for s in specs], workers)
    return [ScanRecord(s.init, c, falsification=c.is_global) for s, c in zip(specs, results)]


def blowup_radii_nonincreasing(records: Sequence[ScanRecord]) -> bool:
    """R_est must not increase with beta along an m = 1 scan."""
    pts = sorted((r.beta, r.classification.log_R_est) for r in records if r.classification.is_blowup)
    return all(b[1] <= a[1] + 1e-9 for a, b in zip(pts, pts[1:]))


def monotone_classification(records: Sequence[ScanRecord]) -> bool:
    """Blowup set up-closed and Global set down-closed in beta."""
    pts = sorted((r.beta, r.classification.kind) for r in records)
    seen_blowup = False
    for _, kind in pts:
        if kind is ClassificationKind.BLOWUP:
            seen_blowup = True
        elif kind is ClassificationKind.GLOBAL and seen_blowup:
            return False
    return True


def lower_bound_margin(traj: Trajectory) -> float:
    """min over nodes of [u - u(0) - beta r^2/(2N)] / (1 + r^2), for m = 1 exponential shots.

    Delta u is nondecreasing, so u - u(0) >= beta r^2/(2N) exactly; the
    invariant suite allows -1e-8.
    """
    spec = traj.spec
    if spec.m != 1 or not spec.is_exp:
        raise InvalidSpec("lower bound is stated for m = 1, exponential nonlinearity")
    u0, beta = spec.init[0], spec.init[1]
    r = traj.r
    return float(np.min((traj.u - u0 - beta * r * r / (2 * spec.N)) / (1 + r * r)))


def upper_bound_margin(traj: Trajectory, beta0: float) -> float:
    """min over nodes of [-(beta0 - beta) r^2/(2N) - u] / (1 + r^2) below the separatrix."""
    spec = traj.spec
    beta = spec.init[1]
    if beta >= beta0:
        raise InvalidSpec("upper bound applies for beta < beta0")
    r = traj.r
    bound = -(beta0 - beta) * r * r / (2 * spec.N) + spec.init[0]
    return float(np.min((bound - traj.u) / (1 + r * r)))


def scaling_error(N: int, beta_hat: float, lam: float = 2.0,
                  controls: Optional[IntegrationControls] = None, samples: int = 400) -> float:
    """sup |u_lam(r) - u(lam r) - 4 ln lam| over the common range.

    u_lam starts from (4 ln lam, lam^2 beta_hat), u from (0, beta_hat).
    """
    if lam < 1:
        raise InvalidSpec("use lam >= 1 (swap the roles of the two shots otherwise)")
    controls = controls or IntegrationControls(r_max=10.0)
    base = integrate(ProblemSpec.exponential(N, beta_hat), controls)
    scaled = integrate(ProblemSpec.exponential(N, lam * lam * beta_hat, 4 * math.log(lam)),
                       replace(controls, r_max=controls.r_max / lam))
    r_hi = min(scaled.r_last, base.r_last / lam)
    rs = np.linspace(scaled.r_first, r_hi, samples)
    a = np.array([scaled.interpolant(float(x))[0] for x in rs])
    b = np.array([base.interpolant(float(lam * x))[0] for x in rs])
    return float(np.max(np.abs(a - b - 4 * math.log(lam))))


def sigma_shrinks(result: "SeparatrixResult") -> bool:
    """|Delta u(r_max)| on successive lower ends decreases as the bracket tightens."""
    s = np.abs(np.asarray(result.sigma_history, dtype=float))
    return bool(np.all(np.diff(s) <= 1e-12 * (1 + s[:-1])))
