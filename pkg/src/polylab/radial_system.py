"""Radial form of the polyharmonic problems Delta^{2m} u = f(u) in R^N.

A radial solution is carried as the chain

    v_1 = u,  v_{k+1} = Delta v_k  (k < 2m),  Delta v_{2m} = f(v_1),

with the radial Laplacian Delta v = v'' + (N - 1) v' / r.  The state vector
interleaves values and radial derivatives, ``(v_1, v_1', v_2, v_2', ...)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import BadRadius, InvalidSpec, NonfiniteState, NonpositiveU

__all__ = [
    "Exp",
    "NegPower",
    "Nonlinearity",
    "ProblemSpec",
    "StateVector",
    "OperatorPolynomial",
    "radial_rhs",
    "make_rhs",
    "taylor_start",
    "series_coefficients",
    "emden_fowler_polynomial",
    "laplacian_eigenvalue",
    "closed_form_n4",
    "closed_form_n4_derivatives",
    "closed_form_n4_state",
    "N4_SCALE",
    "N4_BETA0",
    "DEFAULT_R0",
]

#: c = 1/(8 sqrt 6) in u = -4 ln(1 + c r^2); 384 c^2 = 1.
N4_SCALE = 1.0 / (8.0 * math.sqrt(6.0))
#: Delta u(0) of the N = 4 separatrix, -32 c = -4/sqrt(6).
N4_BETA0 = -4.0 / math.sqrt(6.0)

DEFAULT_R0 = 1e-4
MAX_START_RADIUS = 1e-3


@dataclass(frozen=True)
class Exp:
    """f(u) = e^u."""

    def __call__(self, u: float) -> float:
        try:
            return math.exp(u)
        except OverflowError:
            raise NonfiniteState(f"e^u overflows at u={u!r}") from None

    def to_dict(self) -> dict:
        return {"kind": "exp"}


@dataclass(frozen=True)
class NegPower:
    """f(u) = -u^{-p} for p > 0."""

    p: float

    def __post_init__(self):
        if not (self.p > 0 and math.isfinite(self.p)):
            raise InvalidSpec(f"negative power needs p > 0, got {self.p!r}")

    def __call__(self, u: float) -> float:
        if not u > 0:
            raise NonpositiveU(f"u={u!r} <= 0")
        return -(u ** -self.p)

    def to_dict(self) -> dict:
        return {"kind": "negpower", "p": self.p}


Nonlinearity = Union[Exp, NegPower]


def nonlinearity_from_dict(d: dict) -> Nonlinearity:
    kind = d.get("kind")
    if kind == "exp":
        return Exp()
    if kind == "negpower":
        return NegPower(float(d["p"]))
    raise InvalidSpec(f"unknown nonlinearity {kind!r}")


@dataclass(frozen=True)
class ProblemSpec:
    """One radial initial value problem.

    Parameters
    ----------
    N : int
        Space dimension.
    m : int
        Polyharmonic order; the equation is Delta^{2m} u = f(u), of order 4m.
    nonlinearity : Exp or NegPower
    init : tuple of float
        ``(u(0), Delta u(0), ..., Delta^{2m-1} u(0))``.  Odd radial
        derivatives at the origin are zero.
    """

    N: int
    m: int
    nonlinearity: Nonlinearity
    init: tuple

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise InvalidSpec(f"N must be an integer >= 1, got {self.N!r}")
        if int(self.m) != self.m or self.m < 1:
            raise InvalidSpec(f"m must be an integer >= 1, got {self.m!r}")
        init = tuple(float(x) for x in self.init)
        if len(init) != 2 * self.m:
            raise InvalidSpec(f"init needs {2 * self.m} values for m={self.m}, got {len(init)}")
        if not all(math.isfinite(x) for x in init):
            raise InvalidSpec("init values must be finite")
        if isinstance(self.nonlinearity, NegPower) and not init[0] > 0:
            raise InvalidSpec("negative power problems need u(0) > 0")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "init", init)

    @classmethod
    def exponential(cls, N: int, beta: float, alpha: float = 0.0) -> "ProblemSpec":
        """Delta^2 u = e^u with u(0) = alpha, Delta u(0) = beta."""
        return cls(N, 1, Exp(), (alpha, beta))

    @classmethod
    def negative_power(cls, N: int, p: float, a: float, b: float) -> "ProblemSpec":
        """Delta^2 u = -u^{-p} with u(0) = a, Delta u(0) = b."""
        return cls(N, 1, NegPower(p), (a, b))

    @property
    def dim(self) -> int:
        """Length of the first-order state, 4m."""
        return 4 * self.m

    @property
    def is_exp(self) -> bool:
        return isinstance(self.nonlinearity, Exp)

    def with_init(self, init: Sequence[float]) -> "ProblemSpec":
        return ProblemSpec(self.N, self.m, self.nonlinearity, tuple(init))

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "m": self.m,
            "nonlinearity": self.nonlinearity.to_dict(),
            "init": list(self.init),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        return cls(int(d["N"]), int(d["m"]), nonlinearity_from_dict(d["nonlinearity"]), tuple(d["init"]))


@dataclass(frozen=True)
class StateVector:
    """Radial state ``(v_1, v_1', ..., v_{2m}, v_{2m}')`` at radius ``r``."""

    r: float
    y: np.ndarray = field(repr=False)

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        if y.ndim != 1 or y.size % 4:
            raise InvalidSpec(f"state length must be a positive multiple of 4, got {y.shape}")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "r", float(self.r))

    @property
    def m(self) -> int:
        return self.y.size // 4

    def v(self, k: int) -> float:
        """v_k = Delta^{k-1} u, 1-based."""
        return float(self.y[2 * (k - 1)])

    def dv(self, k: int) -> float:
        """d v_k / dr, 1-based."""
        return float(self.y[2 * (k - 1) + 1])

    @property
    def u(self) -> float:
        return float(self.y[0])

    @property
    def laplacian(self) -> float:
        return float(self.y[2])


def make_rhs(spec: ProblemSpec) -> Callable[[float, np.ndarray], np.ndarray]:
    """Return ``f(r, y) -> dy/dr`` for ``spec``, valid for r > 0."""
    f = spec.nonlinearity
    nm1 = float(spec.N - 1)

    def rhs(r: float, y: np.ndarray) -> np.ndarray:
        dy = np.empty_like(y)
        dv = y[1::2]
        dy[0::2] = dv
        c = nm1 / r
        dy[1:-1:2] = y[2::2] - c * dv[:-1]
        dy[-1] = f(y[0]) - c * dv[-1]
        if not np.all(np.isfinite(dy)):
            raise NonfiniteState(f"non-finite derivative at r={r!r}")
        return dy

    return rhs


def radial_rhs(spec: ProblemSpec, state: StateVector) -> np.ndarray:
    """First-order radial system, ``d y / d r`` at ``state``.

    Raises
    ------
    BadRadius
        If ``state.r <= 0``; the origin is handled by :func:`taylor_start`.
    NonpositiveU
        Negative power nonlinearity with v_1 <= 0.
    NonfiniteState
        Overflow in the state or in e^u.
    """
    if not state.r > 0:
        raise BadRadius(f"radial_rhs needs r > 0, got {state.r!r}")
    if state.y.size != spec.dim:
        raise InvalidSpec(f"state has {state.y.size} components, spec needs {spec.dim}")
    if not np.all(np.isfinite(state.y)):
        raise NonfiniteState("non-finite state")
    return make_rhs(spec)(state.r, np.array(state.y))


def _exp_series(c: list, n: int) -> list:
    # exp of a power series in s, first n coefficients
    e = [math.exp(c[0])]
    for j in range(1, n):
        e.append(sum(i * c[i] * e[j - i] for i in range(1, j + 1)) / j)
    return e


def _pow_series(c: list, q: float, n: int) -> list:
    # (sum c_j s^j)^q for c_0 > 0, Miller's recurrence
    g = [c[0] ** q]
    for j in range(1, n):
        acc = sum((q * i - (j - i)) * c[i] * g[j - i] for i in range(1, j + 1))
        g.append(acc / (j * c[0]))
    return g


def series_coefficients(spec: ProblemSpec, terms: int = 3) -> np.ndarray:
    """Even power-series coefficients of each v_k about r = 0.

    Returns ``a`` of shape ``(2m, terms)`` with
    ``v_k(r) = sum_j a[k-1, j] r^{2j} + O(r^{2 terms})``.
    """
    M = 2 * spec.m
    N = spec.N
    a = np.zeros((M, terms))
    a[:, 0] = spec.init
    for j in range(1, terms):
        denom = 2 * j * (2 * j + N - 2)
        a[:-1, j] = a[1:, j - 1] / denom
        u_coeffs = list(a[0, :j])
        if isinstance(spec.nonlinearity, Exp):
            fj = _exp_series(u_coeffs, j)[j - 1]
        else:
            fj = -_pow_series(u_coeffs, -spec.nonlinearity.p, j)[j - 1]
        a[-1, j] = fj / denom
    return a


def taylor_start(spec: ProblemSpec, r0: float = DEFAULT_R0, terms: int = 3) -> StateVector:
    """State at a small radius ``r0`` from the series about the origin.

    With the default ``terms=3`` every v_k carries its r^0, r^2 and r^4
    terms, so the truncation error is O(r0^6).

    Raises
    ------
    BadRadius
        If ``r0`` is outside (0, 1e-3].
    """
    if not (0 < r0 <= MAX_START_RADIUS):
        raise BadRadius(f"r0 must lie in (0, {MAX_START_RADIUS}], got {r0!r}")
    a = series_coefficients(spec, terms)
    powers = np.arange(terms)
    r2 = r0 * r0
    vals = a @ (r2 ** powers)
    # d/dr r^{2j} = 2j r^{2j-1}
    ders = a[:, 1:] @ (2 * powers[1:] * r0 ** (2 * powers[1:] - 1))
    y = np.empty(spec.dim)
    y[0::2] = vals
    y[1::2] = ders
    return StateVector(r0, y)


@dataclass(frozen=True)
class OperatorPolynomial:
    """p(D) with r^{4m} Delta^{2m} = p(D), D = d/dt, t = ln r, on radial functions.

    ``coefficients[i]`` multiplies D^i; all entries are Python ints.
    """

    N: int
    m: int
    coefficients: tuple

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, k):
        """Evaluate p(k); exact for int or Fraction arguments."""
        acc = 0
        for c in reversed(self.coefficients):
            acc = acc * k + c
        return acc

    def lower_coefficients(self) -> tuple:
        """The coefficients of D^1 .. D^{4m-1} after the monic leading term."""
        return self.coefficients[1:-1]


def _polymul(p: list, q: list) -> list:
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def emden_fowler_polynomial(N: int, m: int) -> OperatorPolynomial:
    """Expand prod_{j<2m} (D - 2j)(D + N - 2 - 2j) with integer arithmetic."""
    coeffs = [1]
    for j in range(2 * m):
        coeffs = _polymul(coeffs, [-2 * j, 1])
        coeffs = _polymul(coeffs, [N - 2 - 2 * j, 1])
    return OperatorPolynomial(int(N), int(m), tuple(coeffs))


def laplacian_eigenvalue(N: int, k: int, times: int) -> int:
    """Coefficient c in Delta^times r^k = c r^{k - 2 times}, via Delta r^k = k(k+N-2) r^{k-2}."""
    c = 1
    for _ in range(times):
        c *= k * (k + N - 2)
        k -= 2
    return c


def closed_form_n4(r):
    """N = 4 separatrix with u(0) = 0: u(r) = -4 ln(1 + r^2 / (8 sqrt 6))."""
    r = np.asarray(r, dtype=float)
    out = -4.0 * np.log1p(N4_SCALE * r * r)
    return float(out) if out.ndim == 0 else out


def closed_form_n4_derivatives(r) -> dict:
    """First four r-derivatives, Delta u, (Delta u)' and Delta^2 u (N = 4) of the closed form."""
    r = np.asarray(r, dtype=float)
    c = N4_SCALE
    s = c * r * r
    g = 1.0 + s
    return {
        "u": -4.0 * np.log1p(s),
        "d1": -8.0 * c * r / g,
        "d2": 8.0 * c * (s - 1.0) / g**2,
        "d3": -16.0 * c * c * r * (s - 3.0) / g**3,
        "d4": 48.0 * c * c * (s * s - 6.0 * s + 1.0) / g**4,
        "lap": -16.0 * c * (s + 2.0) / g**2,
        "dlap": 32.0 * c * c * r * (s + 3.0) / g**3,
        "bilap": 384.0 * c * c / g**4,
    }


def closed_form_n4_state(r: float) -> StateVector:
    d = closed_form_n4_derivatives(r)
    return StateVector(r, [d["u"], d["d1"], d["lap"], d["dlap"]])
