"""Exact continuation of a radial state once the forcing e^u has underflowed.

When u is far below the underflow limit of e^u the equation reduces to
Delta^{2m} u = 0, whose radial solutions are spanned by r^lam (ln r)^q with
lam running over the roots of the Emden-Fowler polynomial (double roots get
the extra logarithm).  Matching the 4m state values at a radius r_c fixes the
combination, which can then be followed in log-radius far beyond the range
of double-precision radii.

Positive forcing only pushes u up (each radial integration of a nonnegative
source with zero data is nonnegative), so the radius where the continuation
reaches the blowup threshold bounds the true blowup radius from above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import brentq

from .errors import InvalidSpec

__all__ = ["KernelContinuation", "kernel_continuation", "NEGLIGIBLE_U"]

#: e^u < 1e-304 below this level, i.e. beneath double resolution of any O(1) term.
NEGLIGIBLE_U = -700.0


def _kernel_exponents(N: int, m: int):
    roots = {}
    for j in range(2 * m):
        for lam in (2 * j, 2 * j + 2 - N):
            roots[lam] = roots.get(lam, 0) + 1
    basis = []
    for lam in sorted(roots):
        for q in range(roots[lam]):
            basis.append((lam, q))
    return basis


def _lap(lam, poly, N):
    # Delta[rho^lam P(l)] = rho^(lam-2) [lam(lam+N-2)P + (2lam+N-2)P' + P''] / r_c^2
    d1 = P.polyder(poly) if len(poly) > 1 else np.zeros(1)
    d2 = P.polyder(poly, 2) if len(poly) > 2 else np.zeros(1)
    out = P.polyadd(P.polyadd(lam * (lam + N - 2) * poly, (2 * lam + N - 2) * d1), d2)
    return lam - 2, out


def _pad(poly, n=1):
    return poly if len(poly) >= n else np.concatenate([poly, np.zeros(n - len(poly))])


@dataclass(frozen=True)
class KernelContinuation:
    """u(r) = sum_i c_i rho^{lam_i} P_i(ln rho), rho = r / r_c, valid while e^u is negligible."""

    N: int
    m: int
    r_c: float
    terms: tuple  # (lam, poly-in-ell, coefficient)

    @property
    def log_r_c(self) -> float:
        return math.log(self.r_c)

    def u_scaled(self, ell: float, shift: float = 0.0, Lam: Optional[float] = None):
        """(u(ell) - shift) * exp(-Lam * ell); sign-faithful without overflow."""
        if Lam is None:
            Lam = self.growth_rate
        acc = 0.0
        for lam, poly, c in self.terms:
            acc += c * math.exp((lam - Lam) * ell) * P.polyval(ell, poly)
        return acc - shift * math.exp(-Lam * ell)

    def u(self, ell: float) -> float:
        return self.u_scaled(ell, 0.0, 0.0)

    @property
    def growth_rate(self) -> float:
        return max(lam for lam, _, _ in self.terms)

    def first_crossing(self, level: float, ell_max: float = 1e6) -> Optional[float]:
        """Smallest ell > 0 where u reaches ``level``, from below; None if never up to ell_max."""
        Lam = self.growth_rate

        def g(x):
            return self.u_scaled(x, level, Lam)

        if g(0.0) >= 0:
            return 0.0
        grid = [0.0]
        x = 1e-3
        while x < ell_max:
            grid.append(x)
            x *= 1.25
        grid.append(ell_max)
        prev = 0.0
        for x in grid[1:]:
            if g(x) >= 0:
                return brentq(g, prev, x, xtol=1e-14 * max(1.0, x), rtol=1e-15, maxiter=500)
            prev = x
        return None


def kernel_continuation(N: int, m: int, r_c: float, state) -> KernelContinuation:
    """Match the polyharmonic kernel to ``state`` (4m values) at radius ``r_c``."""
    state = np.asarray(state, dtype=float)
    if state.size != 4 * m:
        raise InvalidSpec("state size does not match 4m")
    basis = _kernel_exponents(N, m)
    if len(basis) != 4 * m:
        raise InvalidSpec("kernel basis has the wrong dimension")
    A = np.zeros((4 * m, 4 * m))
    for col, (lam, q) in enumerate(basis):
        poly = np.zeros(q + 1)
        poly[q] = 1.0
        lam_k = lam
        scale = 1.0
        for k in range(2 * m):
            poly = _pad(poly, 2)
            A[2 * k, col] = scale * poly[0]
            A[2 * k + 1, col] = scale * (lam_k * poly[0] + poly[1]) / r_c
            lam_k, poly = _lap(lam_k, poly, N)
            scale /= r_c * r_c
    # equilibrate rows; values of v_k scale like r_c^{-2(k-1)}
    row = np.max(np.abs(A), axis=1)
    row[row == 0] = 1.0
    coef = np.linalg.solve(A / row[:, None], state / row)
    terms = []
    for (lam, q), c in zip(basis, coef):
        poly = np.zeros(q + 1)
        poly[q] = 1.0
        terms.append((lam, poly, float(c)))
    return KernelContinuation(int(N), int(m), float(r_c), tuple(terms))
