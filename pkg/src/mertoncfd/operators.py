"""Difference operators: central stencils, compact derivatives, tridiagonal solves.

The compact first derivative solves the tridiagonal relation

    1/4 u'_{i-1} + u'_i + 1/4 u'_{i+1} = (3/4)(u_{i+1} - u_{i-1})/dx

over all nodes, closed at the ends with the fourth-order one-sided rows

    u'_0 + 3 u'_1 = (-17/6 u_0 + 3/2 u_1 + 3/2 u_2 - 1/6 u_3)/dx

(mirrored at node N).  The second derivative is then recovered without a
second tridiagonal solve from

    u''_i = 2 Dxx u_i - Dx u'_i,

where Dx/Dxx are the usual second-order central differences.  Both compact
derivatives are exact for polynomials of degree <= 4 and fourth-order
accurate on smooth functions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import lapack

from .market import GridSpec, MarketParams, local_volatility

log = logging.getLogger(__name__)


class SingularSystemError(ValueError):
    """Raised when tridiagonal elimination meets a vanishing pivot."""


@dataclass
class TridiagonalSystem:
    """A x = rhs with A tridiagonal (sub/diag/sup of lengths n-1, n, n-1)."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    rhs: np.ndarray
    dominance_checked: bool = field(init=False, default=False)

    def __post_init__(self) -> None:
        self.sub = np.asarray(self.sub, dtype=float)
        self.diag = np.asarray(self.diag, dtype=float)
        self.sup = np.asarray(self.sup, dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float)
        n = self.diag.size
        if n < 2:
            raise ValueError("tridiagonal system needs at least 2 rows")
        if self.sub.size != n - 1 or self.sup.size != n - 1 or self.rhs.size != n:
            raise ValueError(
                f"inconsistent diagonal lengths: sub={self.sub.size}, "
                f"diag={n}, sup={self.sup.size}, rhs={self.rhs.size}"
            )

    def diagonally_dominant_rows(self) -> np.ndarray:
        """Boolean mask of rows with |diag| >= |sub| + |sup|."""
        off = np.zeros_like(self.diag)
        off[:-1] += np.abs(self.sup)
        off[1:] += np.abs(self.sub)
        return np.abs(self.diag) >= off

    def check_dominance(self) -> bool:
        """Log (once) when the matrix is not diagonally dominant."""
        ok = bool(self.diagonally_dominant_rows().all())
        if not ok and not self.dominance_checked:
            log.debug(
                "tridiagonal matrix (n=%d) is not diagonally dominant; "
                "elimination proceeds without pivoting", self.diag.size,
            )
        self.dominance_checked = True
        return ok


def solve_tridiagonal(system: TridiagonalSystem) -> np.ndarray:
    """Thomas elimination without pivoting.

    A pivot smaller than 1e-14 times the local row scale raises
    :class:`SingularSystemError` instead of returning garbage.
    """
    system.check_dominance()
    sub, diag, sup, rhs = system.sub, system.diag, system.sup, system.rhs
    n = diag.size

    cp = np.empty(n - 1)
    dp = np.empty(n)
    scale = max(np.abs(diag).max(), np.abs(sub).max(), np.abs(sup).max())
    tol = 1e-14 * scale

    piv = diag[0]
    if abs(piv) <= tol:
        raise SingularSystemError(f"zero pivot in row 0 (|{piv:.3e}| <= {tol:.3e})")
    cp[0] = sup[0] / piv
    dp[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - sub[i - 1] * cp[i - 1]
        if abs(piv) <= tol:
            raise SingularSystemError(f"zero pivot in row {i} (|{piv:.3e}| <= {tol:.3e})")
        if i < n - 1:
            cp[i] = sup[i] / piv
        dp[i] = (rhs[i] - sub[i - 1] * dp[i - 1]) / piv

    for i in range(n - 2, -1, -1):
        dp[i] -= cp[i] * dp[i + 1]
    return dp


class FactoredTridiagonal:
    """LU-prefactored tridiagonal operator for repeated solves.

    Wraps LAPACK gttrf/gttrs so the time-marching loop pays O(n) per solve
    with no refactorization.  Used on the hot path; `solve_tridiagonal`
    above is the plain reference elimination.
    """

    def __init__(self, sub: np.ndarray, diag: np.ndarray, sup: np.ndarray):
        dl, d, du, du2, ipiv, info = lapack.dgttrf(sub, diag, sup)
        if info != 0:
            raise SingularSystemError(f"tridiagonal factorization failed (info={info})")
        self._fact = (dl, d, du, du2, ipiv)
        self.n = diag.size

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        dl, d, du, du2, ipiv = self._fact
        x, info = lapack.dgttrs(dl, d, du, du2, ipiv, rhs)
        if info != 0:
            raise SingularSystemError(f"tridiagonal solve failed (info={info})")
        return x


def delta_x(u: np.ndarray, dx: float) -> np.ndarray:
    """Second-order first derivative, central in the interior, one-sided ends."""
    u = np.asarray(u, dtype=float)
    d = np.empty_like(u)
    d[1:-1] = (u[2:] - u[:-2]) / (2.0 * dx)
    d[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dx)
    d[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * dx)
    return d


def delta_xx(u: np.ndarray, dx: float) -> np.ndarray:
    """Second-order second derivative, central in the interior, one-sided ends."""
    u = np.asarray(u, dtype=float)
    d = np.empty_like(u)
    d[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx**2
    d[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / dx**2
    d[-1] = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) / dx**2
    return d


class CompactFirstDerivative:
    """Prefactored compact first-derivative solve over all N + 1 nodes."""

    def __init__(self, n_nodes: int, dx: float):
        if n_nodes < 5:
            raise ValueError("compact derivative needs at least 5 nodes")
        self.n = n_nodes
        self.dx = dx
        sub = np.full(n_nodes - 1, 0.25)
        diag = np.ones(n_nodes)
        sup = np.full(n_nodes - 1, 0.25)
        sup[0] = 3.0
        sub[-1] = 3.0
        self._solver = FactoredTridiagonal(sub, diag, sup)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.size != self.n:
            raise ValueError(f"expected {self.n} nodal values, got {u.size}")
        rhs = np.empty(self.n)
        rhs[1:-1] = 0.75 * (u[2:] - u[:-2]) / self.dx
        rhs[0] = (-17.0 / 6.0 * u[0] + 1.5 * u[1] + 1.5 * u[2] - u[3] / 6.0) / self.dx
        rhs[-1] = (17.0 / 6.0 * u[-1] - 1.5 * u[-2] - 1.5 * u[-3] + u[-4] / 6.0) / self.dx
        return self._solver.solve(rhs)


@lru_cache(maxsize=16)
def _compact_solver(n_nodes: int, dx: float) -> CompactFirstDerivative:
    return CompactFirstDerivative(n_nodes, dx)


def compact_first_derivative(u: np.ndarray, dx: float) -> np.ndarray:
    """Fourth-order compact first derivative at all nodes (incl. boundaries)."""
    u = np.asarray(u, dtype=float)
    return _compact_solver(u.size, float(dx))(u)


def compact_second_derivative(u: np.ndarray, u_x: np.ndarray, dx: float) -> np.ndarray:
    """Fourth-order second derivative from u and its compact first derivative.

    Interior nodes use u'' = 2 Dxx u - Dx u'; the two boundary slots fall
    back to one-sided Dxx (they never enter the PIDE, which acts on the
    interior only).
    """
    u = np.asarray(u, dtype=float)
    u_x = np.asarray(u_x, dtype=float)
    d = np.empty_like(u)
    d[1:-1] = (
        2.0 * (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx**2
        - (u_x[2:] - u_x[:-2]) / (2.0 * dx)
    )
    d[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / dx**2
    d[-1] = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) / dx**2
    return d


def drift_coefficient(params: MarketParams, zeta: float, sigma) -> np.ndarray:
    """Advection coefficient b = r - sigma^2/2 - lam*zeta of the log-price PIDE."""
    sigma = np.asarray(sigma, dtype=float)
    return params.r - 0.5 * sigma**2 - params.lam * zeta


def apply_discrete_differential(
    u: np.ndarray,
    u_x: np.ndarray,
    grid: GridSpec,
    params: MarketParams,
    zeta: float,
    tau: float,
) -> np.ndarray:
    """Discrete differential operator at the interior nodes x_1..x_{N-1}:

        (sigma^2/2)(2 Dxx u - Dx u') + (r - sigma^2/2 - lam*zeta) u' - (r+lam) u.

    In local-volatility mode sigma is evaluated nodewise at (x_n, tau).
    """
    u = np.asarray(u, dtype=float)
    u_x = np.asarray(u_x, dtype=float)
    dx = grid.dx
    sigma = local_volatility(grid.x_interior, tau, params)
    b = drift_coefficient(params, zeta, sigma)

    dxx_u = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx**2
    dx_ux = (u_x[2:] - u_x[:-2]) / (2.0 * dx)
    u_xx = 2.0 * dxx_u - dx_ux
    return (
        0.5 * sigma**2 * u_xx
        + b * u_x[1:-1]
        - (params.r + params.lam) * u[1:-1]
    )
