"""Market parameters, grids, payoffs and boundary data for the Merton put pricer.

The pricing problem is posed in log-price coordinates x = ln(S/S0) and
time-to-maturity tau = T - t, truncated to the interval [-L, L].  Grid
functions are plain float64 arrays of length N + 1 holding nodal values at
x_0 = -L, ..., x_N = +L (boundary nodes included).  All parameter objects
are frozen dataclasses and safe to share between concurrent solver runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

VOL_MODES = ("constant", "local")
STYLES = ("european", "american")


@dataclass(frozen=True)
class MarketParams:
    """Market and jump parameters of the Merton jump-diffusion model.

    r        risk-free rate (1/year)
    sigma    diffusive volatility (1/sqrt(year))
    lam      jump intensity (1/year)
    mu_j     mean of the Gaussian log-jump size
    sigma_j  std of the Gaussian log-jump size
    K        strike
    S0       spot at valuation
    T        maturity (years)
    vol_mode "constant" or "local" (time/price dependent volatility surface)
    """

    r: float
    sigma: float
    lam: float
    mu_j: float
    sigma_j: float
    K: float
    S0: float
    T: float
    vol_mode: str = "constant"

    def __post_init__(self) -> None:
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.sigma_j <= 0.0:
            raise ValueError(f"sigma_j must be positive, got {self.sigma_j}")
        if self.lam < 0.0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if self.T <= 0.0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.K <= 0.0:
            raise ValueError(f"K must be positive, got {self.K}")
        if self.S0 <= 0.0:
            raise ValueError(f"S0 must be positive, got {self.S0}")
        if self.vol_mode not in VOL_MODES:
            raise ValueError(f"vol_mode must be one of {VOL_MODES}, got {self.vol_mode!r}")

    @property
    def kink(self) -> float:
        """Log-price location of the payoff kink, ln(K/S0)."""
        return math.log(self.K / self.S0)


@dataclass(frozen=True)
class GridSpec:
    """Uniform lattice on [-L, L] x [0, T]: N spatial intervals, M time steps.

    N must be even (composite Simpson quadrature of the jump integral pairs
    intervals) and is rejected otherwise.
    """

    L: float
    N: int
    M: int
    T: float

    def __post_init__(self) -> None:
        if self.L <= 0.0:
            raise ValueError(f"L must be positive, got {self.L}")
        if self.N % 2 != 0:
            raise ValueError(
                f"N must be even for composite Simpson quadrature, got N={self.N}; "
                "use N+1 or N-1 instead"
            )
        if self.N < 8:
            raise ValueError(f"N must be at least 8, got {self.N}")
        if self.M < 2:
            raise ValueError(f"M must be at least 2, got {self.M}")
        if self.T <= 0.0:
            raise ValueError(f"T must be positive, got {self.T}")

    @classmethod
    def from_mesh_ratio(cls, L: float, N: int, T: float, ratio: float = 0.4) -> "GridSpec":
        """Choose M so that the parabolic mesh ratio dtau/dx^2 is about `ratio`."""
        if ratio <= 0.0:
            raise ValueError(f"mesh ratio must be positive, got {ratio}")
        dx = 2.0 * L / N
        # guard against ceil(92160.0000000001) style float noise
        M = max(2, math.ceil(T / (ratio * dx * dx) - 1e-9))
        return cls(L=L, N=N, M=M, T=T)

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def dtau(self) -> float:
        return self.T / self.M

    @property
    def mesh_ratio(self) -> float:
        """Realized parabolic mesh ratio dtau/dx^2."""
        return self.dtau / self.dx**2

    @cached_property
    def x(self) -> np.ndarray:
        """Nodes x_n = -L + n*dx, n = 0..N (read-only)."""
        x = np.linspace(-self.L, self.L, self.N + 1)
        x.setflags(write=False)
        return x

    @property
    def x_interior(self) -> np.ndarray:
        return self.x[1:-1]

    def tau(self, m: int) -> float:
        return m * self.dtau


def as_grid_function(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Validate a nodal-value array against its grid (length N + 1)."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.N + 1,):
        raise ValueError(
            f"grid function has shape {values.shape}, expected ({grid.N + 1},)"
        )
    return values


def log_transform(S, t, params: MarketParams):
    """Map (spot, calendar time) to (x, tau) = (ln(S/S0), T - t)."""
    S = np.asarray(S, dtype=float)
    if np.any(S <= 0.0):
        raise ValueError("spot price must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > params.T):
        raise ValueError(f"calendar time must lie in [0, {params.T}]")
    return np.log(S / params.S0), params.T - t


def inverse_log_transform(x, tau, params: MarketParams):
    """Inverse of :func:`log_transform`: (x, tau) -> (S, t)."""
    return params.S0 * np.exp(np.asarray(x, dtype=float)), params.T - np.asarray(tau, dtype=float)


def payoff(x, params: MarketParams):
    """Put payoff in log coordinates, max(K - S0*e^x, 0).

    Shared by European and American contracts.
    """
    return np.maximum(params.K - params.S0 * np.exp(np.asarray(x, dtype=float)), 0.0)


def boundary_values(tau: float, style: str, params: MarketParams, L: float):
    """Dirichlet data (left, right) at x = -L and x = +L.

    The put value approaches the discounted intrinsic K*e^(-r*tau) - S0*e^x
    as x -> -inf for European exercise, and the undiscounted intrinsic
    K - S0*e^x for American exercise; it vanishes as x -> +inf.
    """
    if style not in STYLES:
        raise ValueError(f"style must be one of {STYLES}, got {style!r}")
    if style == "european":
        left = params.K * math.exp(-params.r * tau) - params.S0 * math.exp(-L)
    else:
        left = params.K - params.S0 * math.exp(-L)
    return left, 0.0


def local_volatility(x, tau, params: MarketParams):
    """Volatility at (x, tau); the constant mode just broadcasts sigma.

    The local surface is the benchmark parametrization

        sigma(x, tau) = 0.15 + 0.15*(0.5 + 2*(T - tau))
                        * (S/100 - 1.2)^2 / ((S/100)^2 + 1.44),  S = S0*e^x,

    which is bounded below by 0.15 and attains it exactly at S = 120.
    """
    x = np.asarray(x, dtype=float)
    if params.vol_mode == "constant":
        return np.broadcast_to(np.float64(params.sigma), x.shape).copy() if x.shape else np.float64(params.sigma)
    s = params.S0 * np.exp(x) / 100.0
    return 0.15 + 0.15 * (0.5 + 2.0 * (params.T - tau)) * (s - 1.2) ** 2 / (s * s + 1.44)


def cubic_interpolate(xq, x0: float, dx: float, values: np.ndarray):
    """Cubic (4-point Lagrange) interpolation on a uniform grid.

    Matches the fourth-order accuracy of the spatial scheme, so off-node
    price/Greek queries do not degrade the design order.  Windows are
    clamped at the ends of the grid.
    """
    values = np.asarray(values, dtype=float)
    xq_arr = np.atleast_1d(np.asarray(xq, dtype=float))
    n = values.size
    if n < 4:
        raise ValueError("cubic interpolation needs at least 4 nodes")

    pos = (xq_arr - x0) / dx
    i0 = np.clip(np.floor(pos).astype(int) - 1, 0, n - 4)
    s = pos - i0  # local coordinate in [0, 3] relative to the window start

    out = np.zeros_like(xq_arr)
    for k in range(4):
        lk = np.ones_like(s)
        for j in range(4):
            if j != k:
                lk *= (s - j) / (k - j)
        out += values[i0 + k] * lk
    return out if np.ndim(xq) else float(out[0])
