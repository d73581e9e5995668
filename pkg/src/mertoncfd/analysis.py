"""Greeks, Fourier resolution diagnostics, stability checks, convergence rates.

Greeks come from the log-coordinate chain rule applied to the compact
derivatives of a solution slice: Delta = u_x / S and
Gamma = (u_xx - u_x) / S^2 with S = S0 e^x.

The dispersion diagnostics compare modified wavenumbers of the difference
operators against the exact symbols omega and omega^2; the amplification
report evaluates the three-level scheme's characteristic roots

    gamma0 p^2 - 2 gamma1 p - gamma2 = 0

over a theta sweep and checks |p| <= 1 + 2 lam dtau and root separation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .jumps import MertonKernel, quadrature_symbol
from .market import GridSpec, MarketParams, cubic_interpolate
from .operators import compact_first_derivative, compact_second_derivative, drift_coefficient


@dataclass
class GreeksSlice:
    """Nodal Delta/Gamma at one time level, with off-node spot queries."""

    grid: GridSpec
    params: MarketParams
    delta: np.ndarray
    gamma: np.ndarray

    def delta_at(self, S) -> float:
        x = np.log(np.asarray(S, dtype=float) / self.params.S0)
        return cubic_interpolate(x, -self.grid.L, self.grid.dx, self.delta)

    def gamma_at(self, S) -> float:
        x = np.log(np.asarray(S, dtype=float) / self.params.S0)
        return cubic_interpolate(x, -self.grid.L, self.grid.dx, self.gamma)


def compute_greeks(values: np.ndarray, grid: GridSpec, params: MarketParams) -> GreeksSlice:
    """Delta and Gamma of a nodal slice via compact derivatives."""
    values = np.asarray(values, dtype=float)
    u_x = compact_first_derivative(values, grid.dx)
    u_xx = compact_second_derivative(values, u_x, grid.dx)
    S = params.S0 * np.exp(grid.x)
    delta = u_x / S
    gamma = (u_xx - u_x) / S**2
    return GreeksSlice(grid=grid, params=params, delta=delta, gamma=gamma)


# ---------------------------------------------------------------------------
# Modified wavenumbers (dispersion diagnostics)
# ---------------------------------------------------------------------------

WAVENUMBER_SCHEMES = ("central2", "central4", "compact4", "pade4")


def modified_wavenumber(scheme: str, omega):
    """Modified wavenumbers (first, second) of a difference scheme at omega.

    central2   classical second-order stencils
    central4   fourth-order five-point stencils
    compact4   compact first derivative and the two-term second derivative
               built from it (the production scheme)
    pade4      compact first derivative with the Pade second-derivative row

    Exact symbols are omega and omega^2; all schemes are central, so the
    modified wavenumbers are real (no dissipation error).
    """
    w = np.asarray(omega, dtype=float)
    if scheme == "central2":
        first = np.sin(w)
        second = 2.0 - 2.0 * np.cos(w)
    elif scheme == "central4":
        first = -np.sin(2.0 * w) / 6.0 + 4.0 * np.sin(w) / 3.0
        second = np.cos(2.0 * w) / 6.0 - 8.0 * np.cos(w) / 3.0 + 2.5
    elif scheme == "compact4":
        first = 3.0 * np.sin(w) / (2.0 + np.cos(w))
        second = (5.0 - 4.0 * np.cos(w) - np.cos(w) ** 2) / (2.0 + np.cos(w))
    elif scheme == "pade4":
        first = 3.0 * np.sin(w) / (2.0 + np.cos(w))
        second = 12.0 * (1.0 - np.cos(w)) / (2.0 + np.cos(w))
    else:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {WAVENUMBER_SCHEMES}")
    if np.ndim(omega) == 0:
        return float(first), float(second)
    return first, second


# ---------------------------------------------------------------------------
# Amplification roots (von Neumann check)
# ---------------------------------------------------------------------------

@dataclass
class AmplificationReport:
    """Root magnitudes of the amplification polynomial over a theta sweep."""

    thetas: np.ndarray
    p1_mag: np.ndarray
    p2_mag: np.ndarray
    separation: np.ndarray      # |p1 - p2| per theta
    bound: float                # 1 + 2*lam*dtau
    violations: np.ndarray      # thetas where max(|p1|,|p2|) exceeds the bound

    @property
    def max_magnitude(self) -> float:
        return float(np.maximum(self.p1_mag, self.p2_mag).max())

    @property
    def min_separation(self) -> float:
        return float(self.separation.min())

    @property
    def stable(self) -> bool:
        return self.violations.size == 0


def amplification_gammas(
    theta,
    grid: GridSpec,
    params: MarketParams,
    G,
    sigma: Optional[float] = None,
):
    """Coefficients (gamma0, gamma1, gamma2) of the amplification polynomial.

    `G` is the quadrature symbol value(s) at theta.  `sigma` overrides the
    frozen volatility (used to bracket the local-volatility surface);
    the default requires constant-volatility parameters.
    """
    theta = np.asarray(theta, dtype=float)
    if sigma is None:
        if params.vol_mode != "constant":
            raise ValueError(
                "amplification analysis assumes constant coefficients; pass an "
                "explicit sigma to run a frozen-coefficient sweep"
            )
        sigma = params.sigma
    a = 0.5 * sigma**2
    zeta = math.exp(params.mu_j + 0.5 * params.sigma_j**2) - 1.0
    b = drift_coefficient(params, zeta, sigma)
    dx, dtau = grid.dx, grid.dtau

    c = np.cos(theta)
    inner = (
        a * (c**2 + 4.0 * c - 5.0) / (dx**2 * (2.0 + c))
        - (params.r + params.lam)
        + 1j * b * 3.0 * np.sin(theta) / (dx * (2.0 + c))
    )
    gamma0 = 1.0 - dtau * inner
    gamma1 = params.lam * dtau * np.asarray(G)
    gamma2 = 1.0 + dtau * inner
    return gamma0, gamma1, gamma2


def amplification_roots(
    theta,
    grid: GridSpec,
    params: MarketParams,
    kernel: Optional[MertonKernel] = None,
    sigma: Optional[float] = None,
):
    """Roots p = (gamma1 +/- sqrt(gamma1^2 + gamma0*gamma2)) / gamma0."""
    kernel = kernel or MertonKernel(grid, params)
    G = quadrature_symbol(theta, kernel)
    g0, g1, g2 = amplification_gammas(theta, grid, params, G, sigma=sigma)
    disc = np.sqrt(g1 * g1 + g0 * g2 + 0j)
    return (g1 + disc) / g0, (g1 - disc) / g0


def amplification_report(
    grid: GridSpec,
    params: MarketParams,
    kernel: Optional[MertonKernel] = None,
    n_theta: int = 512,
    sigma: Optional[float] = None,
) -> AmplificationReport:
    """Sweep theta over [0, 2*pi) and collect the stability diagnostics."""
    thetas = np.linspace(0.0, 2.0 * math.pi, n_theta, endpoint=False)
    p1, p2 = amplification_roots(thetas, grid, params, kernel=kernel, sigma=sigma)
    p1_mag, p2_mag = np.abs(p1), np.abs(p2)
    bound = 1.0 + 2.0 * params.lam * grid.dtau
    bad = thetas[np.maximum(p1_mag, p2_mag) > bound * (1.0 + 1e-12)]
    return AmplificationReport(
        thetas=thetas,
        p1_mag=p1_mag,
        p2_mag=p2_mag,
        separation=np.abs(p1 - p2),
        bound=bound,
        violations=bad,
    )


# ---------------------------------------------------------------------------
# Error measurement and convergence rates
# ---------------------------------------------------------------------------

def relative_l2_error(values: np.ndarray, reference: np.ndarray) -> float:
    """Relative l2 error over shared nodes of a coarse and a fine solution.

    The coarse grid must be a subsampling of the fine one (grid-doubling
    discipline); otherwise the node sets do not line up and the comparison
    is refused.
    """
    values = np.asarray(values, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if (reference.size - 1) % (values.size - 1) != 0:
        raise ValueError(
            f"misaligned grids: {values.size - 1} intervals do not divide "
            f"{reference.size - 1}"
        )
    stride = (reference.size - 1) // (values.size - 1)
    ref = reference[::stride]
    return float(np.linalg.norm(ref - values) / np.linalg.norm(ref))


def convergence_order(n_values: Sequence[float], errors: Sequence[float]):
    """Least-squares slope of log(error) vs log(N), sign-normalized.

    Returns (order, r_squared).  Needs at least three positive errors.
    """
    n_values = np.asarray(n_values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if n_values.size < 3:
        raise ValueError("need at least 3 refinement points")
    if np.any(errors <= 0.0):
        raise ValueError("errors must be positive for a loglog fit")
    logn, loge = np.log(n_values), np.log(errors)
    slope, intercept = np.polyfit(logn, loge, 1)
    fitted = slope * logn + intercept
    ss_res = float(np.sum((loge - fitted) ** 2))
    ss_tot = float(np.sum((loge - loge.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), r2


@dataclass
class StabilitySweepResult:
    """Relative errors over a (dx, mesh-ratio) sweep with outlier flags."""

    n_values: np.ndarray
    ratios: np.ndarray
    errors: np.ndarray            # shape (len(n_values), len(ratios))
    realized_ratios: np.ndarray   # same shape; dtau/dx^2 after rounding M
    flags: np.ndarray             # cells whose error exceeds 2x the row minimum
    row_spread: np.ndarray        # max/min error ratio per dx row

    def marginal(self, threshold: float = 1.05) -> bool:
        """True when the mesh ratio influence stays below the threshold."""
        return bool(np.all(self.row_spread < threshold))


def stability_sweep(
    params: MarketParams,
    n_values: Sequence[int],
    ratios: Sequence[float],
    reference_values: np.ndarray,
    L: float,
    config=None,
    solver=None,
) -> StabilitySweepResult:
    """Error table of European runs over mesh ratios at fixed spatial grids.

    `reference_values` is a fine-grid slice at tau = T whose node set
    contains every sweep grid.  `solver` defaults to the European time
    march (injection point for tests).
    """
    from .stepper import SolverConfig, solve_european

    solver = solver or solve_european
    base = config or SolverConfig()
    n_values = np.asarray(list(n_values), dtype=int)
    ratios = np.asarray(list(ratios), dtype=float)
    errors = np.zeros((n_values.size, ratios.size))
    realized = np.zeros_like(errors)

    for i, n in enumerate(n_values):
        for j, ratio in enumerate(ratios):
            grid = GridSpec.from_mesh_ratio(L=L, N=int(n), T=params.T, ratio=float(ratio))
            surface = solver(params, grid, base)
            errors[i, j] = relative_l2_error(surface.values, reference_values)
            realized[i, j] = grid.mesh_ratio

    row_min = errors.min(axis=1, keepdims=True)
    flags = errors > 2.0 * row_min
    row_spread = (errors.max(axis=1) / errors.min(axis=1))
    return StabilitySweepResult(
        n_values=n_values,
        ratios=ratios,
        errors=errors,
        realized_ratios=realized,
        flags=flags,
        row_spread=row_spread,
    )
