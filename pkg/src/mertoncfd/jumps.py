"""Jump-integral machinery: Merton kernel, Simpson weights, FFT Toeplitz product.

The integral term of the PIDE,

    I u(x) = lam * integral u(y) g(y - x) dy,   g = N(mu_j, sigma_j^2) density,

is split into the truncated domain [-L, L], discretized with composite
Simpson quadrature, and the exterior tail, evaluated in closed form from
the asymptotic put value (`tail_correction`).  On the grid the Simpson sum
is a Toeplitz matrix-vector product

    (B u~)_n = dx/3 * sum_i g((i - n) dx) * w_i u_i,   w = [4, 2, 4, ..., 2, 4],

computed in O(N log N) by embedding the Toeplitz matrix in a circulant one
and multiplying with real FFTs.  Boundary nodes enter through the Simpson
end weights (`P` term).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .market import GridSpec, MarketParams, STYLES


def std_normal_cdf(y):
    """Standard normal CDF Phi(y), evaluated via the complementary error function."""
    return ndtr(np.asarray(y, dtype=float)) if np.ndim(y) else float(ndtr(y))


def compute_zeta(params: MarketParams) -> float:
    """Jump compensator zeta = E[e^J - 1] = exp(mu_j + sigma_j^2/2) - 1."""
    return math.exp(params.mu_j + 0.5 * params.sigma_j**2) - 1.0


def jump_density(y, params: MarketParams):
    """Gaussian jump-size density g(y) with mean mu_j and std sigma_j."""
    y = np.asarray(y, dtype=float)
    z = (y - params.mu_j) / params.sigma_j
    return np.exp(-0.5 * z * z) / (params.sigma_j * math.sqrt(2.0 * math.pi))


def tail_correction(x, tau: float, L: float, style: str, params: MarketParams):
    """Closed-form value of integral u(y) g(y - x) dy over R \\ (-L, L).

    For puts only the left tail contributes; there u is replaced by its
    asymptote K*e^(-r*tau) - S0*e^y (European) or K - S0*e^y (American),
    giving Gaussian-CDF terms:

        K * disc * Phi(-(x + mu_j + L)/sigma_j)
          - S0 * exp(x + sigma_j^2/2 + mu_j) * Phi(-(x + sigma_j^2 + mu_j + L)/sigma_j)

    with disc = e^(-r*tau) for European exercise and 1 for American.
    The result excludes the lam prefactor (applied by the integral operator).
    """
    if style not in STYLES:
        raise ValueError(f"style must be one of {STYLES}, got {style!r}")
    if L <= 0.0:
        raise ValueError(f"L must be positive, got {L}")
    x = np.asarray(x, dtype=float)
    sj = params.sigma_j
    disc = math.exp(-params.r * tau) if style == "european" else 1.0
    term_k = params.K * disc * ndtr(-(x + params.mu_j + L) / sj)
    term_s = (
        params.S0
        * np.exp(x + 0.5 * sj**2 + params.mu_j)
        * ndtr(-(x + sj**2 + params.mu_j + L) / sj)
    )
    out = term_k - term_s
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TailCorrection:
    """Per-node tail values with the European discount factored out.

    values(tau) = disc(tau) * base_k - base_s at the interior nodes, so a
    time march only pays one scalar exponential per level.
    """

    style: str
    base_k: np.ndarray
    base_s: np.ndarray
    r: float

    @classmethod
    def build(cls, grid: GridSpec, params: MarketParams, style: str) -> "TailCorrection":
        if style not in STYLES:
            raise ValueError(f"style must be one of {STYLES}, got {style!r}")
        x = grid.x_interior
        sj = params.sigma_j
        base_k = params.K * ndtr(-(x + params.mu_j + grid.L) / sj)
        base_s = (
            params.S0
            * np.exp(x + 0.5 * sj**2 + params.mu_j)
            * ndtr(-(x + sj**2 + params.mu_j + grid.L) / sj)
        )
        return cls(style=style, base_k=base_k, base_s=base_s, r=params.r)

    def values(self, tau: float) -> np.ndarray:
        disc = math.exp(-self.r * tau) if self.style == "european" else 1.0
        return disc * self.base_k - self.base_s


class MertonKernel:
    """Precomputed jump-density samples, Simpson weights and circulant FFT.

    Holds everything the integral operator needs for one (grid, params)
    pair: the Toeplitz first row/column dx/3 * g(j*dx), its circulant
    embedding's forward transform, the Simpson end-weight vectors for the
    boundary (P) term, the density sampled on the grid for the quadrature
    symbol, and the compensator zeta.  Immutable after construction.
    """

    def __init__(self, grid: GridSpec, params: MarketParams):
        self.grid = grid
        self.params = params
        self.zeta = compute_zeta(params)

        N = grid.N
        dx = grid.dx

        # Toeplitz entries t_j = dx/3 * g(j*dx) for j = -(N-2)..(N-2);
        # row n of the interior matrix is t_{i-n}.
        offsets = np.arange(-(N - 2), N - 1)
        t = dx / 3.0 * jump_density(offsets * dx, params)
        self.toeplitz_row = t[N - 2:]          # t_0, t_1, ..., t_{N-2}
        self.toeplitz_col = t[N - 2::-1]       # t_0, t_-1, ..., t_-(N-2)

        # Circulant embedding: smallest power of two >= 2*(N-1), zero padded.
        P = N - 1
        self.fft_size = 1 << (2 * P - 1).bit_length()
        emb = np.zeros(self.fft_size)
        emb[:P] = self.toeplitz_col            # b_m = t_{-m}
        emb[self.fft_size - P + 1:] = t[N - 1:][::-1]  # b_{Q-j} = t_j, j = 1..N-2
        self._kernel_fft = np.fft.rfft(emb)

        # Simpson interior weight pattern [4, 2, 4, ..., 2, 4] (odd/even nodes).
        pattern = np.empty(N - 1)
        pattern[0::2] = 4.0
        pattern[1::2] = 2.0
        self.simpson_pattern = pattern

        # Boundary (P-term) vectors: dx/3 * g(x_0 - x_n), dx/3 * g(x_N - x_n).
        n_idx = np.arange(1, N)
        self.p_left = dx / 3.0 * jump_density(-n_idx * dx, params)
        self.p_right = dx / 3.0 * jump_density((N - n_idx) * dx, params)

        # Density on the grid offsets [-L, L] with full Simpson weights,
        # used by the quadrature symbol G(theta) and the mass bound.
        full_pattern = np.ones(N + 1)
        full_pattern[1:-1:2] = 4.0
        full_pattern[2:-1:2] = 2.0
        self.density_grid = jump_density(grid.x, params)
        self.simpson_weights = dx / 3.0 * full_pattern

    def simpson_mass(self) -> float:
        """Simpson approximation of integral of g over [-L, L] (<= 1 + O(dx^4))."""
        return float(self.simpson_weights @ self.density_grid)

    def toeplitz_matvec(self, v: np.ndarray) -> np.ndarray:
        """Toeplitz product (B v)_n = sum_i t_{i-n} v_i via the cached FFT."""
        v = np.asarray(v, dtype=float)
        P = self.grid.N - 1
        if v.size != P:
            raise ValueError(f"expected {P} interior values, got {v.size}")
        conv = np.fft.irfft(self._kernel_fft * np.fft.rfft(v, self.fft_size), self.fft_size)
        return conv[:P]

    def toeplitz_dense(self) -> np.ndarray:
        """Dense interior Toeplitz matrix (test oracle; O(N^2) memory)."""
        from scipy.linalg import toeplitz

        return toeplitz(self.toeplitz_col, self.toeplitz_row)


def apply_integral_operator(
    u: np.ndarray,
    kernel: MertonKernel,
    tail_values: np.ndarray,
) -> np.ndarray:
    """Discrete jump integral lam * (B u~ + P + tail) at the interior nodes.

    `u` is a full grid function (boundary nodes feed the Simpson end
    weights); `tail_values` is the precomputed exterior contribution at the
    same time level, e.g. ``TailCorrection.values(tau)``.
    """
    grid, params = kernel.grid, kernel.params
    u = np.asarray(u, dtype=float)
    if u.size != grid.N + 1:
        raise ValueError(f"expected {grid.N + 1} nodal values, got {u.size}")
    weighted = kernel.simpson_pattern * u[1:-1]
    conv = kernel.toeplitz_matvec(weighted)
    p_term = u[0] * kernel.p_left + u[-1] * kernel.p_right
    return params.lam * (conv + p_term + tail_values)


def quadrature_symbol(theta, kernel: MertonKernel):
    """Simpson quadrature symbol G(theta) = sum_k w_k g(x_k) e^(i*theta*k).

    Satisfies |G| <= 1 + c*dx^4 with c independent of the grid (the Simpson
    error constant of the density mass on [-L, L]).
    """
    scalar = np.ndim(theta) == 0
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    k = np.arange(kernel.grid.N + 1)
    wg = kernel.simpson_weights * kernel.density_grid
    G = np.exp(1j * np.outer(theta, k)) @ wg
    return complex(G[0]) if scalar else G
