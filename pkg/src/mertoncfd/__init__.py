"""Fourth-order compact finite-difference pricer for Merton jump-diffusion puts.

Solves the pricing PIDE for European puts and the corresponding linear
complementarity problem for American puts on a truncated log-price domain,
with an FFT-accelerated jump convolution, Crank-Nicolson Leap-Frog time
stepping and fourth-order payoff smoothing.
"""

from .market import (
    GridSpec,
    MarketParams,
    boundary_values,
    cubic_interpolate,
    inverse_log_transform,
    local_volatility,
    log_transform,
    payoff,
)
from .operators import (
    FactoredTridiagonal,
    SingularSystemError,
    TridiagonalSystem,
    compact_first_derivative,
    compact_second_derivative,
    delta_x,
    delta_xx,
    solve_tridiagonal,
)
from .jumps import (
    MertonKernel,
    TailCorrection,
    apply_integral_operator,
    compute_zeta,
    jump_density,
    quadrature_symbol,
    std_normal_cdf,
    tail_correction,
)
from .stepper import (
    InnerIterationError,
    SolutionSurface,
    SolverConfig,
    imex_first_step,
    mollifier,
    smooth_initial_condition,
    solve_european,
)
from .american import SplitState, american_step, solve_american
from .analysis import (
    AmplificationReport,
    GreeksSlice,
    amplification_report,
    amplification_roots,
    compute_greeks,
    convergence_order,
    modified_wavenumber,
    relative_l2_error,
    stability_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "AmplificationReport",
    "FactoredTridiagonal",
    "GreeksSlice",
    "GridSpec",
    "InnerIterationError",
    "MarketParams",
    "MertonKernel",
    "SingularSystemError",
    "SolutionSurface",
    "SolverConfig",
    "SplitState",
    "TailCorrection",
    "TridiagonalSystem",
    "american_step",
    "amplification_report",
    "amplification_roots",
    "apply_integral_operator",
    "boundary_values",
    "compact_first_derivative",
    "compact_second_derivative",
    "compute_greeks",
    "compute_zeta",
    "convergence_order",
    "cubic_interpolate",
    "delta_x",
    "delta_xx",
    "imex_first_step",
    "inverse_log_transform",
    "jump_density",
    "local_volatility",
    "log_transform",
    "modified_wavenumber",
    "mollifier",
    "payoff",
    "quadrature_symbol",
    "relative_l2_error",
    "smooth_initial_condition",
    "solve_american",
    "solve_european",
    "solve_tridiagonal",
    "stability_sweep",
    "std_normal_cdf",
    "tail_correction",
]
