"""American put pricing: operator splitting of the linear complementarity problem.

The early-exercise constraint U >= f is handled with the splitting that
introduces a multiplier psi = U_tau - L U and, per level, (i) solves the
unconstrained step with the old multiplier as a source, (ii) projects onto
the constraint, (iii) updates the multiplier from the projection residual:

    solve   (U~ - U^{m-1})/(2 dtau) = D_d avg + I_d U^m + psi^m
    U^{m+1}   = max(f, U~ - 2 dtau psi^m)
    psi^{m+1} = psi^m + (U^{m+1} - U~)/(2 dtau)

(with dtau instead of 2 dtau in the one-step start level).  The update
leaves (psi, U) complementary after every step: psi >= 0, U >= f and
psi * (U - f) = 0 hold nodewise by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .market import GridSpec, MarketParams, payoff
from .stepper import CompactStepper, SolutionSurface, SolverConfig, initial_condition

log = logging.getLogger(__name__)


@dataclass
class SplitState:
    """One time level of the splitting: values U and multiplier psi (interior)."""

    u: np.ndarray
    psi: np.ndarray

    def complementarity(self, intrinsic_interior: np.ndarray):
        """(min psi, min U - f, max |psi * (U - f)|) over the interior nodes."""
        gap = self.u[1:-1] - intrinsic_interior
        return (
            float(self.psi.min()),
            float(gap.min()),
            float(np.max(np.abs(self.psi * gap))),
        )


def _project(u_tilde: np.ndarray, psi: np.ndarray, intrinsic: np.ndarray, weight: float):
    """Constraint projection and multiplier update with step weight dtau or 2*dtau."""
    u_new = u_tilde.copy()
    u_new[1:-1] = np.maximum(intrinsic[1:-1], u_tilde[1:-1] - weight * psi)
    psi_new = psi + (u_new[1:-1] - u_tilde[1:-1]) / weight
    return u_new, psi_new


def american_step(
    params: MarketParams,
    grid: GridSpec,
    config: SolverConfig,
    u_prev_full: np.ndarray,
    u_curr_full: np.ndarray,
    psi: np.ndarray,
    m: int,
):
    """One splitting step from levels m-1, m to m+1 (exposed for tests).

    Returns (U^{m+1}, U~^{m+1}, psi^{m+1}, inner iterations).
    """
    stepper = CompactStepper(params, grid, config, "american")
    intrinsic = payoff(grid.x, params)
    ux_prev = stepper.deriv(u_prev_full)
    ux_curr = stepper.deriv(u_curr_full)
    rhs = stepper.leapfrog_rhs(u_prev_full, ux_prev, u_curr_full, m, psi)
    u_tilde, _, iters = stepper.solve_level(rhs, grid.tau(m + 1), u_curr_full, ux_curr)
    u_new, psi_new = _project(u_tilde, psi, intrinsic, 2.0 * grid.dtau)
    return u_new, u_tilde, psi_new, iters


def solve_american(
    params: MarketParams,
    grid: GridSpec,
    config: Optional[SolverConfig] = None,
) -> SolutionSurface:
    """Price an American put on the full lattice.

    The start level uses the implicit-explicit one-step form with weight
    dtau; all later levels use the three-level scheme with weight 2*dtau.
    psi starts at zero (the payoff satisfies the constraint with an
    inactive multiplier at tau = 0).
    """
    config = config or SolverConfig()
    stepper = CompactStepper(params, grid, config, "american")
    intrinsic = payoff(grid.x, params)

    u0 = initial_condition(params, grid, config, "american")
    psi = np.zeros(grid.N - 1)

    M = grid.M
    iters = np.zeros(M, dtype=int)
    snapshots: dict = {}
    if config.store_every:
        snapshots[0] = u0.copy()

    ux0 = stepper.deriv(u0)
    u_tilde, _, iters[0] = stepper.solve_level(
        stepper.first_step_rhs(u0, psi), grid.tau(1), u0, ux0
    )
    u1, psi = _project(u_tilde, psi, intrinsic, grid.dtau)
    ux1 = stepper.deriv(u1)
    if config.store_every and 1 % config.store_every == 0:
        snapshots[1] = u1.copy()

    u_prev, ux_prev, u_curr, ux_curr = u0, ux0, u1, ux1
    for m in range(1, M):
        rhs = stepper.leapfrog_rhs(u_prev, ux_prev, u_curr, m, psi)
        u_tilde, _, n_m = stepper.solve_level(rhs, grid.tau(m + 1), u_curr, ux_curr)
        u_next, psi = _project(u_tilde, psi, intrinsic, 2.0 * grid.dtau)
        ux_next = stepper.deriv(u_next)
        iters[m] = n_m
        if config.store_every and (m + 1) % config.store_every == 0:
            snapshots[m + 1] = u_next.copy()
        u_prev, ux_prev, u_curr, ux_curr = u_curr, ux_curr, u_next, ux_next

    log.info(
        "american march finished: M=%d levels, max inner iterations %d",
        M, int(iters.max()),
    )
    return SolutionSurface(
        grid=grid,
        params=params,
        style="american",
        config=config,
        values=u_curr,
        snapshots=snapshots,
        inner_iterations=iters,
        exercise=psi.copy(),
    )
