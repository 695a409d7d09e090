"""Backward induction over the three layers: stage-2 Nash, continuation values, stage-1 Nash, leader."""

from __future__ import annotations

from dataclasses import dataclass

from .leader import EquilibriumValues, LeaderSolution, build_extended_system, equilibrium_values, solve_jump_riccati
from .model import GameSpec, check_aligned
from .stage1 import COMPENSATED, PINNED, Stage1Solution, solve_psi_compensated, solve_psi_pinned
from .stage2 import KappaTables, Stage2Solution, compute_kappa, solve_stage2

DEFAULT_GRID = 2000


@dataclass(frozen=True)
class Equilibrium:
    spec: GameSpec
    stage2: Stage2Solution
    kappa: KappaTables
    stage1: Stage1Solution
    leader: LeaderSolution | None

    @property
    def grid(self):
        return self.stage2.grid

    def values(self) -> EquilibriumValues:
        if self.leader is None:
            raise ValueError("objective values need the leader solution")
        return equilibrium_values(self.spec, self.leader, self.kappa)


def solve_equilibrium(spec: GameSpec, n_grid: int = DEFAULT_GRID, stage1_mode: str = COMPENSATED,
                      tau: float | None = None) -> Equilibrium:
    """Solve every layer on a grid of ``n_grid`` steps (must be aligned with breakpoints).

    In pinned mode the leader layer is skipped, since it needs the
    compensated stage-1 solution.
    """
    check_aligned(spec, n_grid)
    grid = spec.grid(n_grid)
    s2 = solve_stage2(spec, grid)
    kappa = compute_kappa(spec, s2)
    if stage1_mode == COMPENSATED:
        s1 = solve_psi_compensated(spec, kappa, grid)
        leader = solve_jump_riccati(build_extended_system(spec, s1))
    elif stage1_mode == PINNED:
        s1 = solve_psi_pinned(spec, kappa, spec.T if tau is None else tau, grid)
        leader = None
    else:
        raise ValueError(f"unknown stage-1 mode {stage1_mode!r}")
    return Equilibrium(spec, s2, kappa, s1, leader)
