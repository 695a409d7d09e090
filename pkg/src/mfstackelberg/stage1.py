"""Pre-exit followers' Nash problem: psi coefficient systems and the alpha backward system."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .model import GameSpec
from .numerics import FunctionTable, TimeGrid, integrate_ode
from .stage2 import KappaTables, phi_system_rhs

COMPENSATED = "compensated"
PINNED = "pinned"
_NAMES = ("psi11", "psi21", "psi12", "psi22")


@dataclass(frozen=True)
class Stage1Solution:
    psi: FunctionTable  # columns psi11, psi21, psi12, psi22
    mode: str = COMPENSATED
    tau: float | None = None  # pinning time in pinned mode

    @property
    def grid(self) -> TimeGrid:
        return self.psi.grid

    @property
    def psi_sum1(self) -> FunctionTable:
        v = self.psi.values
        return FunctionTable(self.grid, v[:, 0] + v[:, 1], names=("psi1",))

    @property
    def psi_sum2(self) -> FunctionTable:
        v = self.psi.values
        return FunctionTable(self.grid, v[:, 2] + v[:, 3], names=("psi2",))

    def column(self, name: str) -> FunctionTable:
        return self.psi.column(_NAMES.index(name))

    @property
    def mode_label(self) -> str:
        return self.mode if self.mode == COMPENSATED else f"{PINNED}(diagnostic)"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t," + ",".join(_NAMES) + ",mode\n")
        for tk, row in zip(self.grid.nodes, self.psi.values):
            buf.write(",".join(repr(float(x)) for x in (tk, *row)) + f",{self.mode_label}\n")
        return buf.getvalue()


def solve_psi_compensated(spec: GameSpec, kappa: KappaTables, grid: TimeGrid) -> Stage1Solution:
    """Pre-default system on [0, T] with the exit folded in through its intensity.

    The follower collects kappa_{i,1}(t) X(t)^2 / 2 at rate gamma(t) while
    surviving, which adds gamma*(kappa_i1 - psi_i1) and -gamma*psi_i2.
    """
    st = spec.stage1
    rate = spec.intensity.rate

    def rhs(t, y):
        return phi_system_rhs(st, t, y, rate(t), kappa.kappa(t))

    terminal = kappa.kappa(spec.T)
    psi = integrate_ode(rhs, [terminal[0], terminal[1], 0.0, 0.0], grid, "backward",
                        "stage-1 psi system", _NAMES)
    return Stage1Solution(psi, COMPENSATED)


def solve_psi_pinned(spec: GameSpec, kappa: KappaTables, tau: float, grid: TimeGrid) -> Stage1Solution:
    """The system read literally: no intensity terms, terminal kappa at a fixed ``tau``.

    The returned table lives on [0, tau] with roughly the step of ``grid``.
    Diagnostic only, since the resulting controls anticipate the exit time.
    """
    if not 0.0 < tau <= spec.T:
        raise ValueError(f"pinning time must lie in (0, T], got {tau}")
    n = max(1, int(round(grid.n * tau / (grid.t1 - grid.t0))))
    sub = grid if abs(tau - grid.t1) < 1e-14 else TimeGrid(grid.t0, tau, n)
    st = spec.stage1
    terminal = kappa.kappa(tau)
    psi = integrate_ode(lambda t, y: phi_system_rhs(st, t, y), [terminal[0], terminal[1], 0.0, 0.0], sub,
                        "backward", "stage-1 pinned psi system", _NAMES)
    return Stage1Solution(psi, PINNED, float(tau))


@dataclass(frozen=True)
class AlphaSystem:
    """Coefficients of the linear backward system for alpha = (alpha_1, alpha_2).

    mu1, nu1 are stored row-major as four columns; iota is identically zero.
    """

    mu1: FunctionTable
    nu1: FunctionTable
    delta1: FunctionTable
    delta1_bar: FunctionTable
    c: float
    c_bar: float

    def mu(self, t: float) -> np.ndarray:
        return self.mu1(t).reshape(2, 2)

    def nu(self, t: float) -> np.ndarray:
        return self.nu1(t).reshape(2, 2)

    @staticmethod
    def iota(tau: float) -> np.ndarray:
        return np.zeros(2)


def _mat_columns(a: float, l: float, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    return np.column_stack([a + l * x1, l * x1, l * x2, a + l * x2])


def build_alpha_system(spec: GameSpec, stage1: Stage1Solution) -> AlphaSystem:
    st = spec.stage1
    g = stage1.grid
    l = st.l
    f11, f21, f12, f22 = stage1.psi.values.T
    b0 = spec.leader.b0

    def table(vals, src_cols, scale, names):
        # derivatives carried through so interpolation stays smooth
        dl = stage1.psi.dleft
        dr = stage1.psi.dright
        if dl is None or dr is None:
            return FunctionTable(g, vals, names=names)
        return FunctionTable(g, vals, src_cols(dl) * scale, src_cols(dr) * scale, names)

    def mat_derivs(d, which):
        x1, x2 = (d[:, 0], d[:, 1]) if which == 1 else (d[:, 2], d[:, 3])
        return np.column_stack([l * x1, l * x1, l * x2, l * x2])

    mu = FunctionTable(g, _mat_columns(st.a, l, f11, f21),
                       None if stage1.psi.dleft is None else mat_derivs(stage1.psi.dleft, 1),
                       None if stage1.psi.dright is None else mat_derivs(stage1.psi.dright, 1),
                       ("mu11", "mu12", "mu21", "mu22"))
    nu = FunctionTable(g, _mat_columns(st.a_bar, l, f12, f22),
                       None if stage1.psi.dleft is None else mat_derivs(stage1.psi.dleft, 2),
                       None if stage1.psi.dright is None else mat_derivs(stage1.psi.dright, 2),
                       ("nu11", "nu12", "nu21", "nu22"))
    delta = table(np.column_stack([f11, f21]) * b0, lambda d: d[:, :2], b0, ("delta1", "delta2"))
    delta_bar = table(np.column_stack([f12, f22]) * b0, lambda d: d[:, 2:], b0, ("delta_bar1", "delta_bar2"))
    return AlphaSystem(mu, nu, delta, delta_bar, st.c, st.c_bar)


def follower1_feedback(stage1: Stage1Solution, alpha1, spec: GameSpec, t: float, x: float,
                       x_bar: float) -> tuple[float, float]:
    st = spec.stage1
    f11, f21, f12, f22 = stage1.psi(t)
    a1, a2 = alpha1
    return (float(st.b1 / st.q1 * (f11 * x + f12 * x_bar + a1)),
            float(st.b2 / st.q2 * (f21 * x + f22 * x_bar + a2)))
