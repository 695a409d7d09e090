"""Post-exit followers' Nash problem: phi coefficient ODEs, state moments and continuation values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GameSpec
from .numerics import FunctionTable, TimeGrid, integrate_ode, node_derivatives


@dataclass(frozen=True)
class Stage2Solution:
    phi: FunctionTable  # columns phi11, phi21, phi12, phi22
    phi_sum1: FunctionTable
    phi_sum2: FunctionTable
    phi_i0_is_zero: bool = True

    @property
    def grid(self) -> TimeGrid:
        return self.phi.grid

    @property
    def phi11(self) -> FunctionTable:
        return self.phi.column(0)

    @property
    def phi21(self) -> FunctionTable:
        return self.phi.column(1)

    @property
    def phi12(self) -> FunctionTable:
        return self.phi.column(2)

    @property
    def phi22(self) -> FunctionTable:
        return self.phi.column(3)

    def to_csv(self) -> str:
        return self.phi.to_csv(("phi11", "phi21", "phi12", "phi22"))


@dataclass(frozen=True)
class MomentTables:
    """First and second moments of the stage-2 fundamental solution M given F_tau."""

    tau: float
    m_bar: FunctionTable
    m2: FunctionTable


@dataclass(frozen=True)
class KappaTables:
    kappa: FunctionTable  # columns kappa11, kappa21 over tau
    kappa_i2_is_zero: bool = True
    kappa_i0_is_zero: bool = True

    @property
    def kappa11(self) -> FunctionTable:
        return self.kappa.column(0)

    @property
    def kappa21(self) -> FunctionTable:
        return self.kappa.column(1)

    def kappa_i1(self, i: int, tau: float) -> float:
        return float(self.kappa(tau)[i - 1])

    def to_csv(self) -> str:
        return self.kappa.to_csv(("kappa11", "kappa21"), time_name="tau")


def _mix(st) -> float:
    # coefficient of phi_{i,1} in the mean-field equations
    return 2 * st.a_bar + st.c_bar ** 2 + 2 * st.c * st.c_bar


def solve_phi_sum(spec: GameSpec, grid: TimeGrid) -> FunctionTable:
    """Scalar Riccati for phi_1 = phi_11 + phi_21, integrated backward from -(r1+r2)."""
    st = spec.stage2
    l, k = st.l, 2 * st.a + st.c ** 2
    p = st.p1 + st.p2

    def rhs(t, y):
        return -(k * y + l * y * y - p)

    return integrate_ode(rhs, [-(spec.r1_T + spec.r2_T)], grid, "backward", "stage-2 phi_1 Riccati", ("phi1",))


def solve_phi_sum2(spec: GameSpec, grid: TimeGrid) -> FunctionTable:
    """The pair (phi_1, phi_2) of summed Riccati equations; column 1 is phi_2."""
    st = spec.stage2
    l, k, mix = st.l, 2 * st.a + st.c ** 2, _mix(st)
    p, pb = st.p1 + st.p2, st.p_bar1 + st.p_bar2

    def rhs(t, y):
        f1, f2 = y
        d1 = -(k * f1 + l * f1 * f1 - p)
        d2 = -((2 * st.a + 2 * st.a_bar + 2 * l * f1) * f2 + l * f2 * f2 + f1 * mix - pb)
        return np.array([d1, d2])

    return integrate_ode(rhs, [-(spec.r1_T + spec.r2_T), 0.0], grid, "backward",
                         "stage-2 phi_2 Riccati", ("phi1", "phi2"))


def phi_system_rhs(st, t, y, gamma: float = 0.0, kappa=(0.0, 0.0)) -> np.ndarray:
    """Right-hand side of the coupled per-follower coefficient system.

    ``y = (x11, x21, x12, x22)``. With ``gamma > 0`` the default compensation
    terms ``gamma*(kappa_i - x_i1)`` and ``-gamma*x_i2`` are added (stage 1).
    """
    f11, f21, f12, f22 = y
    l = st.l
    k = 2 * st.a + st.c ** 2
    mix = 2 * st.a_bar + st.c_bar ** 2 + 2 * st.c * st.c_bar
    f1 = f11 + f21
    f2 = f12 + f22
    d11 = -(k * f11 + l * f11 * f1 - st.p1 + gamma * (kappa[0] - f11))
    d21 = -(k * f21 + l * f21 * f1 - st.p2 + gamma * (kappa[1] - f21))
    base = 2 * st.a + 2 * st.a_bar + l * f1 + l * f2
    d12 = -(base * f12 + f11 * (mix + l * f2) - st.p_bar1 - gamma * f12)
    d22 = -(base * f22 + f21 * (mix + l * f2) - st.p_bar2 - gamma * f22)
    return np.array([d11, d21, d12, d22])


def _solve_phi_system(spec: GameSpec, grid: TimeGrid) -> FunctionTable:
    st = spec.stage2
    return integrate_ode(lambda t, y: phi_system_rhs(st, t, y), [-spec.r1_T, -spec.r2_T, 0.0, 0.0], grid,
                         "backward", "stage-2 phi system", ("phi11", "phi21", "phi12", "phi22"))


def solve_phi_individual(spec: GameSpec, phi_sum1: FunctionTable, grid: TimeGrid,
                         atol: float = 1e-8) -> tuple[FunctionTable, FunctionTable]:
    """Per-follower quadratic coefficients phi_11, phi_21; checks they add up to ``phi_sum1``."""
    phi = _solve_phi_system(spec, grid)
    gap = np.max(np.abs(phi.values[:, 0] + phi.values[:, 1] - phi_sum1.values[:, 0]))
    if gap > atol:
        raise ArithmeticError(f"phi_11 + phi_21 deviates from phi_1 by {gap:.3e}")
    return phi.column(0), phi.column(1)


def solve_phi_bar(spec: GameSpec, grid: TimeGrid, atol: float = 1e-8) -> tuple[FunctionTable, FunctionTable]:
    """Mean-field coefficients phi_12, phi_22; checks additivity against the phi_2 Riccati."""
    phi = _solve_phi_system(spec, grid)
    sums = solve_phi_sum2(spec, grid)
    gap = np.max(np.abs(phi.values[:, 2] + phi.values[:, 3] - sums.values[:, 1]))
    if gap > atol:
        raise ArithmeticError(f"phi_12 + phi_22 deviates from phi_2 by {gap:.3e}")
    return phi.column(2), phi.column(3)


def solve_stage2(spec: GameSpec, grid: TimeGrid) -> Stage2Solution:
    phi = _solve_phi_system(spec, grid)
    sums = solve_phi_sum2(spec, grid)
    return Stage2Solution(phi=phi, phi_sum1=sums.column(0), phi_sum2=sums.column(1))


def phi_residual(spec: GameSpec, sol: Stage2Solution) -> float:
    """Sup-norm residual of the coefficient system against 4th-order differences of the table."""
    st = spec.stage2
    dl, _ = node_derivatives(sol.phi.values, sol.grid)
    res = 0.0
    for tk, d, v in zip(sol.grid.nodes[1:], dl[1:], sol.phi.values[1:]):
        res = max(res, float(np.max(np.abs(d - phi_system_rhs(st, tk, v)))))
    return res


def _moment_rhs(st, sol: Stage2Solution):
    l = st.l

    def rhs(t, y):
        phi = sol.phi(t)
        f1 = phi[0] + phi[1]
        f2 = phi[2] + phi[3]
        alpha = st.a + l * f1
        beta = st.a_bar + l * f2
        m_bar, m2 = y
        return np.array([
            (alpha + beta) * m_bar,
            (2 * alpha + st.c ** 2) * m2 + (2 * beta + 2 * st.c * st.c_bar + st.c_bar ** 2) * m_bar ** 2,
        ])

    return rhs


def solve_moments(spec: GameSpec, stage2: Stage2Solution, tau: float, grid: TimeGrid | None = None) -> MomentTables:
    """E[M(t)|F_tau] and E[M(t)^2|F_tau] on [tau, T], both starting from 1.

    ``grid`` defaults to the stage-2 grid restricted to [tau, T] (``tau`` must be a node then).
    """
    if grid is None:
        g = stage2.grid
        k = g.index_of(tau)
        if k == g.n:
            raise ValueError("tau = T leaves an empty interval")
        grid = TimeGrid(tau, g.t1, g.n - k)
    tab = integrate_ode(_moment_rhs(spec.stage2, stage2), [1.0, 1.0], grid, "forward", "stage-2 moments",
                        ("m_bar", "m2"))
    return MomentTables(tau, tab.column(0), tab.column(1))


def kappa_integrand(st, phi: np.ndarray, m_bar: np.ndarray, m2: np.ndarray) -> np.ndarray:
    f11, f21, f12, f22 = phi.T
    return st.l * (f11 * f21 * m2 + (f11 * f22 + f12 * f21 + f12 * f22) * m_bar ** 2)


def _kappa_per_tau(spec: GameSpec, stage2: Stage2Solution) -> np.ndarray:
    # moment equations started at every tau node, advanced together; column j is tau = t_j
    g = stage2.grid
    st = spec.stage2
    t = g.nodes
    n = g.n
    rhs = _moment_rhs(st, stage2)
    m_bar = np.ones((n + 1, n + 1))
    m2 = np.ones((n + 1, n + 1))
    for k in range(n):
        ta, tb, h = t[k], t[k + 1], t[k + 1] - t[k]
        act = slice(0, k + 1)
        y = np.stack([m_bar[k, act], m2[k, act]])
        k1 = rhs(float(np.nextafter(ta, tb)), y)
        k2 = rhs(0.5 * (ta + tb), y + 0.5 * h * k1)
        k3 = rhs(0.5 * (ta + tb), y + 0.5 * h * k2)
        k4 = rhs(float(np.nextafter(tb, ta)), y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        m_bar[k + 1, act], m2[k + 1, act] = y
    f11, f21, f12, f22 = (stage2.phi.values[:, j][:, None] for j in range(4))
    integrand = st.l * (f11 * f21 * m2 + (f11 * f22 + f12 * f21 + f12 * f22) * m_bar ** 2)
    started = np.tril(np.ones((n, n + 1)), 0)  # segment k counts for tau_j when k >= j
    seg = 0.5 * (t[1:] - t[:-1])[:, None] * (integrand[1:] + integrand[:-1]) * started
    return seg.sum(axis=0)


def compute_kappa(spec: GameSpec, stage2: Stage2Solution, method: str = "sweep") -> KappaTables:
    """Continuation-value coefficients kappa_{i,1}(tau) on the stage-2 grid.

    ``method="sweep"`` integrates one backward adjoint system for the moment
    functional (O(n)); ``method="per_tau"`` re-solves the moment equations from
    every tau node and applies trapezoidal quadrature (O(n^2)).
    """
    g = stage2.grid
    st = spec.stage2
    phi_v = stage2.phi.values
    if method == "per_tau":
        extra = _kappa_per_tau(spec, stage2)
        vals = np.column_stack([phi_v[:, 0] + phi_v[:, 2] + extra, phi_v[:, 1] + phi_v[:, 3] + extra])
        return KappaTables(FunctionTable(g, vals, names=("kappa11", "kappa21")))
    if method != "sweep":
        raise ValueError(f"unknown method {method!r}")

    l = st.l

    # lambda' = -A^T lambda - w, lambda(T) = 0, where (m2, m_bar^2)' = A (m2, m_bar^2)
    def rhs(t, lam):
        f11, f21, f12, f22 = stage2.phi(t)
        alpha = st.a + l * (f11 + f21)
        beta = st.a_bar + l * (f12 + f22)
        a11 = 2 * alpha + st.c ** 2
        a12 = 2 * beta + 2 * st.c * st.c_bar + st.c_bar ** 2
        a22 = 2 * (alpha + beta)
        w1 = l * f11 * f21
        w2 = l * (f11 * f22 + f12 * f21 + f12 * f22)
        return np.array([-(a11 * lam[0]) - w1, -(a12 * lam[0] + a22 * lam[1]) - w2])

    lam = integrate_ode(rhs, [0.0, 0.0], g, "backward", "kappa adjoint")
    extra = lam.values.sum(axis=1)
    dl_extra = lam.dleft.sum(axis=1)
    dr_extra = lam.dright.sum(axis=1)
    pv, pl, pr = stage2.phi.values, stage2.phi.dleft, stage2.phi.dright
    vals = np.column_stack([pv[:, 0] + pv[:, 2] + extra, pv[:, 1] + pv[:, 3] + extra])
    dl = np.column_stack([pl[:, 0] + pl[:, 2] + dl_extra, pl[:, 1] + pl[:, 3] + dl_extra])
    dr = np.column_stack([pr[:, 0] + pr[:, 2] + dr_extra, pr[:, 1] + pr[:, 3] + dr_extra])
    return KappaTables(FunctionTable(g, vals, dl, dr, ("kappa11", "kappa21")))


def phi_zero_check(spec: GameSpec, grid: TimeGrid) -> float:
    """Drift residual of the zero candidate for the linear BSDE of (phi_10, phi_20).

    The system is linear and homogeneous with zero terminal data, so zero is
    its unique solution; the residual below is identically 0.0.
    """
    st = spec.stage2
    sol = solve_stage2(spec, grid)
    alpha = np.zeros(2)
    beta = np.zeros(2)
    worst = 0.0
    for t, (f11, f21, f12, f22) in zip(grid.nodes, sol.phi.values):
        mu = np.array([[st.a + st.l * f11, st.l * f11], [st.l * f21, st.a + st.l * f21]])
        nu = np.array([[st.a_bar + st.l * f12, st.l * f12], [st.l * f22, st.a_bar + st.l * f22]])
        drift = mu @ alpha + nu @ alpha + st.c * beta + st.c_bar * beta
        worst = max(worst, float(np.max(np.abs(drift))))
    return worst


def follower2_feedback(stage2: Stage2Solution, spec: GameSpec, t: float, x: float, x_bar: float) -> tuple[float, float]:
    st = spec.stage2
    f11, f21, f12, f22 = stage2.phi(t)
    v1 = st.b1 / st.q1 * (f11 * x + f12 * x_bar)
    v2 = st.b2 / st.q2 * (f21 * x + f22 * x_bar)
    return float(v1), float(v2)
