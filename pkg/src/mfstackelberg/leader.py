"""Leader's pre-exit problem: extended forward-backward system and its jump-compensated Riccati pair.

The forward state is Y = (X, Z1, Z2), where Z is the leader's adjoint for the
followers' alpha equations; the backward state is P = (p, alpha1, alpha2).
The decoupling ansatz is P = G (Y - E Y) + Ghat E Y with deterministic G, Ghat.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .model import GameSpec
from .numerics import FunctionTable, TimeGrid, integrate_ode, node_derivatives
from .stage1 import COMPENSATED, Stage1Solution, build_alpha_system
from .stage2 import phi_system_rhs


class RestrictionError(ValueError):
    """The spec is outside the case with a closed-loop leader solution."""

    def __init__(self, offending: dict[str, float]):
        self.offending = offending
        listed = ", ".join(f"{k}={v:g}" for k, v in offending.items())
        super().__init__(f"leader feedback needs a_bar1 = c_bar1 = d0_bar = 0; got {listed}")


def check_restriction(spec: GameSpec) -> None:
    bad = {k: v for k, v in (("a_bar1", spec.stage1.a_bar), ("c_bar1", spec.stage1.c_bar),
                             ("d0_bar", spec.leader.d0_bar)) if v != 0.0}
    if bad:
        raise RestrictionError(bad)


@dataclass(frozen=True)
class Coefficients:
    A: np.ndarray
    A_bar: np.ndarray
    B: np.ndarray
    M2: np.ndarray
    M2_bar: np.ndarray
    G_jump: np.ndarray
    gamma: float
    c: float


def _coefficients(spec: GameSpec, psi: np.ndarray, gamma: float, r0: float) -> Coefficients:
    st, ld = spec.stage1, spec.leader
    f11, f21, f12, f22 = psi
    l = st.l
    b0, q0 = ld.b0, ld.q0
    delta = b0 * np.array([f11, f21])
    delta_bar = b0 * np.array([f12, f22])
    mu = np.array([[st.a + l * f11, l * f11], [l * f21, st.a + l * f21]])
    nu = np.array([[st.a_bar + l * f12, l * f12], [l * f22, st.a_bar + l * f22]])

    A = np.zeros((3, 3))
    A[0, 0] = st.a + l * (f11 + f21)
    A[0, 1:] = b0 * delta / q0
    A[1:, 1:] = mu.T
    A_bar = np.zeros((3, 3))
    A_bar[0, 0] = st.a_bar + l * (f12 + f22)
    A_bar[0, 1:] = b0 * delta_bar / q0
    A_bar[1:, 1:] = nu.T
    B = np.array([[b0 * b0 / q0, l, l], [l, 0.0, 0.0], [l, 0.0, 0.0]])
    M2 = np.zeros((3, 3))
    M2[0, 0] = -ld.p0
    M2[1:, 1:] = np.outer(delta, delta) / q0
    M2_bar = np.zeros((3, 3))
    M2_bar[0, 0] = -ld.p_bar0
    M2_bar[1:, 1:] = (np.outer(delta, delta_bar) + np.outer(delta_bar, delta)
                      + np.outer(delta_bar, delta_bar)) / q0
    G_jump = np.diag([-r0 * (1.0 + ld.d0) ** 2, 0.0, 0.0])
    return Coefficients(A, A_bar, B, M2, M2_bar, G_jump, gamma, st.c)


@dataclass(frozen=True)
class ExtendedSystem:
    """Extended-state coefficient tables on the stage-1 grid (3x3 blocks stored row-major)."""

    spec: GameSpec
    stage1: Stage1Solution
    L1: FunctionTable
    L1_bar: FunctionTable
    L2: FunctionTable
    L3: np.ndarray
    M1: FunctionTable
    M2: FunctionTable
    M2_bar: FunctionTable
    k_F: FunctionTable

    @property
    def grid(self) -> TimeGrid:
        return self.stage1.grid

    def at(self, t: float) -> Coefficients:
        return _coefficients(self.spec, self.stage1.psi(t), self.spec.intensity.rate(t), self.spec.leader.r0_at(t))

    def G_jump(self, t: float) -> np.ndarray:
        return self.at(t).G_jump


def build_extended_system(spec: GameSpec, stage1: Stage1Solution) -> ExtendedSystem:
    check_restriction(spec)
    if stage1.mode != COMPENSATED:
        raise ValueError("the leader system is built on the compensated stage-1 solution")
    build_alpha_system(spec, stage1)  # shape and definition checks live there
    g = stage1.grid
    rows = {name: [] for name in ("A", "A_bar", "B", "M1", "M2", "M2_bar", "k")}
    for tk, psi in zip(g.nodes, stage1.psi.values):
        gam = spec.intensity.rate(float(np.nextafter(tk, spec.T)) if tk < spec.T else tk)
        co = _coefficients(spec, psi, gam, spec.leader.r0_at(tk))
        rows["A"].append(co.A.ravel())
        rows["A_bar"].append(co.A_bar.ravel())
        rows["B"].append(co.B.ravel())
        rows["M1"].append((co.A.T - gam * np.eye(3)).ravel())
        rows["M2"].append(co.M2.ravel())
        rows["M2_bar"].append(co.M2_bar.ravel())
        rows["k"].append([co.A[0, 0]])
    tab = {k: FunctionTable(g, np.array(v)) for k, v in rows.items()}
    L3 = np.diag([spec.leader.d0, 0.0, 0.0])
    return ExtendedSystem(spec, stage1, tab["A"], tab["A_bar"], tab["B"], L3, tab["M1"],
                          tab["M2"], tab["M2_bar"], tab["k"])


def riccati_rhs(co: Coefficients, G: np.ndarray, G_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Time derivatives of the fluctuation and mean Riccati matrices."""
    A, B, gam, c2 = co.A, co.B, co.gamma, co.c ** 2
    dG = -(G @ A + A.T @ G + G @ B @ G + co.M2 + c2 * G - gam * (G - co.G_jump))
    Af = A + co.A_bar
    dH = -(G_hat @ Af + Af.T @ G_hat + G_hat @ B @ G_hat + co.M2 + co.M2_bar + c2 * G
           - gam * (G_hat - co.G_jump))
    return dG, dH


_G_NAMES = tuple(f"G{i}{j}" for i in range(1, 4) for j in range(1, 4))
_H_NAMES = tuple(f"Ghat{i}{j}" for i in range(1, 4) for j in range(1, 4))


@dataclass(frozen=True)
class LeaderSolution:
    spec: GameSpec
    system: ExtendedSystem
    table: FunctionTable  # 18 columns: G row-major then Ghat row-major

    @property
    def grid(self) -> TimeGrid:
        return self.table.grid

    def G(self, t: float) -> np.ndarray:
        return self.table(t)[:9].reshape(3, 3)

    def G_hat(self, t: float) -> np.ndarray:
        return self.table(t)[9:].reshape(3, 3)

    @property
    def G_tilde(self) -> FunctionTable:
        return FunctionTable(self.grid, self.table.values[:, :9], names=_G_NAMES)

    def gains(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(g, g_bar) with v0 = g . (Y - E Y) + g_bar . E Y."""
        ld = self.spec.leader
        psi = self.system.stage1.psi(t)
        delta = ld.b0 * psi[:2]
        delta_bar = ld.b0 * psi[2:]
        g = (ld.b0 * self.G(t)[0] + np.r_[0.0, delta]) / ld.q0
        g_bar = (ld.b0 * self.G_hat(t)[0] + np.r_[0.0, delta + delta_bar]) / ld.q0
        return g, g_bar

    def feedback_gain(self, t: float) -> np.ndarray:
        return self.gains(t)[0]

    def alpha1(self, t: float, Y, Y_bar) -> np.ndarray:
        """Followers' alpha at time t: rows 2-3 of the backward state."""
        Y, Y_bar = np.asarray(Y, float), np.asarray(Y_bar, float)
        return self.G(t)[1:] @ (Y - Y_bar) + self.G_hat(t)[1:] @ Y_bar

    def root_controls(self) -> tuple[float, float, float]:
        """(v0, v1, v2) at t = 0 with the leader's adjoint started at zero."""
        spec = self.spec
        x0 = spec.x0
        Y0 = np.array([x0, 0.0, 0.0])
        v0 = leader_feedback(self, spec, 0.0, Y0, Y0)
        alpha = self.alpha1(0.0, Y0, Y0)
        st = spec.stage1
        psi = self.system.stage1.psi(0.0)
        v1 = st.b1 / st.q1 * ((psi[0] + psi[2]) * x0 + alpha[0])
        v2 = st.b2 / st.q2 * ((psi[1] + psi[3]) * x0 + alpha[1])
        return float(v0), float(v1), float(v2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["t", *_G_NAMES, "gain1", "gain2", "gain3", *_H_NAMES, "gain_bar1", "gain_bar2", "gain_bar3"]
        buf.write(",".join(cols) + "\n")
        for tk, row in zip(self.grid.nodes, self.table.values):
            g, gb = self.gains(tk)
            vals = (tk, *row[:9], *g, *row[9:], *gb)
            buf.write(",".join(repr(float(x)) for x in vals) + "\n")
        return buf.getvalue()


def solve_jump_riccati(system: ExtendedSystem) -> LeaderSolution:
    spec = system.spec
    T = spec.T

    def rhs(t, y):
        dG, dH = riccati_rhs(system.at(t), y[:9].reshape(3, 3), y[9:].reshape(3, 3))
        return np.concatenate([dG.ravel(), dH.ravel()])

    terminal = np.diag([-spec.leader.r0_at(T), 0.0, 0.0]).ravel()
    tab = integrate_ode(rhs, np.concatenate([terminal, terminal]), system.grid, "backward",
                        "leader Riccati", _G_NAMES + _H_NAMES)
    return LeaderSolution(spec, system, tab)


def solve_leader(spec: GameSpec, stage1: Stage1Solution) -> LeaderSolution:
    return solve_jump_riccati(build_extended_system(spec, stage1))


def leader_feedback(sol: LeaderSolution, spec: GameSpec, t: float, Y, Y_bar=None) -> float:
    """v0 = q0^{-1} (b0 p + delta1 . Z + delta1_bar . E Z); ``Y_bar`` defaults to ``Y``."""
    Y = np.asarray(Y, dtype=float)
    Y_bar = Y if Y_bar is None else np.asarray(Y_bar, dtype=float)
    g, g_bar = sol.gains(t)
    return float(g @ (Y - Y_bar) + g_bar @ Y_bar)


def riccati_residual(sol: LeaderSolution, table: FunctionTable | None = None) -> FunctionTable:
    """Per-node sup-norm residual of both Riccati equations (4th-order differences of the table)."""
    tab = sol.table if table is None else table
    g = tab.grid
    dl, dr = node_derivatives(tab.values, g, sol.spec.breakpoints)
    out = np.zeros(g.n + 1)
    nodes = g.nodes
    for k, tk in enumerate(nodes):
        y = tab.values[k]
        worst = 0.0
        for d, side in ((dl[k], -1), (dr[k], 1)):
            if (side < 0 and k == 0) or (side > 0 and k == g.n):
                continue
            ts = float(np.nextafter(tk, nodes[k + side]))
            co = _coefficients(sol.spec, sol.system.stage1.psi(ts), sol.spec.intensity.rate(ts),
                               sol.spec.leader.r0_at(ts))
            dG, dH = riccati_rhs(co, y[:9].reshape(3, 3), y[9:].reshape(3, 3))
            worst = max(worst, float(np.max(np.abs(d - np.concatenate([dG.ravel(), dH.ravel()])))))
        out[k] = worst
    return FunctionTable(g, out, names=("residual",))


def reference_riccati(spec: GameSpec, t_eval: np.ndarray, rtol: float = 1e-12, atol: float = 1e-13) -> np.ndarray:
    """Standard no-default Riccati pair solved jointly with the follower system by an adaptive solver.

    Independent of the fixed-step pipeline; valid for zero intensity and r0 constant.
    Returns rows of 18 entries (G then Ghat) at ``t_eval``.
    """
    check_restriction(spec)
    st, ld = spec.stage1, spec.leader
    l, c2 = st.l, st.c ** 2
    b0, q0 = ld.b0, ld.q0
    r0 = ld.r0_at(spec.T)

    def mats(psi):
        f11, f21, f12, f22 = psi
        d = b0 * np.array([f11, f21])
        db = b0 * np.array([f12, f22])
        A = np.block([[np.array([[st.a + l * (f11 + f21)]]), (b0 / q0 * d)[None, :]],
                      [np.zeros((2, 1)), np.array([[st.a + l * f11, l * f11], [l * f21, st.a + l * f21]]).T]])
        Ab = np.block([[np.array([[st.a_bar + l * (f12 + f22)]]), (b0 / q0 * db)[None, :]],
                       [np.zeros((2, 1)), np.array([[st.a_bar + l * f12, l * f12], [l * f22, st.a_bar + l * f22]]).T]])
        B = np.array([[b0 ** 2 / q0, l, l], [l, 0, 0], [l, 0, 0]])
        Q = np.diag([-ld.p0, 0.0, 0.0])
        Q[1:, 1:] = np.outer(d, d) / q0
        Qb = np.diag([-ld.p_bar0, 0.0, 0.0])
        Qb[1:, 1:] = (np.outer(d, db) + np.outer(db, d) + np.outer(db, db)) / q0
        return A, Ab, B, Q, Qb

    def rhs(t, y):
        psi = y[:4]
        G = y[4:13].reshape(3, 3)
        H = y[13:].reshape(3, 3)
        A, Ab, B, Q, Qb = mats(psi)
        dpsi = phi_system_rhs(st, t, psi)
        dG = -(G @ A + A.T @ G + G @ B @ G + Q + c2 * G)
        F = A + Ab
        dH = -(H @ F + F.T @ H + H @ B @ H + Q + Qb + c2 * G)
        return np.concatenate([dpsi, dG.ravel(), dH.ravel()])

    term = np.diag([-r0, 0.0, 0.0]).ravel()
    y_T = np.concatenate([[-spec.r1_T, -spec.r2_T, 0.0, 0.0], term, term])
    t_desc = np.asarray(t_eval, float)[::-1]
    out = solve_ivp(rhs, (spec.T, float(t_desc[-1])), y_T, method="DOP853", t_eval=t_desc, rtol=rtol, atol=atol)
    if not out.success:
        raise ArithmeticError(out.message)
    return out.y[4:, ::-1].T


@dataclass(frozen=True)
class EquilibriumValues:
    J0: float
    J1: float
    J2: float


def equilibrium_values(spec: GameSpec, sol: LeaderSolution, kappa) -> EquilibriumValues:
    """Objective values of all players under the continuous equilibrium.

    Propagates the pre-exit mean and fluctuation covariance of the extended
    state and integrates survival-weighted running costs plus the exit rewards.
    """
    st, ld = spec.stage1, spec.leader
    psi_tab = sol.system.stage1.psi
    rate = spec.intensity.rate

    def controls(t):
        psi = psi_tab(t)
        G, H = sol.G(t), sol.G_hat(t)
        g0, g0b = sol.gains(t)
        e0 = np.array([1.0, 0.0, 0.0])
        u = [g0]
        w = [g0b]
        for i, bq in ((0, st.b1 / st.q1), (1, st.b2 / st.q2)):
            u.append(bq * (psi[i] * e0 + G[i + 1]))
            w.append(bq * ((psi[i] + psi[i + 2]) * e0 + H[i + 1]))
        return u, w

    def rhs(t, y):
        m = y[:3]
        S = y[3:12].reshape(3, 3)
        surv = y[12]
        co = sol.system.at(t)
        G, H = sol.G(t), sol.G_hat(t)
        F = co.A + co.B @ G
        Fh = co.A + co.A_bar + co.B @ H
        dm = Fh @ m
        dS = F @ S + S @ F.T + co.c ** 2 * (S + np.outer(m, m))
        gam = rate(t)
        ex2 = S[0, 0] + m[0] ** 2
        u, w = controls(t)
        ev = [ui @ S @ ui + (wi @ m) ** 2 for ui, wi in zip(u, w)]
        kap = kappa.kappa(t)
        r0 = ld.r0_at(t)
        run0 = -0.5 * (ld.p0 * ex2 + ld.p_bar0 * m[0] ** 2 + ld.q0 * ev[0]) \
            - 0.5 * gam * r0 * (1 + ld.d0) ** 2 * ex2
        run1 = -0.5 * (st.p1 * ex2 + st.p_bar1 * m[0] ** 2 + st.q1 * ev[1]) + 0.5 * gam * kap[0] * ex2
        run2 = -0.5 * (st.p2 * ex2 + st.p_bar2 * m[0] ** 2 + st.q2 * ev[2]) + 0.5 * gam * kap[1] * ex2
        return np.concatenate([dm, dS.ravel(), [-gam * surv, surv * run0, surv * run1, surv * run2]])

    y0 = np.zeros(16)
    y0[0] = spec.x0
    y0[12] = 1.0
    tab = integrate_ode(rhs, y0, sol.grid, "forward", "equilibrium values")
    yT = tab.values[-1]
    ex2T = yT[3] + yT[0] ** 2
    surv = yT[12]
    return EquilibriumValues(
        J0=float(yT[13] - 0.5 * surv * ld.r0_at(spec.T) * ex2T),
        J1=float(yT[14] - 0.5 * surv * spec.r1_T * ex2T),
        J2=float(yT[15] - 0.5 * surv * spec.r2_T * ex2T),
    )
