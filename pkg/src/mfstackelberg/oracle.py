"""Exact discrete-time oracle on a scenario tree.

Pre-exit the tree is binary (dB = +-sqrt(dt)); at every pre-exit node the
leader exits first with probability gamma*dt, before the step. After an exit
the followers play a stage-2 subgame whose equilibrium value is quadratic in
the state at exit, so each subtree collapses to a continuation coefficient
computed by solving that subgame exactly (it does not depend on the path).

Objectives are quadratic in the stacked control vector u, so every player's
objective is assembled as const + g.u + u.H.u / 2 from affine state
coefficients, and the equilibrium follows from linear stationarity systems.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .model import GameSpec, StageCoefficients

MAX_STEPS = 8
UP, DOWN, DEFAULT = "up", "down", "default"


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    id: int
    level: int
    parent: int | None
    branch: str | None
    prob: float  # conditional probability given the parent


@dataclass(frozen=True)
class ScenarioTree:
    spec: GameSpec
    n_steps: int
    gamma_dt: np.ndarray  # exit probability at each pre-exit level 0..n-1

    @property
    def dt(self) -> float:
        return self.spec.T / self.n_steps

    @property
    def n_nodes(self) -> int:
        """Pre-exit decision nodes per player."""
        return 2 ** self.n_steps - 1

    @property
    def survival(self) -> np.ndarray:
        """s_k = probability of reaching level k without exit, k = 0..n."""
        return np.concatenate([[1.0], np.cumprod(1.0 - self.gamma_dt)])

    def reach(self, k: int) -> float:
        """Probability of one particular pre-exit node at level k."""
        return float(self.survival[k] / 2 ** k)

    def idx(self, player: int, k: int, m: int) -> int:
        return player * self.n_nodes + 2 ** k - 1 + m

    def nodes(self) -> Iterator[Node]:
        """Pre-exit nodes in breadth-first order, each followed by its default child if any."""
        nid = 0
        ids: dict[tuple[int, int], int] = {}
        for k in range(self.n_steps + 1):
            gdt = self.gamma_dt[k - 1] if k > 0 else 0.0
            for m in range(2 ** k):
                parent = None if k == 0 else ids[(k - 1, m // 2)]
                branch = None if k == 0 else (UP if m % 2 == 0 else DOWN)
                prob = 1.0 if k == 0 else float(0.5 * (1.0 - gdt))
                ids[(k, m)] = nid
                yield Node(nid, k, parent, branch, prob)
                nid += 1
                if k < self.n_steps and self.gamma_dt[k] > 0:
                    yield Node(nid, k, ids[(k, m)], DEFAULT, float(self.gamma_dt[k]))
                    nid += 1


def build_tree(spec: GameSpec, n_steps: int) -> ScenarioTree:
    if not 1 <= n_steps <= MAX_STEPS:
        raise TreeError(f"n_steps must be in 1..{MAX_STEPS}, got {n_steps}")
    dt = spec.T / n_steps
    t = np.arange(n_steps) * dt
    gdt = np.array([spec.intensity.rate(tk) for tk in t]) * dt
    if np.any(gdt >= 1.0):
        raise TreeError("gamma * dt must stay below 1")
    return ScenarioTree(spec, n_steps, gdt)


# ---------------------------------------------------------------- affine machinery

def _affine_states(st: StageCoefficients, gains: list[float], n_levels: int, dt: float,
                   x0: float, n_nodes: int, active: list[bool] | None = None) -> list[np.ndarray]:
    """State coefficients per level: row m of C[k] holds (const, d X_k[m] / d u)."""
    n_ctrl = len(gains) * n_nodes
    sq = np.sqrt(dt)
    C = [np.zeros((1, 1 + n_ctrl))]
    C[0][0, 0] = x0
    for k in range(n_levels):
        cur = C[k]
        mean = cur.mean(axis=0)
        drift = st.a * cur + st.a_bar * mean
        rows = np.arange(2 ** k)
        for p, b in enumerate(gains):
            if active is None or active[p]:
                drift[rows, 1 + p * n_nodes + 2 ** k - 1 + rows] += b
        vol = st.c * cur + st.c_bar * mean
        nxt = np.empty((2 ** (k + 1), 1 + n_ctrl))
        nxt[0::2] = cur + drift * dt + vol * sq
        nxt[1::2] = cur + drift * dt - vol * sq
        C.append(nxt)
    return C


class _Quad:
    """Accumulates const + g.u + u.H.u/2."""

    def __init__(self, dim: int):
        self.const = 0.0
        self.g = np.zeros(dim)
        self.H = np.zeros((dim, dim))

    def add_square(self, rows: np.ndarray, w) -> None:
        # sum_m w_m (c_m + x_m.u)^2
        rows = np.atleast_2d(rows)
        w = np.broadcast_to(np.asarray(w, dtype=float), (rows.shape[0],))
        c, x = rows[:, 0], rows[:, 1:]
        self.const += float(np.sum(w * c * c))
        self.g += 2.0 * (w * c) @ x
        self.H += 2.0 * (x.T * w) @ x

    def add_control(self, index: np.ndarray, w: float) -> None:
        self.H[index, index] += 2.0 * w

    def value(self, u: np.ndarray) -> float:
        return float(self.const + self.g @ u + 0.5 * u @ self.H @ u)

    def grad(self, u: np.ndarray) -> np.ndarray:
        return self.g + self.H @ u


# ---------------------------------------------------------------- post-exit subgame

@dataclass(frozen=True)
class SubgameValue:
    kappa: np.ndarray  # (2,) continuation coefficients: value = kappa X^2 / 2
    mean: np.ndarray  # subtree mean at each remaining level for X = 1 at entry
    controls: np.ndarray  # (2, nodes) follower controls for X = 1 at entry


def solve_exit_subgame(spec: GameSpec, n_levels: int, dt: float) -> SubgameValue:
    """Stage-2 Nash subgame over ``n_levels`` remaining steps, entered with X = 1."""
    st = spec.stage2
    if n_levels == 0:
        return SubgameValue(np.array([-spec.r1_T, -spec.r2_T]), np.ones(1), np.zeros((2, 0)))
    N = 2 ** n_levels - 1
    C = _affine_states(st, [st.b1, st.b2], n_levels, dt, 1.0, N)
    quads = [_Quad(2 * N), _Quad(2 * N)]
    for i, J in enumerate(quads):
        for k in range(n_levels):
            w = dt / 2 ** k
            J.add_square(C[k], -0.5 * st.p(i + 1) * w)
            J.add_square(C[k].mean(axis=0), -0.5 * st.p_bar(i + 1) * dt)
            J.add_control(i * N + 2 ** k - 1 + np.arange(2 ** k), -0.5 * st.q(i + 1) * w)
        J.add_square(C[n_levels], -0.5 * spec.r_T(i + 1) / 2 ** n_levels)
    blocks = [np.arange(N), N + np.arange(N)]
    K = np.vstack([quads[0].H[blocks[0]], quads[1].H[blocks[1]]])
    rhs = -np.concatenate([quads[0].g[blocks[0]], quads[1].g[blocks[1]]])
    u = np.linalg.solve(K, rhs)
    kappa = np.array([2.0 * J.value(u) for J in quads])
    mean = np.array([float(Ck.mean(axis=0) @ np.r_[1.0, u]) for Ck in C])
    return SubgameValue(kappa, mean, u.reshape(2, N))


def exit_values(tree: ScenarioTree) -> list[SubgameValue]:
    """Continuation values for an exit at each pre-exit level 0..n-1."""
    return [solve_exit_subgame(tree.spec, tree.n_steps - k, tree.dt) for k in range(tree.n_steps)]


# ---------------------------------------------------------------- pre-exit game

@dataclass
class _Assembly:
    tree: ScenarioTree
    states: list[np.ndarray]
    quads: list[_Quad]
    subgames: list[SubgameValue]


def _assemble(tree: ScenarioTree) -> _Assembly:
    spec, st, ld = tree.spec, tree.spec.stage1, tree.spec.leader
    n, dt, N = tree.n_steps, tree.dt, tree.n_nodes
    C = _affine_states(st, [ld.b0, st.b1, st.b2], n, dt, spec.x0, N)
    subgames = exit_values(tree)
    J = [_Quad(3 * N) for _ in range(3)]
    p = [ld.p0, st.p1, st.p2]
    pb = [ld.p_bar0, st.p_bar1, st.p_bar2]
    q = [ld.q0, st.q1, st.q2]
    for k in range(n):
        reach = tree.reach(k)
        gdt = float(tree.gamma_dt[k])
        tk = k * dt
        mean = C[k].mean(axis=0)
        w_run = reach * (1.0 - gdt) * dt
        for j in range(3):
            J[j].add_square(C[k], -0.5 * p[j] * w_run)
            J[j].add_square(mean, -0.5 * pb[j] * w_run * 2 ** k)
            J[j].add_control(j * N + 2 ** k - 1 + np.arange(2 ** k), -0.5 * q[j] * w_run)
        if gdt > 0:
            w_exit = reach * gdt
            jumped = (1.0 + ld.d0) * C[k] + ld.d0_bar * mean
            J[0].add_square(jumped, -0.5 * ld.r0_at(tk) * w_exit)
            for i in (1, 2):
                J[i].add_square(C[k], 0.5 * subgames[k].kappa[i - 1] * w_exit)
    reach = tree.reach(n)
    J[0].add_square(C[n], -0.5 * ld.r0_at(spec.T) * reach)
    for i in (1, 2):
        J[i].add_square(C[n], -0.5 * spec.r_T(i) * reach)
    return _Assembly(tree, C, J, subgames)


@dataclass(frozen=True)
class ResponseMap:
    """Followers' equilibrium reaction u_F = slope @ u0 + offset (u_F stacks v1 then v2)."""

    slope: np.ndarray
    offset: np.ndarray

    def __call__(self, u0: np.ndarray) -> np.ndarray:
        return self.slope @ np.asarray(u0, dtype=float) + self.offset


def _blocks(tree: ScenarioTree) -> list[np.ndarray]:
    N = tree.n_nodes
    return [np.arange(N) + j * N for j in range(3)]


def _follower_system(asm: _Assembly) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    b0, b1, b2 = _blocks(asm.tree)
    J1, J2 = asm.quads[1], asm.quads[2]
    K = np.block([[J1.H[np.ix_(b1, b1)], J1.H[np.ix_(b1, b2)]],
                  [J2.H[np.ix_(b2, b1)], J2.H[np.ix_(b2, b2)]]])
    coupling = np.vstack([J1.H[np.ix_(b1, b0)], J2.H[np.ix_(b2, b0)]])
    g = np.concatenate([J1.g[b1], J2.g[b2]])
    return K, coupling, g


def solve_followers_nash(tree: ScenarioTree, v0, asm: _Assembly | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Followers' pre-exit Nash controls for a fixed leader assignment (one value per node)."""
    asm = asm or _assemble(tree)
    K, coupling, g = _follower_system(asm)
    u0 = np.broadcast_to(np.asarray(v0, dtype=float), (tree.n_nodes,))
    uf = np.linalg.solve(K, -(g + coupling @ u0))
    res = np.max(np.abs(K @ uf + g + coupling @ u0), initial=0.0)
    if res > 1e-10 * max(1.0, np.max(np.abs(g), initial=0.0)):
        raise ArithmeticError(f"follower stationarity residual {res:.3e}")
    N = tree.n_nodes
    return uf[:N], uf[N:]


def followers_response_map(tree: ScenarioTree, asm: _Assembly | None = None,
                           rng: np.random.Generator | None = None) -> ResponseMap:
    """Affine reaction map, built column by column from basis leader assignments."""
    asm = asm or _assemble(tree)
    N = tree.n_nodes
    base = np.concatenate(solve_followers_nash(tree, np.zeros(N), asm))
    cols = []
    for j in range(N):
        e = np.zeros(N)
        e[j] = 1.0
        cols.append(np.concatenate(solve_followers_nash(tree, e, asm)) - base)
    rmap = ResponseMap(np.column_stack(cols), base)
    rng = rng or np.random.default_rng(0)
    probe = rng.standard_normal(N)
    gap = np.max(np.abs(rmap(probe) - np.concatenate(solve_followers_nash(tree, probe, asm))))
    if gap > 1e-10 * max(1.0, np.max(np.abs(rmap(probe)))):
        raise ArithmeticError(f"response map is not affine to 1e-10 (gap {gap:.3e})")
    return rmap


@dataclass(frozen=True)
class TreeSolution:
    tree: ScenarioTree
    v0: np.ndarray  # per pre-exit node, breadth-first
    v1: np.ndarray
    v2: np.ndarray
    J: tuple[float, float, float]
    response: ResponseMap
    subgames: list[SubgameValue] = field(repr=False)
    stationarity: float = 0.0

    @property
    def root(self) -> tuple[float, float, float]:
        return float(self.v0[0]), float(self.v1[0]), float(self.v2[0])

    @property
    def u(self) -> np.ndarray:
        return np.concatenate([self.v0, self.v1, self.v2])


def solve_leader(tree: ScenarioTree, response: ResponseMap | None = None,
                 asm: _Assembly | None = None) -> TreeSolution:
    """Leader's optimum against the followers' reaction, by the concave QP's stationarity system."""
    asm = asm or _assemble(tree)
    response = response or followers_response_map(tree, asm)
    N = tree.n_nodes
    # u = E u0 + f
    E = np.vstack([np.eye(N), response.slope])
    f = np.concatenate([np.zeros(N), response.offset])
    J0 = asm.quads[0]
    H = E.T @ J0.H @ E
    g = E.T @ (J0.g + J0.H @ f)
    eig = np.linalg.eigvalsh(0.5 * (H + H.T))
    if eig.max() >= 0:
        raise ArithmeticError("leader objective is not strictly concave on this tree")
    u0 = np.linalg.solve(H, -g)
    stat = float(np.max(np.abs(H @ u0 + g)))
    u = E @ u0 + f
    J = tuple(q.value(u) for q in asm.quads)
    return TreeSolution(tree, u[:N], u[N:2 * N], u[2 * N:], J, response, asm.subgames, stat)


def solve_tree(spec: GameSpec, n_steps: int) -> TreeSolution:
    tree = build_tree(spec, n_steps)
    asm = _assemble(tree)
    return solve_leader(tree, followers_response_map(tree, asm), asm)


def tree_objective(tree: ScenarioTree, controls, subgames: list[SubgameValue] | None = None) -> tuple[float, float, float]:
    """(J0, J1, J2) by direct forward recursion for given pre-exit controls.

    ``controls`` is (v0, v1, v2), each one value per pre-exit node in
    breadth-first order; after an exit the followers play the exit subgame
    equilibrium, which enters through its continuation coefficients.
    """
    spec, st, ld = tree.spec, tree.spec.stage1, tree.spec.leader
    subgames = subgames if subgames is not None else exit_values(tree)
    v = [np.asarray(c, dtype=float) for c in controls]
    b = [ld.b0, st.b1, st.b2]
    p = [ld.p0, st.p1, st.p2]
    pb = [ld.p_bar0, st.p_bar1, st.p_bar2]
    q = [ld.q0, st.q1, st.q2]
    n, dt = tree.n_steps, tree.dt
    sq = np.sqrt(dt)
    X = np.array([spec.x0])
    J = [0.0, 0.0, 0.0]
    for k in range(n):
        sl = slice(2 ** k - 1, 2 ** (k + 1) - 1)
        xb = X.mean()
        reach = tree.reach(k)
        gdt = float(tree.gamma_dt[k])
        if gdt > 0:
            J[0] += reach * gdt * np.sum(-0.5 * ld.r0_at(k * dt) * ((1 + ld.d0) * X + ld.d0_bar * xb) ** 2)
            for i in (1, 2):
                J[i] += reach * gdt * np.sum(0.5 * subgames[k].kappa[i - 1] * X ** 2)
        w = reach * (1 - gdt) * dt
        for j in range(3):
            J[j] += w * np.sum(-0.5 * (p[j] * X ** 2 + pb[j] * xb ** 2 + q[j] * v[j][sl] ** 2))
        drift = st.a * X + st.a_bar * xb + sum(b[j] * v[j][sl] for j in range(3))
        vol = st.c * X + st.c_bar * xb
        nxt = np.empty(2 ** (k + 1))
        nxt[0::2] = X + drift * dt + vol * sq
        nxt[1::2] = X + drift * dt - vol * sq
        X = nxt
    reach = tree.reach(n)
    J[0] += reach * np.sum(-0.5 * ld.r0_at(spec.T) * X ** 2)
    for i in (1, 2):
        J[i] += reach * np.sum(-0.5 * spec.r_T(i) * X ** 2)
    return float(J[0]), float(J[1]), float(J[2])


def mean_conventions(sol: TreeSolution) -> tuple[np.ndarray, np.ndarray]:
    """Pre-exit means per level: (survival-conditioned, literal E[X(t_j) | F_0]).

    The literal mean averages surviving and already-exited scenarios.
    """
    tree = sol.tree
    asm_states = _affine_states(tree.spec.stage1, [tree.spec.leader.b0, tree.spec.stage1.b1, tree.spec.stage1.b2],
                                tree.n_steps, tree.dt, tree.spec.x0, tree.n_nodes)
    u = np.r_[1.0, sol.u]
    surv_mean = np.array([float(C.mean(axis=0) @ u) for C in asm_states])
    s = tree.survival
    literal = np.empty_like(surv_mean)
    for j in range(tree.n_steps + 1):
        acc = s[j] * surv_mean[j]
        for k in range(j):
            acc += s[k] * tree.gamma_dt[k] * sol.subgames[k].mean[j - k] * surv_mean[k]
        literal[j] = acc
    return surv_mean, literal


# ---------------------------------------------------------------- comparison with the continuous pipeline

@dataclass(frozen=True)
class ComparisonRow:
    n_steps: int
    tree_root: tuple[float, float, float]
    cont_root: tuple[float, float, float]
    J_tree: tuple[float, float, float]
    J_cont: tuple[float, float, float]

    @property
    def control_gaps(self) -> tuple[float, float, float]:
        return tuple(abs(a - b) for a, b in zip(self.tree_root, self.cont_root))

    @property
    def J_gaps(self) -> tuple[float, float, float]:
        return tuple(abs(a - b) for a, b in zip(self.J_tree, self.J_cont))


def compare(cont_root, cont_J, spec: GameSpec, steps=(2, 4, 8)) -> list[ComparisonRow]:
    rows = []
    for n in steps:
        sol = solve_tree(spec, n)
        rows.append(ComparisonRow(n, sol.root, tuple(cont_root), sol.J, tuple(cont_J)))
    return rows


def follower_roots_without_leader(spec: GameSpec, n_steps: int) -> tuple[float, float]:
    """Followers' root controls on the tree when the leader plays zero everywhere."""
    tree = build_tree(spec, n_steps)
    v1, v2 = solve_followers_nash(tree, np.zeros(tree.n_nodes))
    return float(v1[0]), float(v2[0])


def error_ratios(errors) -> list[float]:
    e = list(errors)
    return [e[j + 1] / e[j] if e[j] > 0 else float("nan") for j in range(len(e) - 1)]


def report_csv(rows: list[ComparisonRow]) -> str:
    buf = io.StringIO()
    cols = ["n_steps", "v0_root_tree", "v0_root_cont", "v1_root_tree", "v1_root_cont", "v2_root_tree",
            "v2_root_cont", "J0_tree", "J0_cont", "J1_tree", "J1_cont", "J2_tree", "J2_cont",
            "gap_v0", "gap_v1", "gap_v2", "gap_J0", "gap_J1", "gap_J2"]
    buf.write(",".join(cols) + "\n")
    for r in rows:
        vals = [r.n_steps]
        for j in range(3):
            vals += [r.tree_root[j], r.cont_root[j]]
        for j in range(3):
            vals += [r.J_tree[j], r.J_cont[j]]
        vals += [*r.control_gaps, *r.J_gaps]
        buf.write(",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in vals) + "\n")
    return buf.getvalue()
