"""Monte Carlo engine for equilibrium and perturbed paths.

Every path carries a base variant (the equilibrium, or a corrupted version of
it for negative controls) and any number of perturbed variants driven by the
same Brownian increments and default time. A perturbed variant either replays
the base path's recorded controls plus a deterministic offset, or (leader
deviations) lets the followers react in feedback form with the base path's
recorded alpha plus a deterministic correction.

Pre-exit means are deterministic; they follow the Euler recursion of the mean
state so they match the discretized process exactly. After an exit the
conditional mean solves the stage-2 mean equation from the path's own state.
"""

from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .model import GameSpec, IntensitySpec, check_aligned
from .numerics import FunctionTable, TimeGrid, integrate_ode
from .pipeline import Equilibrium

BLOCK = 4096
BASE, REPLAY, LEADER_DEVIATION = 0, 1, 2


def _stream(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, block])))


def sample_default_time(intensity: IntensitySpec, rng: np.random.Generator, size: int | None = None):
    """tau0 = inf{t : Gamma(t) >= E} with E standard exponential; +inf if never reached."""
    e = rng.standard_exponential(size)
    out = intensity.inverse_cumulative(np.atleast_1d(e))
    return float(out[0]) if size is None else out


def _block_draws(spec: GameSpec, seed: int, block: int, n_paths: int, n_steps: int, coarsen: int = 1):
    """Default times and increments; with ``coarsen > 1`` increments are drawn on a
    grid that many times finer and summed, so runs at different resolutions couple."""
    rng = _stream(seed, block)
    tau0 = sample_default_time(spec.intensity, rng, n_paths)
    fine = n_steps * coarsen
    dW = rng.standard_normal((n_paths, fine)) * np.sqrt(spec.T / fine)
    if coarsen > 1:
        dW = dW.reshape(n_paths, n_steps, coarsen).sum(axis=2)
    return tau0, dW


def jump_nodes(tau0: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Index of the first node >= tau0, or -1 when tau0 > T (no exit before the end)."""
    x = (np.minimum(tau0, grid.t1) - grid.t0) / grid.h
    k = np.ceil(x - 1e-9).astype(np.int64)
    k = np.clip(k, 0, grid.n)
    return np.where(tau0 <= grid.t1, k, -1)


# ---------------------------------------------------------------- coefficients on the simulation grid

@dataclass(frozen=True)
class SimCoefficients:
    grid: TimeGrid
    st1: np.ndarray  # a, a_bar, c, c_bar, b1, b2, q1, q2, p1, p_bar1, p2, p_bar2
    st2: np.ndarray
    ld: np.ndarray  # b0, q0, p0, p_bar0, d0, d0_bar
    rT: np.ndarray  # r1, r2
    l1: float
    psi: np.ndarray  # (n+1, 4)
    G: np.ndarray  # (n+1, 3, 3)
    H: np.ndarray  # (n+1, 3, 3)
    phi: np.ndarray  # (n+1, 4)
    r0: np.ndarray  # (n+1,)
    r0_T: float


def _stage_vec(st) -> np.ndarray:
    return np.array([st.a, st.a_bar, st.c, st.c_bar, st.b1, st.b2, st.q1, st.q2,
                     st.p1, st.p_bar1, st.p2, st.p_bar2])


def sim_coefficients(eq: Equilibrium, n_steps: int) -> SimCoefficients:
    spec = eq.spec
    if eq.leader is None:
        raise ValueError("simulation needs the leader solution")
    check_aligned(spec, n_steps)
    g = spec.grid(n_steps)
    t = g.nodes
    ld = spec.leader
    return SimCoefficients(
        grid=g,
        st1=_stage_vec(spec.stage1), st2=_stage_vec(spec.stage2),
        ld=np.array([ld.b0, ld.q0, ld.p0, ld.p_bar0, ld.d0, ld.d0_bar]),
        rT=np.array([spec.r1_T, spec.r2_T]),
        l1=spec.stage1.l,
        psi=np.array([eq.stage1.psi(x) for x in t]),
        G=np.array([eq.leader.G(x) for x in t]),
        H=np.array([eq.leader.G_hat(x) for x in t]),
        phi=np.array([eq.stage2.phi(x) for x in t]),
        r0=np.array([ld.r0_at(x) for x in t]),
        r0_T=ld.r0_at(spec.T),
    )


@numba.njit(cache=True)
def _base_controls(k, X, Z1, Z2, Xb, Z1b, Z2b, st1, ld, psi, G, H, scale):
    """Equilibrium pre-exit controls and alpha for state (X, Z) and mean (Xb, Zb)."""
    y0, y1, y2 = X - Xb, Z1 - Z1b, Z2 - Z2b
    P = G[k, 0, 0] * y0 + G[k, 0, 1] * y1 + G[k, 0, 2] * y2 + H[k, 0, 0] * Xb + H[k, 0, 1] * Z1b + H[k, 0, 2] * Z2b
    a1 = G[k, 1, 0] * y0 + G[k, 1, 1] * y1 + G[k, 1, 2] * y2 + H[k, 1, 0] * Xb + H[k, 1, 1] * Z1b + H[k, 1, 2] * Z2b
    a2 = G[k, 2, 0] * y0 + G[k, 2, 1] * y1 + G[k, 2, 2] * y2 + H[k, 2, 0] * Xb + H[k, 2, 1] * Z1b + H[k, 2, 2] * Z2b
    b0, q0 = ld[0], ld[1]
    f11, f21, f12, f22 = psi[k, 0], psi[k, 1], psi[k, 2], psi[k, 3]
    v0 = scale[0] * (b0 * P + b0 * (f11 * Z1 + f21 * Z2) + b0 * (f12 * Z1b + f22 * Z2b)) / q0
    v1 = scale[1] * st1[4] / st1[6] * (f11 * X + f12 * Xb + a1)
    v2 = scale[2] * st1[5] / st1[7] * (f21 * X + f22 * Xb + a2)
    return v0, v1, v2, P, a1, a2


@numba.njit(cache=True)
def _z_drift(k, Z1, Z2, Z1b, Z2b, P, st1, psi, l1):
    a, ab = st1[0], st1[1]
    f11, f21, f12, f22 = psi[k, 0], psi[k, 1], psi[k, 2], psi[k, 3]
    # mu^T Z + nu^T Zb + l P (1, 1)
    d1 = (a + l1 * f11) * Z1 + l1 * f21 * Z2 + (ab + l1 * f12) * Z1b + l1 * f22 * Z2b + l1 * P
    d2 = l1 * f11 * Z1 + (a + l1 * f21) * Z2 + l1 * f12 * Z1b + (ab + l1 * f22) * Z2b + l1 * P
    return d1, d2


@numba.njit(cache=True, nogil=True)
def _kernel(dW, jn, dt, st1, st2, ld, rT, l1, psi, G, H, phi, r0, r0_T, mb, xbar_v, mode, off, scale,
            n_record, rec, sumX):
    n_paths, n = dW.shape
    V = mode.shape[0]
    J = np.zeros((n_paths, V, 3))
    X = np.empty(V)
    m2 = np.empty(V)
    v = np.empty((V, 3))
    for pth in range(n_paths):
        j_exit = jn[pth]
        for q in range(V):
            X[q] = mb[0, 0]
        Z1 = 0.0
        Z2 = 0.0
        for k in range(n + 1):
            pre = j_exit < 0 or k < j_exit
            if k == j_exit:
                for q in range(V):
                    Yj = (1.0 + ld[4]) * X[q] + ld[5] * xbar_v[q, k]
                    J[pth, q, 0] -= 0.5 * r0[k] * Yj * Yj
                    m2[q] = X[q]
            sumX[k] += X[0]
            if k == n:
                break
            dw = dW[pth, k]
            if pre:
                v0, v1, v2, P, a1, a2 = _base_controls(k, X[0], Z1, Z2, mb[k, 0], mb[k, 1], mb[k, 2],
                                                       st1, ld, psi, G, H, scale)
                alpha1 = a1
                alpha2 = a2
                for q in range(V):
                    if mode[q] == 0:
                        v[q, 0], v[q, 1], v[q, 2] = v0, v1, v2
                    elif mode[q] == 1:
                        v[q, 0] = v0 + off[q, k, 0]
                        v[q, 1] = v1 + off[q, k, 1]
                        v[q, 2] = v2 + off[q, k, 2]
                    else:
                        xb = xbar_v[q, k]
                        v[q, 0] = v0 + off[q, k, 0]
                        v[q, 1] = scale[1] * st1[4] / st1[6] * (psi[k, 0] * X[q] + psi[k, 2] * xb + alpha1) + off[q, k, 1]
                        v[q, 2] = scale[2] * st1[5] / st1[7] * (psi[k, 1] * X[q] + psi[k, 3] * xb + alpha2) + off[q, k, 2]
                if pth < n_record:
                    rec[pth, k, 0] = v0
                    rec[pth, k, 1] = v1
                    rec[pth, k, 2] = v2
                d1, d2 = _z_drift(k, Z1, Z2, mb[k, 1], mb[k, 2], P, st1, psi, l1)
                Z1n = Z1 + d1 * dt + (st1[2] * Z1 + st1[3] * mb[k, 1]) * dw
                Z2n = Z2 + d2 * dt + (st1[2] * Z2 + st1[3] * mb[k, 2]) * dw
                a, ab, c, cb = st1[0], st1[1], st1[2], st1[3]
                for q in range(V):
                    xb0 = xbar_v[q, k]
                    xb1 = xbar_v[q, k + 1]
                    x0 = X[q]
                    x1 = x0 + (a * x0 + ab * xb0 + ld[0] * v[q, 0] + st1[4] * v[q, 1] + st1[5] * v[q, 2]) * dt \
                        + (c * x0 + cb * xb0) * dw
                    s0 = x0 * x0
                    s1 = x1 * x1
                    m0 = xb0 * xb0
                    mm1 = xb1 * xb1
                    J[pth, q, 0] -= 0.5 * (0.5 * dt * (ld[2] * (s0 + s1) + ld[3] * (m0 + mm1)) + ld[1] * v[q, 0] ** 2 * dt)
                    J[pth, q, 1] -= 0.5 * (0.5 * dt * (st1[8] * (s0 + s1) + st1[9] * (m0 + mm1)) + st1[6] * v[q, 1] ** 2 * dt)
                    J[pth, q, 2] -= 0.5 * (0.5 * dt * (st1[10] * (s0 + s1) + st1[11] * (m0 + mm1)) + st1[7] * v[q, 2] ** 2 * dt)
                    X[q] = x1
                Z1 = Z1n
                Z2 = Z2n
            else:
                a, ab, c, cb = st2[0], st2[1], st2[2], st2[3]
                l2 = st2[4] * st2[4] / st2[6]
                rho = a + ab + l2 * (phi[k, 0] + phi[k, 1] + phi[k, 2] + phi[k, 3])
                for q in range(V):
                    x0 = X[q]
                    mq = m2[q]
                    u1 = st2[4] / st2[6] * (phi[k, 0] * x0 + phi[k, 2] * mq)
                    u2 = st2[5] / st2[7] * (phi[k, 1] * x0 + phi[k, 3] * mq)
                    if q == 0 and pth < n_record:
                        rec[pth, k, 0] = 0.0
                        rec[pth, k, 1] = u1
                        rec[pth, k, 2] = u2
                    x1 = x0 + (a * x0 + ab * mq + st2[4] * u1 + st2[5] * u2) * dt + (c * x0 + cb * mq) * dw
                    mn = mq + rho * mq * dt
                    s0 = x0 * x0
                    s1 = x1 * x1
                    J[pth, q, 1] -= 0.5 * (0.5 * dt * (st2[8] * (s0 + s1) + st2[9] * (mq * mq + mn * mn)) + st2[6] * u1 * u1 * dt)
                    J[pth, q, 2] -= 0.5 * (0.5 * dt * (st2[10] * (s0 + s1) + st2[11] * (mq * mq + mn * mn)) + st2[7] * u2 * u2 * dt)
                    X[q] = x1
                    m2[q] = mn
            if pth < n_record:
                rec[pth, k + 1, 3] = X[0]
        for q in range(V):
            J[pth, q, 1] -= 0.5 * rT[0] * X[q] * X[q]
            J[pth, q, 2] -= 0.5 * rT[1] * X[q] * X[q]
            if j_exit < 0:
                J[pth, q, 0] -= 0.5 * r0_T * X[q] * X[q]
    return J


# ---------------------------------------------------------------- deterministic means

def base_mean(co: SimCoefficients, x0: float, scale=(1.0, 1.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """Euler recursion of the pre-exit mean of (X, Z1, Z2), plus the mean controls per step."""
    n, dt = co.grid.n, co.grid.h
    sc = np.asarray(scale, dtype=float)
    mb = np.zeros((n + 1, 3))
    vbar = np.zeros((n, 3))
    mb[0, 0] = x0
    for k in range(n):
        Xb, Z1b, Z2b = mb[k]
        v0, v1, v2, P, _, _ = _base_controls(k, Xb, Z1b, Z2b, Xb, Z1b, Z2b, co.st1, co.ld, co.psi, co.G, co.H, sc)
        d1, d2 = _z_drift(k, Z1b, Z2b, Z1b, Z2b, P, co.st1, co.psi, co.l1)
        a, ab = co.st1[0], co.st1[1]
        xd = (a + ab) * Xb + co.ld[0] * v0 + co.st1[4] * v1 + co.st1[5] * v2
        mb[k + 1] = mb[k] + dt * np.array([xd, d1, d2])
        vbar[k] = (v0, v1, v2)
    return mb, vbar


def variant_mean(co: SimCoefficients, mb: np.ndarray, vbar: np.ndarray, mode: int, off: np.ndarray,
                 scale=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Pre-exit mean of X for a variant, mirroring the kernel's control rules."""
    if mode == BASE or not np.any(off):
        return mb[:, 0].copy()  # a zero offset replays the base path bit for bit
    n, dt = co.grid.n, co.grid.h
    a, ab = co.st1[0], co.st1[1]
    b = np.array([co.ld[0], co.st1[4], co.st1[5]])
    out = np.empty(n + 1)
    out[0] = mb[0, 0]
    for k in range(n):
        x = out[k]
        if mode == REPLAY:
            u = vbar[k] + off[k]
        else:
            _, _, _, _, a1, a2 = _base_controls(k, mb[k, 0], mb[k, 1], mb[k, 2], mb[k, 0], mb[k, 1], mb[k, 2],
                                                co.st1, co.ld, co.psi, co.G, co.H, np.asarray(scale, float))
            f = co.psi[k]
            u = np.array([
                vbar[k, 0] + off[k, 0],
                scale[1] * co.st1[4] / co.st1[6] * ((f[0] + f[2]) * x + a1) + off[k, 1],
                scale[2] * co.st1[5] / co.st1[7] * ((f[1] + f[3]) * x + a2) + off[k, 2],
            ])
        out[k + 1] = x + dt * ((a + ab) * x + b @ u)
    return out


# ---------------------------------------------------------------- variants

@dataclass(frozen=True)
class Variant:
    mode: int
    offsets: np.ndarray  # (n_steps, 3) control offsets per step

    @staticmethod
    def base(n_steps: int) -> "Variant":
        return Variant(BASE, np.zeros((n_steps, 3)))


@dataclass(frozen=True)
class Direction:
    """Piecewise-constant function on [0, T] with equal-width pieces."""

    values: np.ndarray
    T: float

    def __call__(self, t: float) -> float:
        k = int(t / self.T * self.values.size)
        return float(self.values[min(max(k, 0), self.values.size - 1)])

    def on_steps(self, n_steps: int) -> np.ndarray:
        """Value on each step [t_k, t_k+1) of a uniform grid (pieces must align with it)."""
        pieces = self.values.size
        if n_steps % pieces:
            raise ValueError(f"{n_steps} steps do not align with {pieces} pieces")
        return np.repeat(self.values, n_steps // pieces)


def piecewise_direction(rng: np.random.Generator, T: float, pieces: int = 8) -> Direction:
    """Random piecewise-constant direction with unit sup norm."""
    vals = rng.uniform(-1.0, 1.0, pieces)
    return Direction(vals / np.max(np.abs(vals)), T)


def follower_variant(player: int, eta: Direction, eps: float, n_steps: int) -> Variant:
    e = eta.on_steps(n_steps)
    off = np.zeros((n_steps, 3))
    off[:, player] = eps * e
    return Variant(REPLAY, off)


def alpha_response(eq: Equilibrium, eta_fn) -> FunctionTable:
    """Deterministic alpha correction from a deterministic leader deviation eta(t).

    Solves a' = -((mu + nu - gamma I) a + (delta1 + delta1_bar) eta), a(T) = 0.
    """
    spec = eq.spec
    st = spec.stage1
    l = st.l
    b0 = spec.leader.b0
    psi = eq.stage1.psi
    rate = spec.intensity.rate

    def rhs(t, y):
        f11, f21, f12, f22 = psi(t)
        M = np.array([[st.a + st.a_bar + l * (f11 + f12), l * (f11 + f12)],
                      [l * (f21 + f22), st.a + st.a_bar + l * (f21 + f22)]]) - rate(t) * np.eye(2)
        drive = b0 * np.array([f11 + f12, f21 + f22]) * eta_fn(t)
        return -(M @ y + drive)

    return integrate_ode(rhs, [0.0, 0.0], eq.grid, "backward", "alpha response")


def leader_variant(eq: Equilibrium, co: SimCoefficients, eta: Direction, eps: float,
                   response: FunctionTable | None = None) -> Variant:
    resp = response if response is not None else alpha_response(eq, eta)
    st = eq.spec.stage1
    nodes = co.grid.nodes[:-1]
    a = np.array([resp(x) for x in nodes])
    off = np.column_stack([eps * eta.on_steps(co.grid.n), eps * st.b1 / st.q1 * a[:, 0], eps * st.b2 / st.q2 * a[:, 1]])
    return Variant(LEADER_DEVIATION, off)


# ---------------------------------------------------------------- runs

@dataclass
class PathBundle:
    spec: GameSpec
    grid: TimeGrid
    n_paths: int
    seed: int
    J: np.ndarray  # (n_paths, n_variants, 3)
    tau0: np.ndarray
    jump_node: np.ndarray
    m1: np.ndarray  # survival-conditioned pre-exit mean
    cross_mean: np.ndarray  # cross-path mean of X at each node (base variant)
    record: np.ndarray  # (n_record, n+1, 4): v0, v1, v2 per step and X per node


@dataclass(frozen=True)
class ObjectiveEstimate:
    J0: float
    J1: float
    J2: float
    se0: float
    se1: float
    se2: float
    n_paths: int

    @property
    def means(self) -> tuple[float, float, float]:
        return self.J0, self.J1, self.J2

    @property
    def ses(self) -> tuple[float, float, float]:
        return self.se0, self.se1, self.se2


def simulate_paths(eq: Equilibrium, n_paths: int, n_steps: int, seed: int,
                   variants: list[Variant] | None = None, scale=(1.0, 1.0, 1.0),
                   n_record: int = 0, workers: int = 1, coefficients: SimCoefficients | None = None,
                   coarsen: int = 1) -> PathBundle:
    """Euler-Maruyama paths; variant 0 is always the (possibly corrupted) equilibrium.

    ``coarsen`` draws the noise on a grid ``coarsen`` times finer, which gives a
    run coupled path by path with a finer run of the same seed.
    """
    spec = eq.spec
    co = coefficients or sim_coefficients(eq, n_steps)
    g = co.grid
    sc = np.asarray(scale, dtype=float)
    mb, vbar = base_mean(co, spec.x0, sc)
    vs = [Variant.base(n_steps)] + list(variants or [])
    mode = np.array([v.mode for v in vs], dtype=np.int64)
    off = np.stack([v.offsets for v in vs])
    xbar_v = np.stack([variant_mean(co, mb, vbar, v.mode, v.offsets, sc) for v in vs])

    n_blocks = -(-n_paths // BLOCK)

    def run(b):
        size = min(BLOCK, n_paths - b * BLOCK)
        tau0, dW = _block_draws(spec, seed, b, size, n_steps, coarsen)
        jn = jump_nodes(tau0, g)
        nrec = max(0, min(size, n_record - b * BLOCK))
        rec = np.zeros((max(nrec, 1), n_steps + 1, 4))
        rec[:, 0, 3] = spec.x0
        sumX = np.zeros(n_steps + 1)
        J = _kernel(dW, jn, g.h, co.st1, co.st2, co.ld, co.rT, co.l1, co.psi, co.G, co.H, co.phi, co.r0,
                    co.r0_T, mb, xbar_v, mode, off, sc, nrec, rec, sumX)
        return J, tau0, jn, rec[:nrec], sumX

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, range(n_blocks)))
    else:
        parts = [run(b) for b in range(n_blocks)]
    J = np.concatenate([p[0] for p in parts])
    sumX = np.sum(np.stack([p[4] for p in parts]), axis=0)  # fixed block order
    return PathBundle(spec, g, n_paths, seed, J, np.concatenate([p[1] for p in parts]),
                      np.concatenate([p[2] for p in parts]), mb[:, 0].copy(), sumX / n_paths,
                      np.concatenate([p[3] for p in parts]) if n_record else np.zeros((0, n_steps + 1, 4)))


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = x.shape[0]
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(n)) if n > 1 else 0.0


def estimate_objectives(bundle: PathBundle, variant: int = 0) -> ObjectiveEstimate:
    stats = [_mean_se(bundle.J[:, variant, j]) for j in range(3)]
    return ObjectiveEstimate(stats[0][0], stats[1][0], stats[2][0], stats[0][1], stats[1][1], stats[2][1],
                             bundle.n_paths)


def difference_estimate(bundle: PathBundle, player: int, a: int, b: int = 0, scale: float = 1.0) -> tuple[float, float]:
    """Mean and SE of scale * (J_a - J_b) for one player, paired path by path."""
    return _mean_se(scale * (bundle.J[:, a, player] - bundle.J[:, b, player]))


def martingale_residual(bundle: PathBundle) -> tuple[np.ndarray, np.ndarray]:
    """Per-node mean and SE of A(t) = 1{tau0 <= t} - Gamma(t ^ tau0)."""
    t = bundle.grid.nodes
    intensity = bundle.spec.intensity
    tau0 = bundle.tau0
    means = np.empty(t.size)
    ses = np.empty(t.size)
    for k, tk in enumerate(t):
        A = (tau0 <= tk).astype(float) - intensity.cumulative(np.minimum(tk, tau0))
        means[k], ses[k] = _mean_se(A)
    return means, ses


def survival_frequencies(bundle: PathBundle) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Empirical P(tau0 > t) per node, its SE, and exp(-Gamma(t))."""
    t = bundle.grid.nodes
    n = bundle.tau0.size
    emp = np.array([np.mean(bundle.tau0 > tk) for tk in t])
    return emp, np.sqrt(emp * (1 - emp) / n), np.exp(-bundle.spec.intensity.cumulative(t))


def objectives_csv(est: ObjectiveEstimate, n_steps: int, seed: int) -> str:
    cols = ["J0", "se0", "J1", "se1", "J2", "se2", "n_paths", "n_steps", "seed"]
    vals = [est.J0, est.se0, est.J1, est.se1, est.J2, est.se2]
    return ",".join(cols) + "\n" + ",".join(repr(float(v)) for v in vals) + f",{est.n_paths},{n_steps},{seed}\n"


def paths_csv(bundle: PathBundle) -> str:
    """First recorded paths: t, path_id, X, Y, m1, v0, v1, v2, jumped."""
    buf = io.StringIO()
    buf.write("t,path_id,X,Y,m1,v0,v1,v2,jumped\n")
    t = bundle.grid.nodes
    n = bundle.grid.n
    d0, d0b = bundle.spec.leader.d0, bundle.spec.leader.d0_bar
    for pid, rec in enumerate(bundle.record):
        j = int(bundle.jump_node[pid])
        y_frozen = None
        for k in range(n + 1):
            X = rec[k, 3]
            jumped = j >= 0 and k >= j
            if j >= 0 and k == j:
                y_frozen = (1 + d0) * X + d0b * bundle.m1[k]
            Y = y_frozen if jumped else X
            vk = rec[min(k, n - 1), :3] if k < n else (np.nan, np.nan, np.nan)
            row = (t[k], pid, X, Y, bundle.m1[k], *vk, int(jumped))
            buf.write(",".join(str(x) if isinstance(x, (int, np.integer)) else repr(float(x)) for x in row) + "\n")
    return buf.getvalue()

