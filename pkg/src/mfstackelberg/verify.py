"""Verification suite: closed forms, invariants, oracle adjudication, perturbation and martingale tests."""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass

import numpy as np

from . import oracle
from .leader import reference_riccati, riccati_residual
from .model import GameSpec, IntensitySpec, validate_spec
from .numerics import quadrature
from .pipeline import Equilibrium, solve_equilibrium
from .simulate import (alpha_response, follower_variant, leader_variant, martingale_residual, piecewise_direction,
                       sim_coefficients, simulate_paths, survival_frequencies)
from .stage1 import solve_psi_pinned
from .stage2 import phi_residual, phi_zero_check, solve_moments

CLOSED_FORM, INVARIANT, PERTURBATION, REDUCTION, ORACLE, MARTINGALE = (
    "closed-form", "invariant", "perturbation", "reduction", "oracle", "martingale")
SE_FLOOR = 1e-10  # deterministic scenarios have zero sampling error; leaves room for roundoff
PLAYERS = {"leader": 0, "f1": 1, "f2": 2}


@dataclass(frozen=True)
class VerificationOutcome:
    check_id: str
    category: str
    passed: bool
    measured: float
    threshold: float
    runtime: float = 0.0
    skipped: bool = False
    detail: str = ""

    @property
    def status(self) -> str:
        return "skipped" if self.skipped else ("pass" if self.passed else "fail")


@dataclass(frozen=True)
class Budget:
    grid_n: int = 2000
    paths: int = 100_000
    sim_steps: int = 128  # the perturbation tests also run at twice this and extrapolate
    tree_steps: tuple[int, ...] = (2, 4, 8)
    directions: int = 20
    eps: float = 1e-2
    seed: int = 20_231
    negative_paths: int = 20_000
    negative_directions: int = 4


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# ---------------------------------------------------------------- perturbation tests

@dataclass(frozen=True)
class PerturbationDetail:
    dJ: np.ndarray  # extrapolated J(v* + eps eta) - J(v*) per direction
    dJ_se: np.ndarray
    deriv: np.ndarray  # extrapolated symmetric derivative per direction
    deriv_se: np.ndarray


def _mean_se(x):
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


def perturbation_estimates(eq: Equilibrium, player: int, n_directions: int, eps: float, n_paths: int, seed: int,
                           n_steps: int = 128, scale=(1.0, 1.0, 1.0)) -> PerturbationDetail:
    """Paired Monte Carlo estimates of objective changes under deterministic deviations.

    Runs at ``n_steps`` and ``2 n_steps`` share noise and default times, and
    every per-path quantity is combined as 2 fine - coarse, which removes the
    first-order Euler bias.
    """
    rng = np.random.default_rng([seed, player, 7])
    dirs = [piecewise_direction(rng, eq.spec.T) for _ in range(n_directions)]
    responses = [alpha_response(eq, eta) for eta in dirs] if player == 0 else [None] * n_directions

    def run(n, coarsen):
        co = sim_coefficients(eq, n)
        vs = []
        for eta, resp in zip(dirs, responses):
            for e in (eps, -eps):
                vs.append(leader_variant(eq, co, eta, e, resp) if player == 0
                          else follower_variant(player, eta, e, n))
        b = simulate_paths(eq, n_paths, n, seed, vs, scale=scale, coefficients=co, coarsen=coarsen)
        return b.J[:, :, player]

    fine = run(2 * n_steps, 1)
    coarse = run(n_steps, 2)
    J = 2 * fine - coarse
    dJ, dJ_se, der, der_se = (np.empty(n_directions) for _ in range(4))
    for d in range(n_directions):
        dJ[d], dJ_se[d] = _mean_se(J[:, 1 + 2 * d] - J[:, 0])
        der[d], der_se[d] = _mean_se((J[:, 1 + 2 * d] - J[:, 2 + 2 * d]) / (2 * eps)) if eps else (0.0, 0.0)
    return PerturbationDetail(dJ, dJ_se, der, der_se)


def perturbation_test(eq: Equilibrium, player: str, n_directions: int = 20, eps: float = 1e-2,
                      n_paths: int = 100_000, seed: int = 0, n_steps: int = 128, scale=(1.0, 1.0, 1.0),
                      check_id: str | None = None) -> VerificationOutcome:
    """Passes iff every dJ <= 3 SE and every symmetric derivative is within 3 SE of 0.

    ``measured`` is the worst standardized statistic over all directions.
    """
    p = PLAYERS[player]
    t0 = time.perf_counter()
    det = perturbation_estimates(eq, p, n_directions, eps, n_paths, seed, n_steps, scale)
    z_up = det.dJ / np.maximum(det.dJ_se, SE_FLOOR)
    z_der = np.abs(det.deriv) / np.maximum(det.deriv_se, SE_FLOOR)
    worst = float(max(z_up.max(), z_der.max()))
    return VerificationOutcome(check_id or f"perturbation.{player}", PERTURBATION, worst <= 3.0, worst, 3.0,
                               time.perf_counter() - t0,
                               detail=f"max dJ/SE={z_up.max():.2f}, max |deriv|/SE={z_der.max():.2f}")


def negative_control(eq: Equilibrium, player: str, budget: Budget) -> VerificationOutcome:
    """Flip the sign of one player's equilibrium gain; the perturbation test must then fail (dJ > 5 SE)."""
    p = PLAYERS[player]
    scale = [1.0, 1.0, 1.0]
    scale[p] = -1.0
    t0 = time.perf_counter()
    det = perturbation_estimates(eq, p, budget.negative_directions, budget.eps, budget.negative_paths,
                                 budget.seed + 1, budget.sim_steps, tuple(scale))
    z = float(np.max(det.dJ / np.maximum(det.dJ_se, SE_FLOOR)))
    return VerificationOutcome(f"negative_control.{player}", PERTURBATION, z > 5.0, z, 5.0,
                               time.perf_counter() - t0, detail="corrupted gain must be detected")


# ---------------------------------------------------------------- reduction

def reduction_test_gamma_zero(spec: GameSpec, grid_n: int = 2000) -> VerificationOutcome:
    """Without exit the jump Riccati, the compensated stage-1 system and kappa reduce to no-default forms."""
    t0 = time.perf_counter()
    if not spec.intensity.is_zero:
        return VerificationOutcome("reduction.gamma_zero", REDUCTION, True, float("nan"), 1e-8, skipped=True,
                                   detail="intensity is not identically zero")
    eq = solve_equilibrium(spec, grid_n)
    ref = reference_riccati(spec, eq.grid.nodes)
    gap_leader = float(np.max(np.abs(ref - eq.leader.table.values)))
    pinned = solve_psi_pinned(spec, eq.kappa, spec.T, eq.grid)
    gap_stage1 = float(np.max(np.abs(pinned.psi.values - eq.stage1.psi.values)))
    kT = eq.kappa.kappa.values[-1]
    gap_kappa = float(max(abs(kT[0] + spec.r1_T), abs(kT[1] + spec.r2_T)))
    ok = gap_leader <= 1e-8 and gap_stage1 <= 1e-10 and gap_kappa <= 1e-12
    return VerificationOutcome("reduction.gamma_zero", REDUCTION, ok, gap_leader, 1e-8,
                               time.perf_counter() - t0,
                               detail=f"leader {gap_leader:.2e}, stage1 {gap_stage1:.2e}, kappa(T) {gap_kappa:.2e}")


def no_default_variant(spec: GameSpec) -> GameSpec:
    return spec.with_intensity(IntensitySpec.constant(0.0)).with_leader(d0=0.0, d0_bar=0.0)


# ---------------------------------------------------------------- oracle

def root_control_errors(spec: GameSpec, eq: Equilibrium, steps) -> list[tuple[float, float, float]]:
    cont = eq.leader.root_controls()
    out = []
    for n in steps:
        sol = oracle.solve_tree(spec, n)
        out.append(tuple(abs(a - b) for a, b in zip(sol.root, cont)))
    return out


def oracle_convergence(spec: GameSpec, eq: Equilibrium, steps=(2, 4, 8), max_ratio: float = 0.6,
                       exact_tol: float = 1e-10) -> VerificationOutcome:
    """Root controls of all three players approach the tree oracle's, ratio <= max_ratio per doubling."""
    t0 = time.perf_counter()
    errs = np.array(root_control_errors(spec, eq, steps))
    worst = 0.0
    for j in range(3):
        e = errs[:, j]
        if np.all(e <= exact_tol):
            continue  # the discretization is exact for this player
        worst = max(worst, max(e[k + 1] / e[k] if e[k] > 0 else math.inf for k in range(len(e) - 1)))
    return VerificationOutcome("oracle.convergence", ORACLE, worst <= max_ratio, worst, max_ratio,
                               time.perf_counter() - t0, detail="errors " + "; ".join(
                                   f"n={n}: " + ",".join(f"{x:.3e}" for x in row) for n, row in zip(steps, errs)))


def mode_gaps(spec: GameSpec, eq: Equilibrium, n_steps: int = 8) -> tuple[float, float]:
    """Follower root-control gaps to the oracle (leader idle) for the compensated and pinned modes.

    The pinned family is pinned at the expected exit time.
    """
    st = spec.stage1
    tree = oracle.follower_roots_without_leader(spec, n_steps)
    S = quadrature_survival(spec, eq)
    pinned = solve_psi_pinned(spec, eq.kappa, S, eq.grid)

    def roots(sol):
        f = sol.psi(0.0)
        return (st.b1 / st.q1 * (f[0] + f[2]) * spec.x0, st.b2 / st.q2 * (f[1] + f[3]) * spec.x0)

    comp = max(abs(a - b) for a, b in zip(roots(eq.stage1), tree))
    pin = max(abs(a - b) for a, b in zip(roots(pinned), tree))
    return comp, pin


def quadrature_survival(spec: GameSpec, eq: Equilibrium) -> float:
    from .model import survival_function
    return quadrature(survival_function(spec.intensity, eq.grid), 0.0, spec.T)


def stage1_adjudication(spec: GameSpec, eq: Equilibrium, n_steps: int = 8) -> VerificationOutcome:
    t0 = time.perf_counter()
    if spec.intensity.is_zero:
        return VerificationOutcome("oracle.stage1_modes", ORACLE, True, float("nan"), 0.0, skipped=True,
                                   detail="modes coincide without exit")
    comp, pin = mode_gaps(spec, eq, n_steps)
    return VerificationOutcome("oracle.stage1_modes", ORACLE, comp < pin, comp - pin, 0.0,
                               time.perf_counter() - t0, detail=f"compensated {comp:.4e} vs pinned {pin:.4e}")


# ---------------------------------------------------------------- stage-2 checks

def sign_violations(spec: GameSpec, s2, kap, tau_stride: int = 50) -> list[str]:
    """phi_i1 < 0, kappa_i1 < 0, and M_bar > 0 with m2 >= M_bar^2 for exit times on every ``tau_stride``-th node."""
    out = []
    if not np.all(s2.phi.values[:, :2] < 0):
        out.append("phi_i1 >= 0")
    if not np.all(kap.kappa.values < 0):
        out.append("kappa_i1 >= 0")
    for tau in s2.grid.nodes[:-1:tau_stride]:
        m = solve_moments(spec, s2, float(tau))
        mb, m2 = m.m_bar.values[:, 0], m.m2.values[:, 0]
        if not np.all(mb > 0):
            out.append(f"M_bar <= 0 from tau={tau:.3f}")
            break
        if not np.all(m2 >= mb ** 2 * (1 - 1e-12)):
            out.append(f"Jensen fails from tau={tau:.3f}")
            break
    return out


def stage2_invariants(spec: GameSpec, eq: Equilibrium, tau_stride: int = 50,
                      residual_tol: float = 1e-6) -> VerificationOutcome:
    """Signs, additivity, residual, and Jensen on a subset of exit times."""
    t0 = time.perf_counter()
    s2 = eq.stage2
    phi = s2.phi.values
    problems = sign_violations(spec, s2, eq.kappa, tau_stride)
    add = max(np.max(np.abs(phi[:, 0] + phi[:, 1] - s2.phi_sum1.values[:, 0])),
              np.max(np.abs(phi[:, 2] + phi[:, 3] - s2.phi_sum2.values[:, 0])))
    if add > 1e-8:
        problems.append(f"additivity {add:.2e}")
    res = phi_residual(spec, s2)
    if res > residual_tol:
        problems.append(f"residual {res:.2e}")
    return VerificationOutcome("stage2.invariants", INVARIANT, not problems, float(res), residual_tol,
                               time.perf_counter() - t0, detail="; ".join(problems) or "ok")


def kappa_monte_carlo(spec: GameSpec, eq: Equilibrium, n_paths: int, seed: int, n_steps: int = 256) -> VerificationOutcome:
    """kappa_{i,1}(0) from simulated paths of the stage-2 fundamental solution (coupled Richardson pair)."""
    t0 = time.perf_counter()
    st = spec.stage2
    l = st.l
    rng = np.random.default_rng([seed, 99])
    fine = 2 * n_steps
    dW = rng.standard_normal((n_paths, fine)) * math.sqrt(spec.T / fine)

    def integral(n, incr):
        h = spec.T / n
        t = np.arange(n + 1) * h
        ph = np.array([eq.stage2.phi(x) for x in t])
        M = np.ones(n_paths)
        mbar = 1.0
        acc1 = np.zeros(n_paths)

        def f(k, M, mbar):
            f11, f21, f12, f22 = ph[k]
            return l * (f11 * f21 * M * M + (f11 * f22 + f12 * f21 + f12 * f22) * mbar * mbar)

        prev = f(0, M, mbar)
        for k in range(n):
            f11, f21, f12, f22 = ph[k]
            alpha = st.a + l * (f11 + f21)
            beta = st.a_bar + l * (f12 + f22)
            M = M + (alpha * M + beta * mbar) * h + (st.c * M + st.c_bar * mbar) * incr[:, k]
            mbar = mbar + (alpha + beta) * mbar * h
            cur = f(k + 1, M, mbar)
            acc1 += 0.5 * h * (prev + cur)
            prev = cur
        return acc1

    coarse_incr = dW.reshape(n_paths, n_steps, 2).sum(axis=2)
    est = 2 * integral(fine, dW) - integral(n_steps, coarse_incr)
    m, se = _mean_se(est)
    exact = float(kap_integral(eq))
    z = abs(m - exact) / max(se, SE_FLOOR)
    return VerificationOutcome("stage2.kappa_mc", INVARIANT, z <= 3.0, z, 3.0, time.perf_counter() - t0,
                               detail=f"moment form {exact:.6f}, MC {m:.6f} +- {se:.1e}")


def kap_integral(eq: Equilibrium) -> float:
    """The integral part of kappa_{i,1}(0) (common to both followers)."""
    phi0 = eq.stage2.phi.values[0]
    return float(eq.kappa.kappa.values[0, 0] - phi0[0] - phi0[2])


# ---------------------------------------------------------------- martingale

def martingale_test(spec: GameSpec, eq: Equilibrium, n_paths: int, seed: int, n_steps: int = 128) -> VerificationOutcome:
    t0 = time.perf_counter()
    b = simulate_paths(eq, n_paths, n_steps, seed)
    mean, se = martingale_residual(b)
    zA = np.where(se > 0, np.abs(mean) / np.maximum(se, 1e-300), np.where(mean == 0, 0.0, np.inf))
    emp, emp_se, exact = survival_frequencies(b)
    zS = np.where(emp_se > 0, np.abs(emp - exact) / np.maximum(emp_se, 1e-300), np.where(emp == exact, 0.0, np.inf))
    ok = bool(np.all(zA <= 3.5) and np.all(zS <= 3.0))
    return VerificationOutcome("martingale", MARTINGALE, ok, float(zA.max()), 3.5, time.perf_counter() - t0,
                               detail=f"max |A|/SE={zA.max():.2f}, max survival z={zS.max():.2f}")


# ---------------------------------------------------------------- suite

def run_suite(spec: GameSpec, budget: Budget = Budget(), negative_controls: bool = True) -> list[VerificationOutcome]:
    out: list[VerificationOutcome] = []
    rep, dt = _timed(lambda: validate_spec(spec))
    out.append(VerificationOutcome("model.validation", INVARIANT, rep.ok, float(len(rep.violations)), 0.0, dt,
                                   detail=str(rep)))
    if not rep.ok:
        return out

    eq, dt = _timed(lambda: solve_equilibrium(spec, budget.grid_n))
    kT = eq.kappa.kappa.values[-1]
    gap = float(max(abs(kT[0] + spec.r1_T), abs(kT[1] + spec.r2_T)))
    out.append(VerificationOutcome("closed_form.kappa_T", CLOSED_FORM, gap <= 1e-12, gap, 1e-12, dt))
    z = phi_zero_check(spec, eq.grid)
    out.append(VerificationOutcome("closed_form.zero_bsde", CLOSED_FORM, z == 0.0, z, 0.0))
    out.append(stage2_invariants(spec, eq))
    out.append(kappa_monte_carlo(spec, eq, budget.paths, budget.seed))
    out.append(oracle_convergence(spec, eq, budget.tree_steps))
    out.append(stage1_adjudication(spec, eq, max(budget.tree_steps)))
    res = float(riccati_residual(eq.leader).values.max())
    out.append(VerificationOutcome("leader.residual", INVARIANT, res <= 1e-6, res, 1e-6))
    out.append(reduction_test_gamma_zero(no_default_variant(spec), budget.grid_n))
    for name in PLAYERS:
        out.append(perturbation_test(eq, name, budget.directions, budget.eps, budget.paths, budget.seed,
                                     budget.sim_steps))
    if negative_controls:
        for name in PLAYERS:
            out.append(negative_control(eq, name, budget))
    mspec = spec if not spec.intensity.is_zero else spec.with_intensity(IntensitySpec.constant(0.5))
    meq = eq if mspec is spec else solve_equilibrium(mspec, budget.grid_n)
    out.append(martingale_test(mspec, meq, budget.paths, budget.seed))
    return out


def report_csv(outcomes: list[VerificationOutcome]) -> str:
    buf = io.StringIO()
    buf.write("check_id,category,status,measured,threshold,detail\n")
    for o in outcomes:
        detail = o.detail.replace('"', "'")
        buf.write(f'{o.check_id},{o.category},{o.status},{o.measured!r},{o.threshold!r},"{detail}"\n')
    return buf.getvalue()


def summary(outcomes: list[VerificationOutcome]) -> str:
    lines = [f"{o.status:7s} {o.check_id:28s} measured={o.measured:.4g} threshold={o.threshold:.4g} "
             f"({o.runtime:.1f}s) {o.detail}" for o in outcomes]
    return "\n".join(lines)


def suite_passed(outcomes: list[VerificationOutcome]) -> bool:
    return all(o.passed or o.skipped for o in outcomes)
