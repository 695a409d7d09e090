"""Game specification, standing-assumption checks and the scenario config format."""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from .numerics import FunctionTable, TimeGrid

RATIO_RTOL = 1e-12


class ConfigError(ValueError):
    """Malformed or incomplete configuration text."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class StageCoefficients:
    a: float
    a_bar: float
    c: float
    c_bar: float
    b1: float
    b2: float
    p1: float
    p_bar1: float
    q1: float
    p2: float
    p_bar2: float
    q2: float

    @property
    def l1(self) -> float:
        """b1^2/q1 (follower 1's effective control weight)."""
        return self.b1 ** 2 / self.q1

    @property
    def l2(self) -> float:
        return self.b2 ** 2 / self.q2

    @property
    def l(self) -> float:
        return self.l1

    def b(self, i: int) -> float:
        return self.b1 if i == 1 else self.b2

    def q(self, i: int) -> float:
        return self.q1 if i == 1 else self.q2

    def p(self, i: int) -> float:
        return self.p1 if i == 1 else self.p2

    def p_bar(self, i: int) -> float:
        return self.p_bar1 if i == 1 else self.p_bar2


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear function through ``(times, values)``, flat outside."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))


@dataclass(frozen=True)
class LeaderCoefficients:
    b0: float
    d0: float
    d0_bar: float
    p0: float
    p_bar0: float
    q0: float
    r0: float | PiecewiseLinear

    def r0_at(self, t: float) -> float:
        return float(self.r0(t)) if callable(self.r0) else float(self.r0)

    @property
    def r0_knots(self) -> tuple[float, ...]:
        return self.r0.times if isinstance(self.r0, PiecewiseLinear) else ()


@dataclass(frozen=True)
class IntensitySpec:
    """Deterministic default intensity: constant, or right-continuous piecewise constant.

    For ``kind == "piecewise"`` the rate equals ``values[j]`` on
    ``[breakpoints[j], breakpoints[j+1])``; ``breakpoints[0]`` must be 0.
    """

    kind: str = "constant"
    values: tuple[float, ...] = (0.0,)
    breakpoints: tuple[float, ...] = (0.0,)

    @classmethod
    def constant(cls, gamma: float) -> "IntensitySpec":
        return cls("constant", (float(gamma),), (0.0,))

    @classmethod
    def piecewise(cls, breakpoints: Sequence[float], values: Sequence[float]) -> "IntensitySpec":
        return cls("piecewise", tuple(float(v) for v in values), tuple(float(b) for b in breakpoints))

    def check(self, T: float | None = None) -> list[str]:
        problems = []
        if self.kind not in ("constant", "piecewise"):
            problems.append(f"unknown intensity kind {self.kind!r}")
        if len(self.values) != len(self.breakpoints) or not self.values:
            problems.append("intensity values and breakpoints differ in length")
        if any(not math.isfinite(v) or v < 0 for v in self.values):
            problems.append("intensity must be finite and non-negative")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            problems.append("breakpoints not sorted")
        if self.breakpoints and self.breakpoints[0] != 0.0:
            problems.append("first breakpoint must be 0")
        if T is not None and any(b < 0 or b > T for b in self.breakpoints):
            problems.append("breakpoints must lie in [0, T]")
        return problems

    def rate(self, t: float) -> float:
        j = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.values[max(j, 0)]

    def rates(self, t: np.ndarray) -> np.ndarray:
        j = np.searchsorted(self.breakpoints, t, side="right") - 1
        return np.asarray(self.values)[np.maximum(j, 0)]

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)

    @property
    def upper_bound(self) -> float:
        return max(self.values)

    def cumulative(self, t) -> np.ndarray | float:
        """Gamma(t) = integral of the rate from 0 to t (exact)."""
        b = np.asarray(self.breakpoints + (np.inf,))
        v = np.asarray(self.values)
        tt = np.asarray(t, dtype=float)
        lengths = np.clip(tt[..., None] - b[:-1], 0.0, np.diff(b))
        out = np.sum(lengths * v, axis=-1)
        return float(out) if np.ndim(t) == 0 else out

    def inverse_cumulative(self, e: np.ndarray) -> np.ndarray:
        """Smallest t with Gamma(t) >= e; +inf when the mass is never reached."""
        e = np.asarray(e, dtype=float)
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        width = np.diff(np.append(b, np.inf))
        seg = np.where(v > 0, width * np.where(v > 0, v, 1.0), 0.0)
        cum = np.concatenate(([0.0], np.cumsum(seg)))
        out = np.full(e.shape, np.inf)
        for j in range(len(b)):
            if v[j] <= 0:
                continue
            lo, hi = cum[j], cum[j + 1]
            hit = (e > lo) & (e <= hi) & np.isinf(out)
            out[hit] = b[j] + (e[hit] - lo) / v[j]
        out[e <= 0] = 0.0
        return out


@dataclass(frozen=True)
class GameSpec:
    T: float
    x0: float
    stage1: StageCoefficients
    stage2: StageCoefficients
    leader: LeaderCoefficients
    r1_T: float
    r2_T: float
    intensity: IntensitySpec = field(default_factory=IntensitySpec)

    def r_T(self, i: int) -> float:
        return self.r1_T if i == 1 else self.r2_T

    @property
    def breakpoints(self) -> tuple[float, ...]:
        pts = set(self.intensity.breakpoints) | set(self.leader.r0_knots)
        return tuple(sorted(p for p in pts if 0.0 < p < self.T))

    def grid(self, n: int) -> TimeGrid:
        return TimeGrid(0.0, self.T, n)

    def with_intensity(self, intensity: IntensitySpec) -> "GameSpec":
        return replace(self, intensity=intensity)

    def with_leader(self, **changes) -> "GameSpec":
        return replace(self, leader=replace(self.leader, **changes))


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[tuple[str, str], ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"({a}) {m}" for a, m in self.violations)


def validate_spec(spec: GameSpec) -> ValidationReport:
    """Check finiteness (A), positive weights (B), equal follower ratios b^2/q (C) and the intensity (E)."""
    v: list[tuple[str, str]] = []
    if not (math.isfinite(spec.T) and spec.T > 0):
        v.append(("A", "horizon T must be positive and finite"))
    for stage_name, st in (("stage1", spec.stage1), ("stage2", spec.stage2)):
        for f in fields(st):
            x = getattr(st, f.name)
            if not math.isfinite(x):
                v.append(("A", f"{stage_name}.{f.name} is not finite"))
        for name in ("p1", "p_bar1", "q1", "p2", "p_bar2", "q2"):
            x = getattr(st, name)
            if math.isfinite(x) and x <= 0:
                v.append(("B", f"{stage_name}.{name}={x} must be positive"))
        if st.q1 > 0 and st.q2 > 0:
            l1, l2 = st.l1, st.l2
            if abs(l1 - l2) > RATIO_RTOL * max(abs(l1), abs(l2), 1e-300):
                v.append(("C", f"{stage_name}: b1^2/q1={l1:.12g} differs from b2^2/q2={l2:.12g}"))
    ld = spec.leader
    for name in ("b0", "d0", "d0_bar"):
        if not math.isfinite(getattr(ld, name)):
            v.append(("A", f"leader.{name} is not finite"))
    for name in ("p0", "p_bar0", "q0"):
        x = getattr(ld, name)
        if not (math.isfinite(x) and x > 0):
            v.append(("B", f"leader.{name}={x} must be positive"))
    r0_samples = ld.r0.values if isinstance(ld.r0, PiecewiseLinear) else (ld.r0,)
    if any(not (math.isfinite(r) and r > 0) for r in r0_samples):
        v.append(("B", "leader r0 must be positive on [0, T]"))
    for name in ("r1_T", "r2_T"):
        x = getattr(spec, name)
        if not (math.isfinite(x) and x > 0):
            v.append(("B", f"{name}={x} must be positive"))
    for msg in spec.intensity.check(spec.T):
        v.append(("E", msg))
    return ValidationReport(tuple(v))


def survival_function(intensity: IntensitySpec, grid: TimeGrid) -> FunctionTable:
    """S(t) = exp(-Gamma(t)), the probability that the default time exceeds t."""
    t = grid.nodes
    s = np.exp(-intensity.cumulative(t))
    g = intensity.rates(t)
    # one-sided derivatives; the left limit at a breakpoint uses the previous rate
    g_left = np.array([intensity.rate(float(np.nextafter(x, -np.inf))) for x in t])
    return FunctionTable(grid, s, -g_left * s, -g * s, ("S",))


def aligned_steps(spec: GameSpec, n: int, max_factor: int = 64) -> int:
    """Smallest step count >= n whose uniform grid contains every coefficient breakpoint."""
    bps = spec.breakpoints
    for m in range(n, n * max_factor + 1):
        g = spec.grid(m)
        if all(g.contains_node(b) for b in bps):
            return m
    raise ConfigError(f"no grid with n in [{n}, {n * max_factor}] contains breakpoints {bps}")


def check_aligned(spec: GameSpec, n: int) -> None:
    g = spec.grid(n)
    bad = [b for b in spec.breakpoints if not g.contains_node(b)]
    if bad:
        raise ConfigError(f"n_steps={n} does not align with coefficient breakpoints {bad}")


# ---------------------------------------------------------------- config text

_STAGE_KEYS = ("a", "a_bar", "c", "c_bar", "b1", "b2", "p1", "p_bar1", "q1", "p2", "p_bar2", "q2")
_LEADER_KEYS = ("b0", "d0", "d0_bar", "p0", "p_bar0", "q0")


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        m = re.match(r"^\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if current == section and key is not None and re.match(rf"^{re.escape(key)}\s*[=:]", s):
            return lineno
    return None


def _parse_table(text: str, raw: str, section: str, key: str) -> tuple[tuple[float, ...], tuple[float, ...]]:
    ts, vs = [], []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ConfigError(f"table entry {item!r} is not 't:v'", _line_of(text, section, key), key)
        t, v = item.split(":", 1)
        try:
            ts.append(float(t))
            vs.append(float(v))
        except ValueError:
            raise ConfigError(f"non-numeric table entry {item!r}", _line_of(text, section, key), key) from None
    if not ts:
        raise ConfigError(f"empty table for {key}", _line_of(text, section, key), key)
    return tuple(ts), tuple(vs)


def load_spec(text: str) -> GameSpec:
    """Parse the sectioned key-value scenario format into a :class:`GameSpec`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any section", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r}", exc.lineno, exc.option) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section {exc.section!r}", exc.lineno) from None

    def num(section: str, key: str) -> float:
        if not cp.has_section(section):
            raise ConfigError(f"missing section [{section}] (needed for key {key!r})", key=key)
        if not cp.has_option(section, key):
            raise ConfigError(f"missing key {key!r} in [{section}]", _line_of(text, section, None), key)
        raw = cp.get(section, key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} = {raw!r} is not a number", _line_of(text, section, key), key) from None

    stages = [StageCoefficients(**{k: num(s, k) for k in _STAGE_KEYS}) for s in ("stage1", "stage2")]

    lead = {k: num("leader", k) for k in _LEADER_KEYS}
    if cp.has_option("leader", "r0_table"):
        ts, vs = _parse_table(text, cp.get("leader", "r0_table"), "leader", "r0_table")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigError("r0_table times not sorted", _line_of(text, "leader", "r0_table"), "r0_table")
        r0: float | PiecewiseLinear = PiecewiseLinear(ts, vs)
    else:
        r0 = num("leader", "r0")

    if not cp.has_section("intensity"):
        raise ConfigError("missing section [intensity] (needed for key 'kind')", key="kind")
    kind = cp.get("intensity", "kind", fallback="constant").strip()
    if kind == "constant":
        intensity = IntensitySpec.constant(num("intensity", "gamma"))
    elif kind in ("piecewise", "piecewise-constant"):
        if not cp.has_option("intensity", "gamma_table"):
            raise ConfigError("missing key 'gamma_table' in [intensity]", _line_of(text, "intensity", None),
                              "gamma_table")
        ts, vs = _parse_table(text, cp.get("intensity", "gamma_table"), "intensity", "gamma_table")
        intensity = IntensitySpec.piecewise(ts, vs)
        problems = intensity.check()
        if problems:
            raise ConfigError(problems[0], _line_of(text, "intensity", "gamma_table"), "gamma_table")
    else:
        raise ConfigError(f"unknown intensity kind {kind!r}", _line_of(text, "intensity", "kind"), "kind")

    return GameSpec(
        T=num("horizon", "T"),
        x0=num("horizon", "x0"),
        stage1=stages[0],
        stage2=stages[1],
        leader=LeaderCoefficients(r0=r0, **lead),
        r1_T=num("terminal", "r1_T"),
        r2_T=num("terminal", "r2_T"),
        intensity=intensity,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def dump_spec(spec: GameSpec) -> str:
    """Serialize to the config format; ``load_spec(dump_spec(s)) == s``."""
    lines = ["[horizon]", f"T = {_fmt(spec.T)}", f"x0 = {_fmt(spec.x0)}", ""]
    for name, st in (("stage1", spec.stage1), ("stage2", spec.stage2)):
        lines.append(f"[{name}]")
        lines += [f"{k} = {_fmt(getattr(st, k))}" for k in _STAGE_KEYS]
        lines.append("")
    lines += ["[terminal]", f"r1_T = {_fmt(spec.r1_T)}", f"r2_T = {_fmt(spec.r2_T)}", "", "[leader]"]
    ld = spec.leader
    lines += [f"{k} = {_fmt(getattr(ld, k))}" for k in _LEADER_KEYS]
    if isinstance(ld.r0, PiecewiseLinear):
        lines.append("r0_table = " + ", ".join(f"{_fmt(t)}:{_fmt(v)}" for t, v in zip(ld.r0.times, ld.r0.values)))
    else:
        lines.append(f"r0 = {_fmt(ld.r0)}")
    lines += ["", "[intensity]"]
    it = spec.intensity
    if it.kind == "constant":
        lines += ["kind = constant", f"gamma = {_fmt(it.values[0])}"]
    else:
        lines += ["kind = piecewise",
                  "gamma_table = " + ", ".join(f"{_fmt(t)}:{_fmt(v)}" for t, v in zip(it.breakpoints, it.values))]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- scenarios

TINY = 1e-12  # stands in for a zero weight, since validation demands strictly positive weights


def symmetric_stage(a=0.0, a_bar=0.0, c=0.0, c_bar=0.0, b=1.0, q=1.0, p=TINY, p_bar=TINY) -> StageCoefficients:
    return StageCoefficients(a, a_bar, c, c_bar, b, b, p, p_bar, q, p, p_bar, q)


def scenario_c0(gamma: float = 0.0) -> GameSpec:
    """Closed-form scenario: no drift or noise, unit control weights, r_i(T) = 1/2."""
    st = symmetric_stage()
    return GameSpec(
        T=1.0, x0=1.0, stage1=st, stage2=st,
        leader=LeaderCoefficients(b0=1.0, d0=0.0, d0_bar=0.0, p0=TINY, p_bar0=TINY, q0=1.0, r0=1.0),
        r1_T=0.5, r2_T=0.5, intensity=IntensitySpec.constant(gamma),
    )


def scenario_example(gamma: float = 0.4) -> GameSpec:
    """A constant-coefficient spec in the closed-loop leader case (a_bar1 = c_bar1 = d0_bar = 0)."""
    st1 = StageCoefficients(a=0.1, a_bar=0.0, c=0.2, c_bar=0.0, b1=1.0, b2=0.5,
                            p1=0.5, p_bar1=0.2, q1=1.0, p2=0.3, p_bar2=0.1, q2=0.25)
    st2 = StageCoefficients(a=-0.1, a_bar=0.1, c=0.25, c_bar=0.1, b1=1.0, b2=2.0,
                            p1=0.4, p_bar1=0.2, q1=0.5, p2=0.6, p_bar2=0.1, q2=2.0)
    return GameSpec(
        T=1.0, x0=1.0, stage1=st1, stage2=st2,
        leader=LeaderCoefficients(b0=1.0, d0=0.3, d0_bar=0.0, p0=0.5, p_bar0=0.1, q0=1.0, r0=1.0),
        r1_T=0.5, r2_T=0.8, intensity=IntensitySpec.constant(gamma),
    )


def random_spec(rng: np.random.Generator, example_case: bool = True) -> GameSpec:
    """A random spec that passes validation; used by property checks."""

    def stage(first: bool) -> StageCoefficients:
        l = rng.uniform(0.2, 2.0)
        b1, b2 = rng.uniform(0.3, 2.0, size=2) * rng.choice([-1, 1], size=2)
        a_bar = 0.0 if (first and example_case) else rng.uniform(-0.5, 0.5)
        c_bar = 0.0 if (first and example_case) else rng.uniform(-0.4, 0.4)
        return StageCoefficients(
            a=rng.uniform(-1, 1), a_bar=a_bar, c=rng.uniform(-0.5, 0.5), c_bar=c_bar,
            b1=b1, b2=b2, p1=rng.uniform(0.05, 2), p_bar1=rng.uniform(0.05, 1), q1=b1 ** 2 / l,
            p2=rng.uniform(0.05, 2), p_bar2=rng.uniform(0.05, 1), q2=b2 ** 2 / l,
        )

    return GameSpec(
        T=rng.uniform(0.5, 2.0), x0=rng.uniform(-2, 2), stage1=stage(True), stage2=stage(False),
        leader=LeaderCoefficients(
            b0=rng.uniform(-1.5, 1.5), d0=rng.uniform(-0.5, 0.5), d0_bar=0.0,
            p0=rng.uniform(0.05, 2), p_bar0=rng.uniform(0.05, 1), q0=rng.uniform(0.3, 2),
            r0=rng.uniform(0.1, 2)),
        r1_T=rng.uniform(0.1, 2), r2_T=rng.uniform(0.1, 2),
        intensity=IntensitySpec.constant(rng.uniform(0.0, 1.5)),
    )
