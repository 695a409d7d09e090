"""Time grids, sampled function tables, fixed-step RK4 and trapezoidal quadrature."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class IntegrationBlowup(ArithmeticError):
    """Raised when an ODE solution leaves the finite reals."""

    def __init__(self, t: float, label: str = "ode"):
        self.t = float(t)
        self.label = label
        super().__init__(f"{label}: non-finite solution encountered at t={self.t:.6g}")


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    n: int

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError(f"grid requires t0 < t1, got [{self.t0}, {self.t1}]")
        if self.n < 1:
            raise ValueError("grid requires n >= 1")

    @property
    def h(self) -> float:
        return (self.t1 - self.t0) / self.n

    @property
    def nodes(self) -> np.ndarray:
        k = np.arange(self.n + 1)
        t = self.t0 + k * (self.t1 - self.t0) / self.n
        t[-1] = self.t1
        return t

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Index of the node equal to ``t`` (within ``tol`` steps); raises if none."""
        x = (t - self.t0) / self.h
        k = int(round(x))
        if abs(x - k) > tol or not 0 <= k <= self.n:
            raise DomainError(f"t={t} is not a grid node")
        return k

    def contains_node(self, t: float, tol: float = 1e-9) -> bool:
        try:
            self.index_of(t, tol)
        except DomainError:
            return False
        return True


def _hermite(s, y0, y1, m0, m1, h):
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * m0
            + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * m1)


@dataclass(frozen=True)
class FunctionTable:
    """A vector-valued function of time sampled on a uniform grid.

    Between nodes the table interpolates piecewise-linearly, or with cubic
    Hermite segments when one-sided node derivatives are attached (tables
    produced by :func:`integrate_ode` carry them, which keeps RK4 stage
    evaluations of dependent equations fourth-order accurate).
    """

    grid: TimeGrid
    values: np.ndarray
    dleft: np.ndarray | None = None
    dright: np.ndarray | None = None
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.n + 1:
            raise ValueError(f"table needs {self.grid.n + 1} rows, got {v.shape[0]}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        for name in ("dleft", "dright"):
            d = getattr(self, name)
            if d is not None:
                d = np.asarray(d, dtype=float).reshape(v.shape)
                d.setflags(write=False)
                object.__setattr__(self, name, d)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def column(self, j: int) -> "FunctionTable":
        sl = slice(j, j + 1)
        return FunctionTable(
            self.grid, self.values[:, sl],
            None if self.dleft is None else self.dleft[:, sl],
            None if self.dright is None else self.dright[:, sl],
            (self.names[j],) if self.names else (),
        )

    def __call__(self, t: float) -> np.ndarray:
        g = self.grid
        if t < g.t0 - 1e-12 * max(1.0, abs(g.t0)) or t > g.t1 + 1e-12 * max(1.0, abs(g.t1)):
            raise DomainError(f"t={t} outside table domain [{g.t0}, {g.t1}]")
        x = (t - g.t0) / g.h
        k = min(max(int(np.floor(x)), 0), g.n - 1)
        s = x - k
        if s <= 0.0:
            return self.values[k]
        if s >= 1.0:
            return self.values[k + 1]
        if self.dright is None or self.dleft is None:
            return (1.0 - s) * self.values[k] + s * self.values[k + 1]
        return _hermite(s, self.values[k], self.values[k + 1],
                        self.dright[k], self.dleft[k + 1], g.h)

    def scalar(self, t: float) -> float:
        return float(self(t)[0])

    def to_csv(self, header: Sequence[str] | None = None, time_name: str = "t") -> str:
        cols = list(header) if header else (list(self.names) or [f"v{j + 1}" for j in range(self.dim)])
        buf = io.StringIO()
        buf.write(",".join([time_name] + cols) + "\n")
        for tk, row in zip(self.t, self.values):
            buf.write(",".join(repr(float(x)) for x in (tk, *row)) + "\n")
        return buf.getvalue()


def constant_table(grid: TimeGrid, value: float | Sequence[float]) -> FunctionTable:
    v = np.broadcast_to(np.atleast_1d(np.asarray(value, dtype=float)), (grid.n + 1, np.size(value)))
    z = np.zeros_like(v)
    return FunctionTable(grid, v.copy(), z, z)


def _inside(t: float, toward: float) -> float:
    # one-sided evaluation so coefficient jumps at nodes are seen from inside the step
    return float(np.nextafter(t, toward))


def integrate_ode(rhs: Callable[[float, np.ndarray], np.ndarray], boundary_value, grid: TimeGrid,
                  direction: str = "forward", label: str = "ode",
                  names: Sequence[str] = ()) -> FunctionTable:
    """Classical fixed-step RK4 on ``grid``.

    ``direction="backward"`` treats ``boundary_value`` as the value at ``grid.t1``.
    Right-hand sides are only ever evaluated strictly inside a step or at its
    interior side, so piecewise-constant coefficients with jumps on nodes keep
    full order. Raises :class:`IntegrationBlowup` on non-finite values.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")
    y = np.atleast_1d(np.asarray(boundary_value, dtype=float)).copy()
    t = grid.nodes
    n = grid.n
    out = np.empty((n + 1, y.size))
    dl = np.empty_like(out)
    dr = np.empty_like(out)
    if direction == "forward":
        order = range(n)
        out[0] = y
    else:
        order = range(n, 0, -1)
        out[n] = y

    for k in order:
        if direction == "forward":
            ta, tb = t[k], t[k + 1]
        else:
            ta, tb = t[k], t[k - 1]
        h = tb - ta
        ya = out[k]
        ts = _inside(ta, tb)
        te = _inside(tb, ta)
        tm = 0.5 * (ta + tb)
        k1 = np.asarray(rhs(ts, ya), dtype=float)
        k2 = np.asarray(rhs(tm, ya + 0.5 * h * k1), dtype=float)
        k3 = np.asarray(rhs(tm, ya + 0.5 * h * k2), dtype=float)
        k4 = np.asarray(rhs(te, ya + h * k3), dtype=float)
        yb = ya + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(yb)) or np.max(np.abs(yb)) > 1e150:
            raise IntegrationBlowup(tb, label)
        nxt = k + 1 if direction == "forward" else k - 1
        out[nxt] = yb
        if direction == "forward":
            dr[k] = k1
        else:
            dl[k] = k1
    # derivative on the remaining side of every node
    for k in range(n + 1):
        if direction == "forward":
            if k > 0:
                dl[k] = rhs(_inside(t[k], t[k - 1]), out[k])
        else:
            if k < n:
                dr[k] = rhs(_inside(t[k], t[k + 1]), out[k])
    if direction == "forward":
        dr[n] = dl[n]
        if n >= 1:
            dl[0] = dr[0]
    else:
        dl[0] = dr[0]
        dr[n] = dl[n]
    return FunctionTable(grid, out, dl, dr, tuple(names))


def quadrature(table: FunctionTable, start: float, stop: float, column: int = 0) -> float:
    """Trapezoidal integral of one column over [start, stop], partial end cells included."""
    g = table.grid
    if start > stop:
        return -quadrature(table, stop, start, column)
    eps = 1e-12 * max(1.0, abs(g.t0), abs(g.t1))
    if start < g.t0 - eps or stop > g.t1 + eps:
        raise DomainError(f"[{start}, {stop}] exceeds table domain [{g.t0}, {g.t1}]")
    if stop == start:
        return 0.0
    t = g.nodes
    f = table.values[:, column]

    def lin(x):
        return float(np.interp(x, t, f))

    inner = (t > start) & (t < stop)
    pts = np.concatenate(([start], t[inner], [stop]))
    vals = np.concatenate(([lin(start)], f[inner], [lin(stop)]))
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(pts)))


def trapezoid_cumulative_from_end(values: np.ndarray, h: float) -> np.ndarray:
    """I[k] = trapezoid integral of samples from node k to the last node."""
    seg = 0.5 * h * (values[1:] + values[:-1])
    out = np.zeros_like(values, dtype=float)
    out[:-1] = np.cumsum(seg[::-1])[::-1]
    return out


def _fd_weights(order: int = 4) -> np.ndarray:
    # w[j] gives first-derivative weights at stencil position j for unit spacing
    pts = np.arange(order + 1, dtype=float)
    w = np.empty((order + 1, order + 1))
    for j in range(order + 1):
        v = np.vander(pts - j, increasing=True).T
        rhs = np.zeros(order + 1)
        rhs[1] = 1.0
        w[j] = np.linalg.solve(v, rhs)
    return w


_FD4 = _fd_weights(4)


def node_derivatives(values: np.ndarray, grid: TimeGrid, breaks: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
    """One-sided finite-difference derivatives (4th order) at every node.

    Stencils never straddle a node listed in ``breaks``, so columns that are
    smooth only between breakpoints are differentiated correctly from each side.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    n = grid.n
    cuts = sorted({0, n, *(grid.index_of(b) for b in breaks if grid.contains_node(b))})
    dl = np.full(v.shape, np.nan)
    dr = np.full(v.shape, np.nan)
    for i0, i1 in zip(cuts[:-1], cuts[1:]):
        m = i1 - i0
        order = min(4, m)
        w = _FD4 if order == 4 else _fd_weights(order)
        for j in range(i0, i1 + 1):
            s = min(max(j - order // 2, i0), i1 - order)
            d = w[j - s] @ v[s:s + order + 1] / grid.h
            if j > i0:
                dl[j] = d
            if j < i1:
                dr[j] = d
    dl[0] = dr[0]
    dr[n] = dl[n]
    return dl, dr
