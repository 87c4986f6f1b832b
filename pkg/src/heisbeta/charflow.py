"""Characteristic curves: flow lines of the intrinsic horizontal field.

A characteristic curve of a graph is the projection to {y=0} of a
horizontal curve on the graph; parametrized by x it solves
g'(t) = -psi(t, g(t)).  Curves are traced with classical fourth-order
Runge-Kutta on a uniform grid, one canonical trajectory per seed point.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import HPoint
from .graphs import IntrinsicGraph, OutOfDomainError

__all__ = [
    "CharCurve",
    "EmptyCurveError",
    "CoverageError",
    "trace",
    "trace_batch",
    "check_linearize",
    "LinearizeReport",
    "export_curve_csv",
]


class EmptyCurveError(ValueError):
    """The seed point leaves the domain before a single step."""


class CoverageError(ValueError):
    """A curve or region does not cover the interval it is needed on."""


@dataclass(frozen=True)
class CharCurve:
    """Sampled flow line with uniform grid spacing."""

    t_grid: np.ndarray
    g_values: np.ndarray
    step: float
    source_graph: IntrinsicGraph

    def __post_init__(self):
        if len(self.t_grid) != len(self.g_values):
            raise ValueError("grid/value length mismatch")
        if len(self.t_grid) == 0:
            raise EmptyCurveError("curve has no nodes")

    @property
    def t_min(self) -> float:
        return float(self.t_grid[0])

    @property
    def t_max(self) -> float:
        return float(self.t_grid[-1])

    def covers(self, lo: float, hi: float, slack: float = 1e-9) -> bool:
        span = self.t_max - self.t_min
        return self.t_min <= lo + slack * span and self.t_max >= hi - slack * span

    def g_at(self, t):
        """Piecewise-linear interpolation of the sampled trajectory."""
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < self.t_grid[0] - 1e-12) or np.any(t > self.t_grid[-1] + 1e-12):
            raise CoverageError(
                f"query in [{np.min(t)}, {np.max(t)}] outside traced range "
                f"[{self.t_min}, {self.t_max}]"
            )
        return np.interp(t, self.t_grid, self.g_values)

    def integral(self, lo: float, hi: float) -> float:
        """Exact integral of the interpolated trajectory over [lo, hi].

        Evaluated as a difference of one fixed antiderivative, so it is
        interval-additive to the last bit: integral(a,m) + integral(m,b)
        equals integral(a,b) exactly.
        """
        t, g = self.t_grid, self.g_values
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(t))])

        def antideriv(x):
            if x < t[0] - 1e-12 or x > t[-1] + 1e-12:
                raise CoverageError(f"integral endpoint {x} outside traced range")
            k = int(np.clip(np.searchsorted(t, x, side="right") - 1, 0, len(t) - 2))
            dt = x - t[k]
            gk = g[k]
            slope = (g[k + 1] - g[k]) / (t[k + 1] - t[k])
            return cum[k] + gk * dt + 0.5 * slope * dt * dt

        return float(antideriv(hi) - antideriv(lo))

    def derivative_at(self, t):
        """g'(t) = -psi(t, g(t)) evaluated on the sampled trajectory."""
        g = self.g_at(t)
        return -self.source_graph.eval(np.asarray(t, dtype=np.float64), g)

    def shifted(self, dz: float) -> "CharCurve":
        """Curve translated vertically (used for plane-graph references)."""
        return CharCurve(self.t_grid, self.g_values + dz, self.step, self.source_graph)


def _rk4_sweep(G: IntrinsicGraph, t0, g0, h, n_steps, check_domain):
    """n_steps RK4 steps from (t0, g0); h may be negative. Arrays in, arrays out.

    Returns (g_list, steps_done) where g_list[k] is the state after k steps;
    stops early when the next state would leave the domain (check_domain).
    """
    t = np.asarray(t0, dtype=np.float64)
    g = np.array(g0, dtype=np.float64)
    out = [g.copy()]
    d = G.domain
    for k in range(n_steps):
        k1 = -G.eval(t, g, check_domain=False)
        k2 = -G.eval(t + 0.5 * h, g + 0.5 * h * k1, check_domain=False)
        k3 = -G.eval(t + 0.5 * h, g + 0.5 * h * k2, check_domain=False)
        k4 = -G.eval(t + h, g + h * k3, check_domain=False)
        g_next = g + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_next = t + h
        if check_domain and not (
            np.all(g_next >= d.z0)
            and np.all(g_next <= d.z1)
            and d.x0 - 1e-12 <= float(np.min(t_next))
            and float(np.max(t_next)) <= d.x1 + 1e-12
        ):
            return out, k
        g = g_next
        t = t_next
        out.append(g.copy())
    return out, n_steps


def trace(G: IntrinsicGraph, p0, t_lo: float, t_hi: float, step: float) -> CharCurve:
    """RK4 solution of g' = -psi(t, g) through p0, truncated at the domain.

    p0 is an (x, z) pair or an HPoint on {y=0}; it sits exactly on a grid
    node of the returned curve.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    if isinstance(p0, HPoint):
        x0, z0 = p0.x, p0.z
    else:
        x0, z0 = float(p0[0]), float(p0[-1])
    d = G.domain
    if not d.contains(x0, z0):
        raise EmptyCurveError(f"seed point ({x0}, {z0}) outside domain")
    if t_lo > x0 or t_hi < x0:
        raise ValueError("t range must contain the seed abscissa")

    n_fwd = int(math.floor((min(t_hi, d.x1) - x0) / step + 1e-12))
    n_bwd = int(math.floor((x0 - max(t_lo, d.x0)) / step + 1e-12))
    fwd, done_f = _rk4_sweep(G, x0, np.array([z0]), step, n_fwd, True)
    bwd, done_b = _rk4_sweep(G, x0, np.array([z0]), -step, n_bwd, True)
    if done_f == 0 and done_b == 0 and n_fwd + n_bwd > 0:
        raise EmptyCurveError("curve exits the domain immediately")
    g = np.array([v[0] for v in bwd[::-1]] + [v[0] for v in fwd[1:]])
    t = x0 + step * np.arange(-done_b, done_f + 1)
    return CharCurve(t_grid=t, g_values=g, step=step, source_graph=G)


def trace_batch(G: IntrinsicGraph, x0, g0, half_span, n_half: int) -> tuple:
    """Trace many curves at once, each through (x0_i, g0_i).

    Curve i is sampled on the 2*n_half+1 uniform nodes of
    [x0_i - half_span_i, x0_i + half_span_i].  Raises CoverageError if
    any trajectory leaves the domain.  Returns (t_grids, g_matrix) with
    shapes (n, 2*n_half+1).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    g0 = np.asarray(g0, dtype=np.float64)
    half_span = np.broadcast_to(np.asarray(half_span, dtype=np.float64), x0.shape)
    h = half_span / n_half
    fwd, done_f = _rk4_sweep(G, x0, g0, h, n_half, False)
    bwd, done_b = _rk4_sweep(G, x0, g0, -h, n_half, False)
    g = np.stack(bwd[::-1] + fwd[1:], axis=1)
    offs = np.arange(-n_half, n_half + 1)
    t = x0[:, None] + h[:, None] * offs[None, :]
    d = G.domain
    if not (
        np.all(t >= d.x0) and np.all(t <= d.x1) and np.all(g >= d.z0) and np.all(g <= d.z1)
    ):
        raise CoverageError("batched trace leaves the graph domain")
    return t, g


def curve_from_batch(G: IntrinsicGraph, t_row, g_row) -> CharCurve:
    step = float(t_row[1] - t_row[0])
    return CharCurve(
        t_grid=np.asarray(t_row, dtype=np.float64),
        g_values=np.asarray(g_row, dtype=np.float64),
        step=step,
        source_graph=G,
    )


@dataclass(frozen=True)
class LinearizeReport:
    """Worst second-order ratio of a traced curve against the curvature bound."""

    worst_ratio: float
    witness: tuple
    coefficient: float
    pairs_checked: int

    @property
    def ok(self) -> bool:
        return self.worst_ratio <= 1.0


def check_linearize(curve: CharCurve, L: float, max_nodes: int = 512) -> LinearizeReport:
    """Check |g(t)-g(s)-g'(s)(t-s)| <= L/sqrt(1-L^2) * (t-s)^2/2 on grid pairs."""
    if not (0.0 < L < 1.0):
        raise ValueError("L must lie in (0,1)")
    coeff = L / math.sqrt(1.0 - L * L)
    stride = max(1, len(curve.t_grid) // max_nodes)
    t = curve.t_grid[::stride]
    g = curve.g_values[::stride]
    gp = -curve.source_graph.eval(t, g)
    dt = t[None, :] - t[:, None]  # (s index, t index)
    lhs = np.abs(g[None, :] - g[:, None] - gp[:, None] * dt)
    rhs = coeff * dt * dt / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(rhs > 0.0, lhs / rhs, 0.0)
    k = int(np.argmax(ratios))
    i, j = divmod(k, len(t))
    return LinearizeReport(
        worst_ratio=float(ratios[i, j]),
        witness=(float(t[i]), float(t[j])),
        coefficient=coeff,
        pairs_checked=len(t) * (len(t) - 1),
    )


def export_curve_csv(curve: CharCurve, path) -> None:
    """Two-column (t, g) CSV for plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "g"])
        for t, g in zip(curve.t_grid, curve.g_values):
            writer.writerow([repr(float(t)), repr(float(g))])
