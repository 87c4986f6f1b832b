"""Affine L_p fitting and the flatness numbers of intrinsic graphs.

gamma_p measures the normalized L_p distance of psi to affine functions
of x over the projected ball V(p, r); beta_p measures the distance of
the graph piece inside B(x, r) to the best vertical plane.  Both carry
the prefactor r^(-(3+p)/p) making them dimensionless and dilation
invariant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from ._kernels import fiber_distance, lp_state, power_residual
from .charflow import CoverageError
from .core import HPoint, dist_point_to_arrays, project_pi
from .graphs import IntrinsicGraph, graph_map, graph_map_arrays

__all__ = [
    "AffineMap",
    "VRegion",
    "BetaSample",
    "FitResult",
    "v_region",
    "fit_affine_lp",
    "gamma_p",
    "beta_p_surface",
    "comparability_check",
    "ComparabilityReport",
    "write_beta_csv",
    "DEFAULT_GRID",
]

DEFAULT_GRID = (64, 64)


@dataclass(frozen=True)
class AffineMap:
    """h(v) = a * x(v) + b, constant on the vertical coset directions."""

    a: float
    b: float

    def __call__(self, x):
        return self.a * np.asarray(x, dtype=np.float64) + self.b


@dataclass(frozen=True)
class VRegion:
    """Quadrature nodes of the projected ball V(p, r) with cell weights.

    Nodes are the midpoint grid of the bounding parallelogram
    {|x - x0| <= r, |z - z0 + y(p)(x - x0)| <= r^2} filtered by the exact
    coset-distance membership test.
    """

    center: HPoint
    radius: float
    xs: np.ndarray
    zs: np.ndarray
    weights: np.ndarray

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class BetaSample:
    """One flatness evaluation: the value and its optimal affine competitor."""

    point: HPoint
    radius: float
    p_exponent: float
    value: float
    best_fit: AffineMap
    estimator: str

    def __post_init__(self):
        if self.value < 0.0:
            raise ValueError("flatness values are nonnegative")


@dataclass(frozen=True)
class FitResult:
    map: AffineMap
    residual: float
    degenerate: bool = False

    def __iter__(self):
        return iter((self.map, self.residual))


def v_region(G, p: HPoint, r: float, grid=DEFAULT_GRID) -> VRegion:
    """Midpoint-grid quadrature of V(p, r), exact-membership filtered.

    When a graph is supplied its domain must contain the bounding
    parallelogram (so psi can be evaluated on every node).
    """
    if r <= 0.0:
        raise ValueError("radius must be positive")
    nx, nz = grid
    v0 = project_pi(p)
    x0, z0 = v0.x, v0.z
    if G is not None:
        d = G.domain
        zpad = r * r + abs(p.y) * r
        if not (x0 - r >= d.x0 and x0 + r <= d.x1 and z0 - zpad >= d.z0 and z0 + zpad <= d.z1):
            raise CoverageError(
                f"V({p}, {r}) bounding parallelogram exceeds the graph domain"
            )
    xs = x0 + (2.0 * (np.arange(nx) + 0.5) / nx - 1.0) * r
    zeta = (2.0 * (np.arange(nz) + 0.5) / nz - 1.0) * (r * r)
    X = np.repeat(xs, nz)
    Z = z0 - p.y * (X - x0) + np.tile(zeta, nx)
    member = np.asarray(fiber_distance(p.x, p.y, p.z, X, Z)) <= r
    if not np.any(member):
        raise RuntimeError("internal error: projected ball produced no nodes")
    cell = (2.0 * r / nx) * (2.0 * r * r / nz)
    return VRegion(
        center=p,
        radius=r,
        xs=X[member],
        zs=Z[member],
        weights=np.full(int(np.count_nonzero(member)), cell),
    )


def _weighted_lsq(x, vals, w):
    sw = np.sum(w)
    sx = np.sum(w * x)
    sxx = np.sum(w * x * x)
    sv = np.sum(w * vals)
    sxv = np.sum(w * x * vals)
    det = sw * sxx - sx * sx
    if det <= 0.0 or not math.isfinite(det):
        return None
    a = (sw * sxv - sx * sv) / det
    b = (sxx * sv - sx * sxv) / det
    return float(a), float(b)


def _newton_smoothed(x, vals, w, p, a, b, eps, tol=1e-10, max_iter=200, metric=0):
    obj = lp_state(x, vals, w, a, b, p, eps, metric)[0]
    scale = max(1.0, abs(a), abs(b))
    for _ in range(max_iter):
        _, ga, gb, haa, hab, hbb = lp_state(x, vals, w, a, b, p, eps, metric)
        ridge = 1e-14 * (haa + hbb) + 1e-300
        det = (haa + ridge) * (hbb + ridge) - hab * hab
        if det <= 0.0 or not math.isfinite(det):
            break
        da = -((hbb + ridge) * ga - hab * gb) / det
        db = -((haa + ridge) * gb - hab * ga) / det
        step = 1.0
        new_obj = obj
        na, nb = a, b
        for _ in range(60):
            ta, tb = a + step * da, b + step * db
            cand = lp_state(x, vals, w, ta, tb, p, eps, metric)[0]
            if cand <= obj:
                na, nb, new_obj = ta, tb, cand
                break
            step *= 0.5
        moved = abs(na - a) + abs(nb - b)
        drop = obj - new_obj
        a, b, obj = na, nb, new_obj
        if drop <= tol * max(obj, 1e-300) and moved <= tol * scale:
            break
    return a, b


def fit_affine_lp(x, vals, weights, p: float) -> FitResult:
    """Weighted L_p-optimal affine fit of vals against x.

    p = 2 solves the normal equations; other p run damped Newton on the
    smoothed objective (|u|^p -> (u^2 + eps^2)^(p/2), eps = 1e-9 of the
    value scale) from the p = 2 solution.  The objective is convex in
    (a, b), so the result is the global optimum.  The reported residual
    is the unsmoothed (sum w |r|^p)^(1/p).
    """
    if p < 1.0:
        raise ValueError("p must be >= 1")
    x = np.ascontiguousarray(x, dtype=np.float64)
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    w = np.ascontiguousarray(weights, dtype=np.float64)
    if len(x) < 3:
        raise ValueError("need at least 3 samples")
    if np.sum(w) <= 0.0:
        raise ValueError("need positive total weight")

    metric = 1 if p < 2.0 else 0  # Gauss-Newton curvature keeps p<2 steps scaled
    lsq = _weighted_lsq(x, vals, w)
    degenerate = lsq is None
    if degenerate:
        # all abscissas equal: only the constant coefficient is determined
        b = float(np.sum(w * vals) / np.sum(w))
        if p != 2.0:
            eps = 1e-9 * max(float(np.ptp(vals)), 1e-30)
            _, b = _newton_smoothed(np.zeros_like(x), vals, w, p, 0.0, b, eps, metric=metric)
        a = 0.0
    else:
        a, b = lsq
        if p != 2.0:
            eps = 1e-9 * max(float(np.ptp(vals)), 1e-30)
            a, b = _newton_smoothed(x, vals, w, p, a, b, eps, metric=metric)
    residual = power_residual(x, vals, w, a, b, p) ** (1.0 / p)
    return FitResult(map=AffineMap(a, b), residual=float(residual), degenerate=degenerate)


def gamma_p(G: IntrinsicGraph, v, r: float, p: float = 4.0, grid=DEFAULT_GRID) -> BetaSample:
    """Parametric flatness of psi over V(graph_map(v), r).

    value = r^(-(3+p)/p) * inf over affine h of ||psi - h||_{L_p(V)} with
    Lebesgue quadrature weights; constant along vertical cosets of v.
    """
    point = graph_map(G, v)
    region = v_region(G, point, r, grid)
    vals = G.eval(region.xs, region.zs)
    fit = fit_affine_lp(region.xs, vals, region.weights, p)
    value = r ** ((-3.0 - p) / p) * fit.residual
    return BetaSample(
        point=point,
        radius=r,
        p_exponent=p,
        value=float(value),
        best_fit=fit.map,
        estimator="gamma",
    )


def _beta_objective(params, xs, psi_vals, w, p):
    a, b = params
    return power_residual(xs, psi_vals, w, a, b, p) / (1.0 + a * a) ** (0.5 * p)


def beta_p_surface(G: IntrinsicGraph, x: HPoint, r: float, p: float = 4.0, grid=DEFAULT_GRID) -> BetaSample:
    """Surface flatness of the graph piece in B(x, r).

    Samples the projection of B(x, r) intersected with the graph (point
    distance membership), integrates the plane distance to the p-th
    power against the projected Lebesgue measure, and minimizes over
    finite-slope vertical planes starting from the parametric best fit.
    """
    nx, nz = grid
    v0 = project_pi(x)
    if G is not None:
        d = G.domain
        zpad = r * r + abs(x.y) * r
        if not (
            v0.x - r >= d.x0 and v0.x + r <= d.x1 and v0.z - zpad >= d.z0 and v0.z + zpad <= d.z1
        ):
            raise CoverageError(f"B({x}, {r}) projection exceeds the graph domain")
    xs = v0.x + (2.0 * (np.arange(nx) + 0.5) / nx - 1.0) * r
    zeta = (2.0 * (np.arange(nz) + 0.5) / nz - 1.0) * (r * r)
    X = np.repeat(xs, nz)
    Z = v0.z - x.y * (X - v0.x) + np.tile(zeta, nx)
    gx, gy, gz = graph_map_arrays(G, X, Z)
    member = np.asarray(dist_point_to_arrays(x, gx, gy, gz)) <= r
    if not np.any(member):
        raise RuntimeError("no graph points sampled inside the ball")
    cell = (2.0 * r / nx) * (2.0 * r * r / nz)
    Xm, Zm = X[member], Z[member]
    vals = gy[member]  # psi on the member nodes
    w = np.full(Xm.shape, cell)

    init = fit_affine_lp(Xm, vals, w, p)
    x0 = np.array([init.map.a, init.map.b])
    res = minimize(
        _beta_objective,
        x0,
        args=(Xm, vals, w, p),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-12 * max(init.residual ** p, 1e-30), "maxiter": 500},
    )
    best = min(
        [(float(_beta_objective(x0, Xm, vals, w, p)), x0), (float(res.fun), res.x)],
        key=lambda t: t[0],
    )
    obj, params = best
    value = r ** ((-3.0 - p) / p) * obj ** (1.0 / p)
    return BetaSample(
        point=x,
        radius=r,
        p_exponent=p,
        value=float(value),
        best_fit=AffineMap(float(params[0]), float(params[1])),
        estimator="beta-surface",
    )


@dataclass(frozen=True)
class ComparabilityReport:
    rows: tuple  # (vx, vz, r, gamma, beta, ratio)

    @property
    def ratio_band(self):
        ratios = [row[5] for row in self.rows if row[5] is not None]
        if not ratios:
            return (math.nan, math.nan)
        return (min(ratios), max(ratios))

    @property
    def all_finite(self) -> bool:
        return all(
            math.isfinite(row[3]) and math.isfinite(row[4]) and row[3] >= 0 and row[4] >= 0
            for row in self.rows
        )


def comparability_check(G: IntrinsicGraph, points, radii, p: float = 4.0, grid=DEFAULT_GRID) -> ComparabilityReport:
    """gamma and beta side by side over an (x, r) sweep.

    Only positivity and finiteness are asserted; the ratio band is
    reported for regression baselines (the comparability constants are
    existence-only).
    """
    rows = []
    for (vx, vz) in points:
        for r in radii:
            g = gamma_p(G, (vx, vz), r, p, grid)
            s = beta_p_surface(G, graph_map(G, (vx, vz)), r, p, grid)
            ratio = None
            if s.value > 0:
                ratio = g.value / s.value
            rows.append((vx, vz, r, g.value, s.value, ratio))
    report = ComparabilityReport(rows=tuple(rows))
    if not report.all_finite:
        raise ValueError("comparability sweep produced non-finite values")
    return report


def write_beta_csv(samples, fh) -> None:
    """BetaSample stream as CSV rows (x, z, r, p, estimator, value, fit_a, fit_b)."""
    writer = csv.writer(fh)
    writer.writerow(["x", "z", "r", "p", "estimator", "value", "fit_a", "fit_b"])
    for s in samples:
        v = project_pi(s.point)
        writer.writerow(
            [
                repr(v.x),
                repr(v.z),
                repr(s.radius),
                repr(s.p_exponent),
                s.estimator,
                repr(s.value),
                repr(s.best_fit.a),
                repr(s.best_fit.b),
            ]
        )
