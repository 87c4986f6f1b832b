"""Discretized multiscale flatness integrals and slice-weight checks.

The central quantity is the dyadic Carleson sum
sum_i ln2 * mean_{(1/3)Q} gamma_p(x, nu 2^-i)^s * |(1/3)Q|, one radius
per octave, which discretizes the dr/r integral of the flatness numbers
over the inner third of a root pseudoquad.  The slice machinery
(sigma_i and the L4 weight comparison) ties the same integrals to the
weighted tree accounting.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .beta import DEFAULT_GRID, fit_affine_lp, gamma_p, v_region
from .charflow import CoverageError
from .graphs import IntrinsicGraph, graph_map, graph_map_arrays
from .patchwork import (
    PatchworkTree,
    coherent_slice_S_i,
    evaluate_g_S,
    min_elements,
    weight,
)
from .pseudoquad import Pseudoquad, area, quad_grid, region_grid, scale

__all__ = [
    "CarlesonSpec",
    "SweepResult",
    "fit_nu",
    "carleson_integral",
    "exponent_sweep",
    "sigma_weight_check",
    "l4_weight_check",
    "triangle_bound_check",
    "SliceReport",
    "bump_experiment_spec",
]

LN2 = math.log(2.0)


@dataclass(frozen=True)
class CarlesonSpec:
    """One multiscale integration run over the inner third of a root quad.

    Spatial nodes are a stratified grid: one node per cell, offset
    within its cell by a stream seeded from (grid_seed, level).  Plain
    midpoint nodes phase-lock against lattice-periodic graphs and can
    bias level sums badly; the stratified offsets keep the estimate
    unbiased while staying bit-reproducible.
    """

    graph: IntrinsicGraph
    root: Pseudoquad
    p_exponent: float = 4.0
    s_exponents: tuple = (4.0,)
    i0: int = 0
    i1: int = 7
    grid: tuple = (12, 12)
    region_grid: tuple = DEFAULT_GRID
    nu: Optional[float] = None
    alpha_min: float = 1.0 / 8.0
    workers: int = 0
    grid_seed: int = 1
    levels_per_octave: int = 1

    def __post_init__(self):
        if self.i1 < self.i0:
            raise ValueError("need i1 >= i0")
        if self.p_exponent < 1.0:
            raise ValueError("p must be >= 1")
        if any(s < 1.0 for s in self.s_exponents):
            raise ValueError("s exponents must be >= 1")
        if self.levels_per_octave < 1:
            raise ValueError("levels_per_octave must be >= 1")


@dataclass(frozen=True)
class SweepResult:
    """Per-level partial sums and normalized totals of one run."""

    spec_id: str
    nu: float
    tau: float
    radii: tuple
    level_sums: dict  # s -> tuple of per-level sums
    root_area: float
    runtime: float

    def total(self, s) -> float:
        return float(sum(self.level_sums[s]))

    def normalized(self, s) -> float:
        return self.total(s) / self.root_area


def bump_experiment_spec(
    refinement: int,
    seed: int = 7,
    region_grid: tuple = (32, 32),
    grid_seed: int = 1,
    s_exponents: tuple = (2.0, 4.0),
) -> CarlesonSpec:
    """The shipped dichotomy experiment at one refinement level.

    The root is sized so the inner third is a dyadic sub-box of the bump
    lattice (every generation covers it with the same fill), and the
    level range spans all generation scales with tails.
    """
    from .graphs import BumpFamilySpec, make_bump_family
    from .pseudoquad import make_root_pseudoquad

    G = make_bump_family(BumpFamilySpec(refinement_level=refinement), seed=seed)
    root = make_root_pseudoquad(G, 0.0, 0.0, 3.0, 18.0 * G.params["band_half"])
    return CarlesonSpec(
        graph=G,
        root=root,
        p_exponent=4.0,
        s_exponents=s_exponents,
        i0=0,
        i1=10,
        grid=(48, 56),
        region_grid=region_grid,
        nu=0.3,
        grid_seed=grid_seed,
    )


def fit_nu(G: IntrinsicGraph, root: Pseudoquad, grid: int = 9, iters: int = 40) -> float:
    """Largest radius nu with V(graph point, nu) inside Q over the inner third.

    Binary search; containment is tested on the exact-membership nodes of
    a coarse quadrature of each projected ball.
    """
    X, Z, _ = region_grid(scale(root, 1.0 / 3.0), grid, grid)
    pts = [graph_map(G, (float(x), float(z))) for x, z in zip(X, Z)]

    def ok(nu: float) -> bool:
        for p in pts:
            reg = v_region(None, p, nu, grid=(16, 16))
            if not np.all(root.contains(reg.xs, reg.zs, tol=1e-12 * root.delta_z)):
                return False
        return True

    lo, hi = 0.0, root.delta_x
    if ok(hi):
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        raise ValueError("no admissible nu: inner third touches the boundary")
    return lo


def _level_sum(G, X, Z, r, p, s_exponents, region_grid):
    """Grid sums of gamma^s at one radius; returns dict s -> sum over nodes."""
    acc = {s: 0.0 for s in s_exponents}
    for x, z in zip(X, Z):
        g = gamma_p(G, (float(x), float(z)), r, p, region_grid).value
        for s in s_exponents:
            acc[s] += g ** s
    return acc


def _stratified_nodes(region, nx, nz, seed, level):
    """One node per cell of the region grid, offset by a seeded stream."""
    X, Z, _ = region_grid(region, nx, nz)
    rng = np.random.default_rng(np.random.SeedSequence([seed, level]))
    X = X + (rng.random(X.shape) - 0.5) * (region.delta_x / nx)
    Z = Z + (rng.random(Z.shape) - 0.5) * (region.delta_z / nz)
    return X, Z


def carleson_integral(spec: CarlesonSpec) -> SweepResult:
    """Dyadic multiscale sum of gamma_p^s over the inner third of the root.

    total(s) = sum_i ln2 * mean_grid(gamma^s at r_i) * |(1/3)Q| with
    r_i = nu 2^-i; deterministic for a fixed spec (worker count only
    changes scheduling, not the fixed summation order).
    """
    import time

    t_start = time.perf_counter()
    G, root = spec.graph, spec.root
    nu = spec.nu if spec.nu is not None else fit_nu(G, root)
    tau = nu / (2.0 * spec.alpha_min)
    third = scale(root, 1.0 / 3.0)
    nx, nz = spec.grid
    L = spec.levels_per_octave
    sublevels = list(range(spec.i0 * L, spec.i1 * L + 1))
    nodes = [_stratified_nodes(third, nx, nz, spec.grid_seed, i) for i in sublevels]
    third_area = third.delta_x * third.delta_z
    radii = tuple(nu * 2.0 ** (-i / L) for i in sublevels)

    # domain coverage for the widest radius
    r_max = max(radii)
    d = G.domain
    x_all = np.concatenate([X for X, _ in nodes])
    z_all = np.concatenate([Z for _, Z in nodes])
    y_bound = float(np.max(np.abs(G.eval(x_all, z_all))))
    zpad = r_max * r_max + y_bound * r_max
    if not (
        x_all.min() - r_max >= d.x0
        and x_all.max() + r_max <= d.x1
        and z_all.min() - zpad >= d.z0
        and z_all.max() + zpad <= d.z1
    ):
        raise CoverageError("carleson sweep needs a larger graph domain")
    cell_height = third.delta_z / nz
    for r in radii:
        if r * r < cell_height:
            warnings.warn(
                f"radius {r} under-resolves the spatial grid (r^2 < cell height "
                f"{cell_height}); refine the grid or stop at a coarser level",
                stacklevel=2,
            )
            break

    if spec.workers > 1:
        rows = [
            (G, X[k::spec.workers], Z[k::spec.workers], r, spec.p_exponent, spec.s_exponents, spec.region_grid)
            for r, (X, Z) in zip(radii, nodes)
            for k in range(spec.workers)
        ]
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            partials = list(pool.map(lambda args: _level_sum(*args), rows))
        level_acc = []
        for li in range(len(radii)):
            chunk = partials[li * spec.workers : (li + 1) * spec.workers]
            level_acc.append(
                {s: sum(c[s] for c in chunk) for s in spec.s_exponents}
            )
    else:
        level_acc = [
            _level_sum(G, X, Z, r, spec.p_exponent, spec.s_exponents, spec.region_grid)
            for r, (X, Z) in zip(radii, nodes)
        ]

    n_nodes = nx * nz
    level_sums = {
        s: tuple(LN2 / L * acc[s] / n_nodes * third_area for acc in level_acc)
        for s in spec.s_exponents
    }
    return SweepResult(
        spec_id=f"{G.name}:p={spec.p_exponent}",
        nu=nu,
        tau=tau,
        radii=radii,
        level_sums=level_sums,
        root_area=area(root),
        runtime=time.perf_counter() - t_start,
    )


def exponent_sweep(spec_for_refinement, s_values, refinements) -> dict:
    """Normalized totals indexed by (s, refinement).

    spec_for_refinement maps a refinement level to a CarlesonSpec whose
    s_exponents already cover s_values (one gamma evaluation feeds every
    exponent).
    """
    table = {}
    for ref in refinements:
        spec = spec_for_refinement(ref)
        missing = [s for s in s_values if s not in spec.s_exponents]
        if missing:
            raise ValueError(f"spec for refinement {ref} lacks exponents {missing}")
        result = carleson_integral(spec)
        for s in s_values:
            table[(s, ref)] = result.normalized(s)
    return table


@dataclass(frozen=True)
class SliceReport:
    index: int
    radius: float
    integral: float
    weight: float
    ratio: float
    extras: dict = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.integral) and math.isfinite(self.ratio)


def sigma_weight_check(
    tree: PatchworkTree,
    i: int,
    nu: float,
    grid: tuple = (10, 10),
    region_grid_shape: tuple = (32, 32),
) -> SliceReport:
    """Integral of sigma_i(x, nu 2^-i)^4 over the inner third vs W(F_i).

    sigma_i measures the affine L4 flatness of the glued approximant
    g_{S_i} over projected balls; the ratio against the slice weight is
    reported as a regression baseline (the comparison constant is
    existence-only).
    """
    G = tree.graph
    root = tree.root.quad
    S = coherent_slice_S_i(tree, i)
    F = min_elements(tree, S)
    r = nu * 2.0 ** -i
    third = scale(root, 1.0 / 3.0)
    X, Z, _ = region_grid(third, *grid)
    third_area = third.delta_x * third.delta_z
    acc = 0.0
    for x, z in zip(X, Z):
        p = graph_map(G, (float(x), float(z)))
        reg = v_region(None, p, r, grid=region_grid_shape)
        vals, _ = evaluate_g_S(tree, S, reg.xs, reg.zs)
        fit = fit_affine_lp(reg.xs, vals, reg.weights, 4.0)
        sigma = r ** (-7.0 / 4.0) * fit.residual
        acc += sigma ** 4
    integral = acc / len(X) * third_area
    w = weight(tree, F)
    return SliceReport(
        index=i,
        radius=r,
        integral=integral,
        weight=w,
        ratio=integral / w if w > 0 else math.inf,
        extras={"pieces": len(F)},
    )


def l4_weight_check(tree: PatchworkTree, i: int, grid: tuple = (48, 24)) -> SliceReport:
    """(||g_{S_i} - f||_{L4(Q)} / (2^-i sqrt(dz)))^4 against W(F_i).

    The 2^-i sqrt(dz(root)) denominator is the slice height scale in the
    graph's own normalization (the paper form rescales the root height
    to one).
    """
    G = tree.graph
    root = tree.root.quad
    S = coherent_slice_S_i(tree, i)
    F = min_elements(tree, S)
    X, Z, W = quad_grid(root, *grid)
    vals, _ = evaluate_g_S(tree, S, X, Z)
    f_vals = G.eval(X, Z)
    norm4 = float(np.sum(W * (vals - f_vals) ** 4))
    denom = (2.0 ** -i * math.sqrt(root.delta_z)) ** 4
    w = weight(tree, F)
    ratio = norm4 / denom / w if w > 0 else math.inf
    return SliceReport(
        index=i,
        radius=2.0 ** -i,
        integral=norm4 / denom,
        weight=w,
        ratio=ratio,
        extras={"pieces": len(F)},
    )


def triangle_bound_check(tree: PatchworkTree, i: int, nu: float, points, region_grid_shape=(32, 32)):
    """gamma_4(x, r) <= r^{-7/4} ||g_{S_i}-f||_{L4(V)} + sigma_i(x, r), pointwise.

    Returns the worst slack (positive means the bound holds) over the
    sample points.
    """
    G = tree.graph
    S = coherent_slice_S_i(tree, i)
    r = nu * 2.0 ** -i
    worst = math.inf
    for (x, z) in points:
        p = graph_map(G, (float(x), float(z)))
        reg = v_region(None, p, r, grid=region_grid_shape)
        g_vals, _ = evaluate_g_S(tree, S, reg.xs, reg.zs)
        f_vals = G.eval(reg.xs, reg.zs)
        gam = gamma_p(G, (float(x), float(z)), r, 4.0, region_grid_shape).value
        l4 = r ** (-7.0 / 4.0) * float(
            np.sum(reg.weights * (g_vals - f_vals) ** 4) ** 0.25
        )
        fit = fit_affine_lp(reg.xs, g_vals, reg.weights, 4.0)
        sig = r ** (-7.0 / 4.0) * fit.residual
        worst = min(worst, l4 + sig - gam)
    return worst
