"""Pseudoquads and their approximating parabolic rectangles.

A pseudoquad is a region of {y=0} bounded by two vertical lines and two
characteristic curves; its reference parabolic rectangle is bounded by
two parallel parabolas whose common second derivative is minus the
slope of the underlying vertical plane.  Rectilinearity compares the
curves against the parabolas over the four-times-enlarged base.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import fiber_distance
from .charflow import CharCurve, CoverageError, curve_from_batch, trace_batch
from .core import HPoint, project_pi
from .graphs import IntrinsicGraph

__all__ = [
    "ParabolicRectangle",
    "Pseudoquad",
    "ScaledRegion",
    "make_root_pseudoquad",
    "rectilinearity_gap",
    "aspect",
    "area",
    "area_simpson",
    "quad_grid",
    "scale",
    "enclose",
    "enclose_scale_factor",
    "slope_bound_check",
    "SlopeReport",
    "containment_check",
    "plane_affine_of",
    "plane_gap_ratio",
    "region_grid",
    "export_boundary_csv",
]


@dataclass(frozen=True)
class ParabolicRectangle:
    """Region between the parallel parabolas h1 and h1 + height over [a, b].

    h1(x) = c2 x^2 + c1 x + c0; the slope of the underlying vertical
    plane is -h1'' = -2 c2.
    """

    a: float
    b: float
    c2: float
    c1: float
    c0: float
    height: float

    def __post_init__(self):
        if self.height <= 0.0 or self.a >= self.b:
            raise ValueError("parabolic rectangle needs positive width and height")

    @property
    def slope(self) -> float:
        return -2.0 * self.c2

    @property
    def delta_x(self) -> float:
        return self.b - self.a

    @property
    def delta_z(self) -> float:
        return self.height

    def h1(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.c2 * x * x + self.c1 * x + self.c0

    def h2(self, x):
        return self.h1(x) + self.height

    def mid(self, x):
        return self.h1(x) + 0.5 * self.height


@dataclass(frozen=True)
class Pseudoquad:
    """Curve-bounded region with its reference rectangle.

    The bounding curves must be traced over the enlarged base 4I; width,
    height, slope and scalings are all read off the rectangle.
    """

    a: float
    b: float
    lower: CharCurve
    upper: CharCurve
    rect: ParabolicRectangle
    mu: float = 1.0 / 32.0

    def __post_init__(self):
        if not (0.0 < self.mu <= 1.0 / 32.0):
            raise ValueError("mu must lie in (0, 1/32]")
        lo4, hi4 = self.enlarged_base(4.0)
        for curve in (self.lower, self.upper):
            if not curve.covers(lo4, hi4):
                raise CoverageError(
                    f"bounding curve spans [{curve.t_min}, {curve.t_max}] but the "
                    f"enlarged base is [{lo4}, {hi4}]"
                )
        if (self.rect.a, self.rect.b) != (self.a, self.b):
            raise ValueError("rectangle base must match pseudoquad base")

    @property
    def delta_x(self) -> float:
        return self.rect.delta_x

    @property
    def delta_z(self) -> float:
        return self.rect.delta_z

    @property
    def slope(self) -> float:
        return self.rect.slope

    def enlarged_base(self, factor: float):
        mid = 0.5 * (self.a + self.b)
        half = 0.5 * factor * (self.b - self.a)
        return mid - half, mid + half

    def g1(self, x):
        return self.lower.g_at(x)

    def g2(self, x):
        return self.upper.g_at(x)

    def contains(self, x, z, tol: float = 0.0):
        x = np.asarray(x, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        inside_x = (x >= self.a - tol) & (x <= self.b + tol)
        xc = np.clip(x, self.a, self.b)
        return inside_x & (z >= self.g1(xc) - tol) & (z <= self.g2(xc) + tol)


@dataclass(frozen=True)
class ScaledRegion:
    """The concentric scaling rho*Q: base rho*I, height rho^2 * delta_z."""

    lo: float
    hi: float
    c2: float
    c1: float
    cmid: float
    half_height: float

    def mid(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.c2 * x * x + self.c1 * x + self.cmid

    @property
    def delta_x(self) -> float:
        return self.hi - self.lo

    @property
    def delta_z(self) -> float:
        return 2.0 * self.half_height

    def contains(self, x, z, tol: float = 0.0):
        x = np.asarray(x, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        inside_x = (x >= self.lo - tol) & (x <= self.hi + tol)
        return inside_x & (np.abs(z - self.mid(x)) <= self.half_height + tol)

    def bounds_rect(self):
        """Conservative axis-aligned hull (x0, x1, z0, z1)."""
        xs = np.linspace(self.lo, self.hi, 65)
        mid = self.mid(xs)
        return (
            self.lo,
            self.hi,
            float(np.min(mid) - self.half_height),
            float(np.max(mid) + self.half_height),
        )


def scale(Q: Pseudoquad, rho: float) -> ScaledRegion:
    """rho*Q, read off the rectangle; scale(Q, 1) is the rectangle itself."""
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    lo, hi = Q.enlarged_base(rho)
    r = Q.rect
    return ScaledRegion(
        lo=lo,
        hi=hi,
        c2=r.c2,
        c1=r.c1,
        cmid=r.c0 + 0.5 * r.height,
        half_height=0.5 * rho * rho * r.height,
    )


def rectilinearity_gap(Q: Pseudoquad) -> float:
    """max_i sup_{4I} |g_i - h_i| / delta_z; mu-rectilinear iff <= mu."""
    lo4, hi4 = Q.enlarged_base(4.0)
    worst = 0.0
    for curve, href in ((Q.lower, Q.rect.h1), (Q.upper, Q.rect.h2)):
        sel = (curve.t_grid >= lo4) & (curve.t_grid <= hi4)
        xs = curve.t_grid[sel]
        xs = np.concatenate([[lo4], xs, [hi4]])
        gap = np.max(np.abs(curve.g_at(xs) - href(xs)))
        worst = max(worst, float(gap))
    return worst / Q.delta_z


def aspect(Q) -> float:
    """delta_x / sqrt(delta_z); invariant under group dilations."""
    return Q.delta_x / math.sqrt(Q.delta_z)


def area(Q: Pseudoquad) -> float:
    """|Q|: exact integral of the interpolated bound gap over the base.

    Antiderivative differences per curve make the value telescope
    exactly under both vertical and horizontal cuts (the tree partition
    identity holds to roundoff); Simpson quadrature is kept alongside as
    an independent cross-check.
    """
    return Q.upper.integral(Q.a, Q.b) - Q.lower.integral(Q.a, Q.b)


def area_simpson(Q: Pseudoquad, nodes: int = 513) -> float:
    """|Q| by composite Simpson quadrature of g2 - g1 over the base."""
    if nodes % 2 == 0:
        nodes += 1
    xs = np.linspace(Q.a, Q.b, nodes)
    vals = Q.g2(xs) - Q.g1(xs)
    h = (Q.b - Q.a) / (nodes - 1)
    weights = np.ones(nodes)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return float(h / 3.0 * np.sum(weights * vals))


def quad_grid(Q: Pseudoquad, nx: int, nz: int):
    """Midpoint quadrature over the curve-bounded region; returns (x, z, w)."""
    xs = Q.a + (np.arange(nx) + 0.5) * (Q.b - Q.a) / nx
    g1 = Q.g1(xs)
    g2 = Q.g2(xs)
    frac = (np.arange(nz) + 0.5) / nz
    X = np.repeat(xs, nz)
    Z = (g1[:, None] + frac[None, :] * (g2 - g1)[:, None]).ravel()
    W = np.repeat((Q.b - Q.a) / nx * (g2 - g1) / nz, nz)
    return X, Z, W


def region_grid(region: ScaledRegion, nx: int, nz: int):
    """Midpoint quadrature grid over a scaled region; returns (x, z, w)."""
    xs = region.lo + (np.arange(nx) + 0.5) * region.delta_x / nx
    ss = -region.half_height + (np.arange(nz) + 0.5) * region.delta_z / nz
    X = np.repeat(xs, nz)
    Z = (region.mid(xs)[:, None] + ss[None, :]).ravel()
    w = (region.delta_x / nx) * (region.delta_z / nz)
    return X, Z, np.full(X.shape, w)


def _joint_parabola_fit(xs, g1_vals, g2_vals):
    """Least-squares fit of parallel parabolas (shared c2, c1) to two curves.

    Returns (c2, c1, c0, d) with lower parabola c2 x^2 + c1 x + c0 and
    upper offset d.
    """
    n = len(xs)
    A = np.zeros((2 * n, 4))
    A[:n, 0] = xs * xs
    A[:n, 1] = xs
    A[:n, 2] = 1.0
    A[n:, 0] = xs * xs
    A[n:, 1] = xs
    A[n:, 2] = 1.0
    A[n:, 3] = 1.0
    rhs = np.concatenate([g1_vals, g2_vals])
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    c2, c1, c0, d = map(float, sol)
    return c2, c1, c0, d


def make_root_pseudoquad(
    G: IntrinsicGraph,
    cx: float,
    cz: float,
    width: float,
    height: float,
    mu: float = 1.0 / 32.0,
    n_half: int = 2048,
) -> Pseudoquad:
    """Pseudoquad centered at (cx, cz): curves through cz +/- height/2.

    The reference rectangle is the joint parallel-parabola fit of the two
    traced curves; construction fails if the fit misses mu-rectilinearity.
    """
    half_span = 2.0 * width  # covers 4I
    t, g = trace_batch(
        G,
        np.array([cx, cx]),
        np.array([cz - 0.5 * height, cz + 0.5 * height]),
        half_span,
        n_half,
    )
    lower = curve_from_batch(G, t[0], g[0])
    upper = curve_from_batch(G, t[1], g[1])
    a, b = cx - 0.5 * width, cx + 0.5 * width
    lo4, hi4 = 0.5 * (a + b) - 2.0 * width, 0.5 * (a + b) + 2.0 * width
    sel = (t[0] >= lo4) & (t[0] <= hi4)
    c2, c1, c0, d = _joint_parabola_fit(t[0][sel], g[0][sel], g[1][sel])
    if d <= 0:
        raise ValueError("curves cross: nonpositive fitted height")
    rect = ParabolicRectangle(a=a, b=b, c2=c2, c1=c1, c0=c0, height=d)
    Q = Pseudoquad(a=a, b=b, lower=lower, upper=upper, rect=rect, mu=mu)
    gap = rectilinearity_gap(Q)
    if gap > mu:
        raise ValueError(f"root pseudoquad is not {mu}-rectilinear: gap {gap}")
    return Q


@functools.lru_cache(maxsize=None)
def enclose_scale_factor(L: float) -> float:
    """Largest dyadic a with 16a/(1-L) + 8La^2/sqrt(1-L^2) <= 1/16."""
    if not (0.0 < L < 1.0):
        raise ValueError("L must lie in (0,1)")
    for k in range(64):
        a = 2.0 ** -k
        if 16.0 * a / (1.0 - L) + 8.0 * L * a * a / math.sqrt(1.0 - L * L) <= 1.0 / 16.0:
            return a
    raise ValueError("no admissible dyadic scale factor")


def enclose(
    G: IntrinsicGraph,
    x: HPoint,
    r: float,
    kappa: float,
    mu: float = 1.0 / 32.0,
    n_half: int = 8192,
    verify_samples: int = 10000,
    check: bool = True,
) -> Pseudoquad:
    """Rectilinear pseudoquad Q with V(x, r) inside kappa*Q.

    Follows the constructive recipe: characteristic curves through the
    projected center shifted by +/- s with s = 2 kappa^-2 a^-2 r^2, and a
    sheared-linear reference rectangle of slope zero (the local plane
    {y = y(x)}).  Containment and the height bound are sample-verified.
    """
    if not (0.0 < kappa < 1.0):
        raise ValueError("kappa must lie in (0,1)")
    if r <= 0.0:
        raise ValueError("r must be positive")
    v0 = project_pi(x)
    x0, z0 = v0.x, v0.z
    y0 = float(G.eval(x0, z0))
    a_factor = enclose_scale_factor(G.lip_constant)
    s = 2.0 * r * r / (kappa * kappa * a_factor * a_factor)
    width = 2.0 * r / kappa
    t, g = trace_batch(
        G,
        np.array([x0, x0]),
        np.array([z0 - s, z0 + s]),
        2.0 * width,
        n_half,
    )
    lower = curve_from_batch(G, t[0], g[0])
    upper = curve_from_batch(G, t[1], g[1])
    a, b = x0 - 0.5 * width, x0 + 0.5 * width
    # reference rectangle: characteristic lines of the plane {y = y0}
    rect = ParabolicRectangle(
        a=a, b=b, c2=0.0, c1=-y0, c0=z0 - s + y0 * x0, height=2.0 * s
    )
    Q = Pseudoquad(a=a, b=b, lower=lower, upper=upper, rect=rect, mu=mu)
    if check:
        gap = rectilinearity_gap(Q)
        if gap > mu:
            raise ValueError(f"enclosing pseudoquad misses rectilinearity: gap {gap}")
        if not _v_region_inside(G, x, r, scale(Q, kappa), verify_samples):
            raise ValueError("sampled V(x, r) escapes kappa*Q")
    return Q


def _v_region_inside(G, p: HPoint, r: float, region: ScaledRegion, samples: int) -> bool:
    """Sample the projected ball V(p, r) and test containment in a region."""
    n = max(10, int(math.isqrt(samples)))
    v0 = project_pi(p)
    xs = v0.x + (np.arange(n) + 0.5) / n * 2.0 * r - r
    zs = (np.arange(n) + 0.5) / n * 2.0 * r * r - r * r
    X = np.repeat(xs, n)
    shear = -p.y * (X - v0.x)
    Z = v0.z + shear + np.tile(zs, n)
    member = np.asarray(fiber_distance(p.x, p.y, p.z, X, Z)) <= r
    if not np.any(member):
        return True
    ok = region.contains(X[member], Z[member], tol=1e-12 * region.delta_z)
    return bool(np.all(ok))


@dataclass(frozen=True)
class SlopeReport:
    value: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.value

    @property
    def ok(self) -> bool:
        return self.value <= self.bound


def slope_bound_check(Q: Pseudoquad, L: float) -> SlopeReport:
    """|slope(Q)| against L/sqrt(1-L^2) + aspect^-2."""
    if not (0.0 < L < 1.0):
        raise ValueError("L must lie in (0,1)")
    bound = L / math.sqrt(1.0 - L * L) + aspect(Q) ** -2
    return SlopeReport(value=abs(Q.slope), bound=bound)


def containment_check(Q: Pseudoquad, samples: int = 257) -> bool:
    """(2/3)Q inside Q inside 2Q, by dense boundary sampling."""
    inner = scale(Q, 2.0 / 3.0)
    xs_in = np.linspace(inner.lo, inner.hi, samples)
    mid_in = inner.mid(xs_in)
    ok_inner = np.all(Q.g1(xs_in) <= mid_in - inner.half_height) and np.all(
        mid_in + inner.half_height <= Q.g2(xs_in)
    )
    outer = scale(Q, 2.0)
    xs = np.linspace(Q.a, Q.b, samples)
    mid = outer.mid(xs)
    ok_outer = np.all(Q.g1(xs) >= mid - outer.half_height) and np.all(
        Q.g2(xs) <= mid + outer.half_height
    )
    return bool(ok_inner and ok_outer)


def plane_affine_of(Q: Pseudoquad):
    """(a, b) of the vertical plane whose parabolas bound the rectangle.

    The rectangle's parabolas are characteristic curves of the plane
    {y = a x + b} exactly when a = slope(R) and b = -c1.
    """
    return Q.rect.slope, -Q.rect.c1


def plane_gap_ratio(Q: Pseudoquad, G: IntrinsicGraph, nx: int = 33, nz: int = 9) -> float:
    """sup_{4Q} |psi - plane affine| / max(sqrt(dz), dz/dx) (fitted constant)."""
    m, b = plane_affine_of(Q)
    X, Z, _ = region_grid(scale(Q, 4.0), nx, nz)
    vals = G.eval(X, Z)
    gap = float(np.max(np.abs(vals - (m * X + b))))
    return gap / max(math.sqrt(Q.delta_z), Q.delta_z / Q.delta_x)


def export_boundary_csv(Q: Pseudoquad, path, samples: int = 129) -> None:
    """Closed boundary polyline (x, z) of the pseudoquad."""
    xs = np.linspace(Q.a, Q.b, samples)
    top = Q.g2(xs)
    bot = Q.g1(xs)
    loop_x = np.concatenate([xs, xs[::-1], xs[:1]])
    loop_z = np.concatenate([bot, top[::-1], bot[:1]])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "z"])
        for xv, zv in zip(loop_x, loop_z):
            writer.writerow([repr(float(xv)), repr(float(zv))])
