"""Foliated patchwork trees over a root pseudoquad.

A patchwork is a complete rooted binary tree of rectilinear pseudoquads:
a vertex is either cut vertically (left/right halves across the base
midpoint) or horizontally (top/bottom halves separated by a new
characteristic curve through the center).  The builder cuts a vertex
horizontally exactly when its affine fit over the tenfold enlargement is
good enough and probe characteristic curves hug the fitted plane's
parabolas; otherwise it cuts vertically.  Weighted Carleson accounting,
coherent vertex sets and the piecewise-affine approximants glued from
the per-vertex planes live here too.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .beta import AffineMap, fit_affine_lp
from .charflow import CoverageError, curve_from_batch, trace_batch
from .graphs import IntrinsicGraph
from .pseudoquad import (
    ParabolicRectangle,
    Pseudoquad,
    area,
    aspect,
    quad_grid,
    rectilinearity_gap,
    region_grid,
    scale,
)

__all__ = [
    "PatchworkParams",
    "PatchVertex",
    "PatchworkTree",
    "CoherentSet",
    "SliceUnderflowError",
    "CutRejected",
    "cut_vertical",
    "cut_horizontal",
    "build_patchwork",
    "approximating_plane",
    "PlaneFit",
    "weight",
    "carleson_check",
    "CarlesonReport",
    "coherent_slice_S_i",
    "evaluate_g_S",
    "lp_approx_check",
    "partition_report",
    "serialize_tree",
    "h_subtree",
    "r_set",
]


class SliceUnderflowError(ValueError):
    """The tree is too shallow for the requested height slice."""


class CutRejected(ValueError):
    """A horizontal cut failed the rectilinearity bounds of its children."""


@dataclass(frozen=True)
class PatchworkParams:
    """Build parameters; zeta = 1/(32 r^2) with the configured r.

    alpha_min is the low-aspect threshold below which a pseudoquad is
    cut horizontally regardless of the residual tests (tall skinny
    pseudoquads always admit horizontal cuts).
    """

    mu: float = 1.0 / 32.0
    lam: float = 0.05
    depth_cap: int = 18
    dx_floor_factor: float = 2.0 ** -20
    r_const: float = 16.0
    alpha_min: float = 1.0 / 8.0
    fit_grid: tuple = (24, 24)
    probe_grid: tuple = (4, 4)
    trace_n_half: int = 512
    max_vertices: int = 60000

    @property
    def zeta(self) -> float:
        return 1.0 / (32.0 * self.r_const * self.r_const)


@dataclass(frozen=True)
class PlaneFit:
    """L1-optimal affine approximation over the tenfold enlargement."""

    affine: AffineMap
    l1_norm: float
    normalized_residual: float  # |Q|^-1 ||l - f||_{L1(10Q)}
    ratio: float  # against lam * dz/dx

    @property
    def admissible(self) -> bool:
        return self.ratio <= 1.0


@dataclass(frozen=True)
class PatchVertex:
    vid: int
    parent: int
    depth: int
    quad: Pseudoquad
    area: float
    cut: str = "leaf"  # vertical | horizontal | leaf
    children: tuple = ()
    affine: Optional[AffineMap] = None
    fit: Optional[PlaneFit] = None
    curve_dev_ratio: float = math.nan  # probe deviation / (zeta * dz)
    fallback: bool = False  # horizontal attempt rejected, fell back to vertical

    @property
    def alpha(self) -> float:
        return aspect(self.quad)


@dataclass
class PatchworkTree:
    graph: IntrinsicGraph
    params: PatchworkParams
    vertices: list = field(default_factory=list)

    @property
    def root(self) -> PatchVertex:
        return self.vertices[0]

    def __len__(self):
        return len(self.vertices)

    def children_of(self, vid: int):
        return self.vertices[vid].children

    def leaves(self):
        return [v for v in self.vertices if v.cut == "leaf"]

    def vertical_ids(self):
        return [v.vid for v in self.vertices if v.cut == "vertical"]

    def horizontal_ids(self):
        return [v.vid for v in self.vertices if v.cut == "horizontal"]

    def descendants(self, vid: int):
        """All descendants of vid including itself, in preorder."""
        out = []
        stack = [vid]
        while stack:
            v = stack.pop()
            out.append(v)
            stack.extend(reversed(self.vertices[v].children))
        return out


def cut_vertical(Q: Pseudoquad):
    """Left and right halves across the vertical line through the midpoint."""
    m = 0.5 * (Q.a + Q.b)
    r = Q.rect
    left = Pseudoquad(
        a=Q.a,
        b=m,
        lower=Q.lower,
        upper=Q.upper,
        rect=ParabolicRectangle(a=Q.a, b=m, c2=r.c2, c1=r.c1, c0=r.c0, height=r.height),
        mu=Q.mu,
    )
    right = Pseudoquad(
        a=m,
        b=Q.b,
        lower=Q.lower,
        upper=Q.upper,
        rect=ParabolicRectangle(a=m, b=Q.b, c2=r.c2, c1=r.c1, c0=r.c0, height=r.height),
        mu=Q.mu,
    )
    return left, right


def cut_horizontal(G: IntrinsicGraph, Q: Pseudoquad, n_half: int = 1024, mid_curve=None):
    """Bottom and top halves separated by a characteristic curve.

    The separating curve passes through the midpoint of the central
    vertical segment; the half-rectangles sit below and above the middle
    parabola with half the height.  Raises CutRejected when any of the
    three sup bounds (lower gap, middle gap, upper gap) exceeds mu * d.
    """
    x_mid = 0.5 * (Q.a + Q.b)
    z_mid = 0.5 * (float(Q.g1(x_mid)) + float(Q.g2(x_mid)))
    if mid_curve is None:
        t, g = trace_batch(
            G, np.array([x_mid]), np.array([z_mid]), 2.0 * (Q.b - Q.a), n_half
        )
        mid_curve = curve_from_batch(G, t[0], g[0])
    r = Q.rect
    d = 0.5 * r.height
    k_c0 = r.c0 + d  # middle parabola constant term
    lo4, hi4 = Q.enlarged_base(4.0)

    def sup_gap(curve, c0):
        sel = (curve.t_grid >= lo4) & (curve.t_grid <= hi4)
        xs = np.concatenate([[lo4], curve.t_grid[sel], [hi4]])
        ref = r.c2 * xs * xs + r.c1 * xs + c0
        return float(np.max(np.abs(curve.g_at(xs) - ref)))

    gaps = (
        sup_gap(Q.lower, k_c0 - d),
        sup_gap(mid_curve, k_c0),
        sup_gap(Q.upper, k_c0 + d),
    )
    if max(gaps) > Q.mu * d:
        raise CutRejected(
            f"horizontal cut gaps {gaps} exceed mu*d = {Q.mu * d}"
        )
    bottom = Pseudoquad(
        a=Q.a,
        b=Q.b,
        lower=Q.lower,
        upper=mid_curve,
        rect=ParabolicRectangle(a=Q.a, b=Q.b, c2=r.c2, c1=r.c1, c0=k_c0 - d, height=d),
        mu=Q.mu,
    )
    top = Pseudoquad(
        a=Q.a,
        b=Q.b,
        lower=mid_curve,
        upper=Q.upper,
        rect=ParabolicRectangle(a=Q.a, b=Q.b, c2=r.c2, c1=r.c1, c0=k_c0, height=d),
        mu=Q.mu,
    )
    return bottom, top


def approximating_plane(G: IntrinsicGraph, Q: Pseudoquad, lam: float, grid=(24, 24)) -> PlaneFit:
    """Best L1 affine fit of the graph function over the tenfold region."""
    ten = scale(Q, 10.0)
    x0, x1, z0, z1 = ten.bounds_rect()
    d = G.domain
    if not (x0 >= d.x0 and x1 <= d.x1 and z0 >= d.z0 and z1 <= d.z1):
        raise CoverageError("tenfold enlargement exceeds the graph domain")
    X, Z, W = region_grid(ten, *grid)
    vals = G.eval(X, Z)
    fit = fit_affine_lp(X, vals, W, 1.0)
    area_q = area(Q)
    normalized = fit.residual / area_q
    target = lam * Q.delta_z / Q.delta_x
    return PlaneFit(
        affine=fit.map,
        l1_norm=fit.residual,
        normalized_residual=normalized,
        ratio=normalized / target if target > 0 else math.inf,
    )


def _probe_anchors(Q: Pseudoquad, grid):
    """Probe points spread over the fourfold enlargement."""
    X, Z, _ = region_grid(scale(Q, 4.0), grid[0], grid[1])
    return X, Z


def _parabola_through(affine: AffineMap, x_u, z_u, xs):
    """Characteristic parabola of the plane {y = a x + b} through (x_u, z_u)."""
    a, b = affine.a, affine.b
    return z_u - 0.5 * a * (xs * xs - x_u * x_u) - b * (xs - x_u)


def build_patchwork(G: IntrinsicGraph, root: Pseudoquad, params: PatchworkParams = PatchworkParams()) -> PatchworkTree:
    """Grow the binary tree from a rectilinear root, level by level.

    Per level, fits run vertex by vertex but all probe and cut curves of
    the level are traced in one batched integration.  A vertex is
    horizontally cut iff its plane fit meets the lambda bound and its
    probe curves stay within zeta * dz of the plane's parabolas; a
    horizontal attempt whose children miss mu-rectilinearity falls back
    to a vertical cut (flagged).
    """
    gap0 = rectilinearity_gap(root)
    if gap0 > params.mu:
        raise ValueError(f"root pseudoquad is not {params.mu}-rectilinear: gap {gap0}")
    tree = PatchworkTree(graph=G, params=params)
    tree.vertices.append(
        PatchVertex(vid=0, parent=-1, depth=0, quad=root, area=area(root))
    )
    dx_floor = params.dx_floor_factor * root.delta_x
    level = [0]
    npx, npz = params.probe_grid
    n_probe = npx * npz
    while level:
        # decide which vertices could be cut at all
        decisions = {}
        entries = []  # (vid, probe_count): vertices needing traced curves
        for vid in level:
            v = tree.vertices[vid]
            fit = approximating_plane(G, v.quad, params.lam, params.fit_grid)
            tree.vertices[vid] = replace(v, affine=fit.affine, fit=fit)
            at_cap = (
                v.depth >= params.depth_cap
                or v.quad.delta_x * 0.5 < dx_floor
                or len(tree.vertices) + 2 * len(level) > params.max_vertices
            )
            if at_cap:
                decisions[vid] = "leaf"
            elif aspect(v.quad) <= params.alpha_min:
                # tall and skinny: horizontally cuttable without probing
                entries.append((vid, 0))
            elif fit.admissible:
                entries.append((vid, n_probe))
            else:
                decisions[vid] = "vertical"

        # one batched trace for every probe and candidate cut curve
        probe_dev = {}
        mid_curves = {}
        if entries:
            anchors_x, anchors_z, spans = [], [], []
            for vid, probes in entries:
                Q = tree.vertices[vid].quad
                if probes:
                    px, pz = _probe_anchors(Q, params.probe_grid)
                    lo4, hi4 = Q.enlarged_base(4.0)
                    anchors_x.extend(px)
                    anchors_z.extend(pz)
                    spans.extend(np.maximum(px - lo4, hi4 - px))
                x_mid = 0.5 * (Q.a + Q.b)
                z_mid = 0.5 * (float(Q.g1(x_mid)) + float(Q.g2(x_mid)))
                anchors_x.append(x_mid)
                anchors_z.append(z_mid)
                spans.append(2.0 * (Q.b - Q.a))
            t_all, g_all = trace_batch(
                G,
                np.asarray(anchors_x),
                np.asarray(anchors_z),
                np.asarray(spans),
                params.trace_n_half,
            )
            base = 0
            for vid, probes in entries:
                v = tree.vertices[vid]
                Q = v.quad
                lo4, hi4 = Q.enlarged_base(4.0)
                worst = 0.0
                for k in range(probes):
                    row = base + k
                    sel = (t_all[row] >= lo4) & (t_all[row] <= hi4)
                    xs = t_all[row][sel]
                    ref = _parabola_through(v.fit.affine, anchors_x[row], anchors_z[row], xs)
                    worst = max(worst, float(np.max(np.abs(g_all[row][sel] - ref))))
                ratio = worst / (params.zeta * Q.delta_z) if probes else math.nan
                ok = (ratio <= 1.0) if probes else True
                if probes:
                    probe_dev[vid] = ratio
                if ok:
                    mid_curves[vid] = curve_from_batch(
                        G, t_all[base + probes], g_all[base + probes]
                    )
                decisions[vid] = "horizontal" if ok else "vertical"
                base += probes + 1

        # apply the decisions
        next_level = []
        for vid in level:
            v = tree.vertices[vid]
            choice = decisions[vid]
            dev = probe_dev.get(vid, math.nan)
            if choice == "leaf":
                tree.vertices[vid] = replace(v, cut="leaf", curve_dev_ratio=dev)
                continue
            fallback = False
            if choice == "horizontal":
                try:
                    kids = cut_horizontal(
                        G, v.quad, params.trace_n_half, mid_curve=mid_curves[vid]
                    )
                except CutRejected:
                    kids = cut_vertical(v.quad)
                    choice, fallback = "vertical", True
            else:
                kids = cut_vertical(v.quad)
            ids = []
            for child in kids:
                cid = len(tree.vertices)
                tree.vertices.append(
                    PatchVertex(
                        vid=cid,
                        parent=vid,
                        depth=v.depth + 1,
                        quad=child,
                        area=area(child),
                    )
                )
                ids.append(cid)
            tree.vertices[vid] = replace(
                v, cut=choice, children=tuple(ids), curve_dev_ratio=dev, fallback=fallback
            )
            next_level.extend(ids)
        level = next_level
    return tree


def weight(tree: PatchworkTree, ids) -> float:
    """Sum of alpha^-4 |Q| over the vertex set."""
    return float(
        sum(tree.vertices[i].alpha ** -4 * tree.vertices[i].area for i in ids)
    )


@dataclass(frozen=True)
class CarlesonReport:
    max_ratio: float
    argmax_vid: int
    bound: float

    @property
    def ok(self) -> bool:
        return self.max_ratio <= self.bound


def carleson_check(tree: PatchworkTree, C: float) -> CarlesonReport:
    """Weighted packing of vertically-cut descendants against C |Q_v|."""
    n = len(tree.vertices)
    acc = np.zeros(n)
    for v in reversed(tree.vertices):
        own = v.alpha ** -4 * v.area if v.cut == "vertical" else 0.0
        acc[v.vid] = own + sum(acc[c] for c in v.children)
    ratios = np.array([acc[v.vid] / v.area for v in tree.vertices])
    k = int(np.argmax(ratios))
    return CarlesonReport(max_ratio=float(ratios[k]), argmax_vid=k, bound=C)


@dataclass(frozen=True)
class CoherentSet:
    """Vertex set with a unique max, interval-closed and sibling-complete."""

    ids: frozenset
    max_id: int

    def __post_init__(self):
        if self.max_id not in self.ids:
            raise ValueError("max element must belong to the set")


def validate_coherent(tree: PatchworkTree, S: CoherentSet) -> None:
    ids = S.ids
    for vid in ids:
        # walk up to the max; everything between must be present
        cur = vid
        while cur != S.max_id:
            cur = tree.vertices[cur].parent
            if cur == -1:
                raise ValueError(f"vertex {vid} is not a descendant of max {S.max_id}")
            if cur not in ids:
                raise ValueError(f"interval closure fails at {cur}")
    for vid in ids:
        kids = tree.vertices[vid].children
        if kids:
            inside = sum(1 for c in kids if c in ids)
            if inside not in (0, len(kids)):
                raise ValueError(f"sibling completeness fails below {vid}")


def min_elements(tree: PatchworkTree, S: CoherentSet):
    """Minimal vertices of a coherent set (their pieces tile the max quad)."""
    return sorted(
        vid
        for vid in S.ids
        if not any(c in S.ids for c in tree.vertices[vid].children)
    )


def coherent_slice_S_i(tree: PatchworkTree, i: int) -> CoherentSet:
    """S_i: vertices at least 4^-i of the root height; validated coherent.

    Raises SliceUnderflowError when a minimal piece is a depth-capped
    leaf too tall for the slice (its height should have been split
    further).
    """
    if i < 0:
        raise ValueError("slice index must be >= 0")
    h0 = tree.root.quad.delta_z
    cutoff = 2.0 ** (-2 * i) * h0
    ids = frozenset(v.vid for v in tree.vertices if v.quad.delta_z >= cutoff)
    S = CoherentSet(ids=ids, max_id=0)
    validate_coherent(tree, S)
    for vid in min_elements(tree, S):
        v = tree.vertices[vid]
        if not v.children and v.quad.delta_z >= 4.0 * cutoff and i > 0:
            raise SliceUnderflowError(
                f"leaf {vid} with height {v.quad.delta_z} cannot resolve slice {i}"
            )
    return S


def evaluate_g_S(tree: PatchworkTree, S: CoherentSet, xs, zs):
    """Piecewise-affine approximant glued from the minimal pieces.

    Points on no piece (numerical boundaries) take the nearest piece and
    are flagged.  Returns (values, fallback_mask).
    """
    xs = np.asarray(xs, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    vals = np.full(xs.shape, np.nan)
    assigned = np.zeros(xs.shape, dtype=bool)
    pieces = min_elements(tree, S)
    for vid in pieces:
        v = tree.vertices[vid]
        l = v.affine if v.affine is not None else AffineMap(0.0, 0.0)
        inside = v.quad.contains(xs, zs) & ~assigned
        vals[inside] = l(xs[inside])
        assigned |= inside
    miss = ~assigned
    if np.any(miss):
        mx, mz = xs[miss], zs[miss]
        best = np.full(mx.shape, np.inf)
        out = np.zeros(mx.shape)
        for vid in pieces:
            v = tree.vertices[vid]
            Q = v.quad
            dx = np.maximum(np.maximum(Q.a - mx, mx - Q.b), 0.0)
            xc = np.clip(mx, Q.a, Q.b)
            dz = np.maximum(np.maximum(Q.g1(xc) - mz, mz - Q.g2(xc)), 0.0)
            dd = dx + dz
            better = dd < best
            l = v.affine if v.affine is not None else AffineMap(0.0, 0.0)
            out[better] = l(mx[better])
            best[better] = dd[better]
        vals[miss] = out
    return vals, miss


def lp_approx_check(tree: PatchworkTree, p: float, grid=(16, 8)):
    """||l_v - f||_{L_p(Q_v)} / (dz/dx |Q|^{1/p}) over horizontally-cut vertices.

    Returns (max_ratio, rows) with one (vid, ratio) row per vertex.
    """
    if not (1.0 <= p < 5.0):
        raise ValueError("p must lie in [1, 5)")
    G = tree.graph
    rows = []
    for vid in tree.horizontal_ids():
        v = tree.vertices[vid]
        X, Z, W = quad_grid(v.quad, *grid)
        resid = np.abs(G.eval(X, Z) - v.affine(X))
        norm = float(np.sum(W * resid ** p) ** (1.0 / p))
        denom = v.quad.delta_z / v.quad.delta_x * v.area ** (1.0 / p)
        rows.append((vid, norm / denom if denom > 0 else math.inf))
    max_ratio = max((r for _, r in rows), default=0.0)
    return max_ratio, rows


def partition_report(tree: PatchworkTree):
    """Worst relative area mismatch |Q_w| + |Q_w'| vs |Q_v| over internal vertices."""
    worst = 0.0
    for v in tree.vertices:
        if v.children:
            total = sum(tree.vertices[c].area for c in v.children)
            worst = max(worst, abs(total - v.area) / v.area)
    return worst


def h_subtree(tree: PatchworkTree, wid: int):
    """h-descendants of a horizontally-cut vertex (paths of horizontal cuts)."""
    out = {wid}
    stack = [wid]
    while stack:
        v = tree.vertices[stack.pop()]
        if v.cut == "horizontal":
            for c in v.children:
                out.add(c)
                stack.append(c)
    return CoherentSet(ids=frozenset(out), max_id=wid)


def r_set(tree: PatchworkTree, vid: int, j: int) -> CoherentSet:
    """Descendants of vid whose width is at least 2^-j of its width."""
    w0 = tree.vertices[vid].quad.delta_x
    ids = frozenset(
        d
        for d in tree.descendants(vid)
        if tree.vertices[d].quad.delta_x >= 2.0 ** -j * w0 * (1.0 - 1e-12)
    )
    return CoherentSet(ids=ids, max_id=vid)


def serialize_tree(tree: PatchworkTree) -> str:
    """Line-oriented records with stable column order.

    Columns: vid, parent, cut, a, b, dz, slope, alpha, l_a, l_b, residual.
    """
    buf = io.StringIO()
    buf.write("vid,parent,cut,a,b,dz,slope,alpha,l_a,l_b,residual\n")
    for v in tree.vertices:
        l = v.affine if v.affine is not None else AffineMap(math.nan, math.nan)
        resid = v.fit.normalized_residual if v.fit is not None else math.nan
        buf.write(
            f"{v.vid},{v.parent},{v.cut},{v.quad.a!r},{v.quad.b!r},"
            f"{v.quad.delta_z!r},{v.quad.slope!r},{v.alpha!r},"
            f"{l.a!r},{l.b!r},{resid!r}\n"
        )
    return buf.getvalue()
