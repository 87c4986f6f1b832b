"""Intrinsic Lipschitz graphs over the vertical plane {y=0}.

A graph is a function psi on (x, z) together with a certified upper
bound on its intrinsic Lipschitz constant and an evaluation rectangle.
The module ships the generator families used by the experiments: exact
affine planes, polynomial and trigonometric test surfaces, and the
multiscale bump families whose aspect-ratio schedule drives the
exponent experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import HPoint, dist_point_to_arrays

__all__ = [
    "Rect",
    "IntrinsicGraph",
    "BumpFamilySpec",
    "CertificationError",
    "OutOfDomainError",
    "graph_map",
    "graph_map_arrays",
    "verify_intrinsic_lipschitz",
    "make_affine",
    "make_quadratic",
    "make_wave",
    "make_bump_family",
    "graph_from_config",
    "graph_to_config",
    "surface_measure_ratio",
    "DEPTH_DECAY",
]


class CertificationError(ValueError):
    """A generator failed its intrinsic Lipschitz certification."""


class OutOfDomainError(ValueError):
    """Evaluation requested outside the graph's domain rectangle."""


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in the (x, z) plane."""

    x0: float
    x1: float
    z0: float
    z1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.z0 < self.z1):
            raise ValueError("degenerate rectangle")

    def contains(self, x, z) -> bool:
        return bool(
            np.all(x >= self.x0)
            and np.all(x <= self.x1)
            and np.all(z >= self.z0)
            and np.all(z <= self.z1)
        )

    def contains_rect(self, other: "Rect") -> bool:
        return (
            other.x0 >= self.x0
            and other.x1 <= self.x1
            and other.z0 >= self.z0
            and other.z1 <= self.z1
        )


@dataclass(frozen=True)
class IntrinsicGraph:
    """psi plus a certified Lipschitz constant and evaluation domain.

    ``psi`` must accept numpy arrays (x, z) and evaluate elementwise;
    evaluation is deterministic and reentrant.  ``grad`` optionally
    returns (d psi/dx, d psi/dz) for closed forms that have one.
    """

    psi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lip_constant: float
    domain: Rect
    provenance: str
    name: str = "anonymous"
    params: dict = field(default_factory=dict)
    grad: Optional[Callable[[np.ndarray, np.ndarray], tuple]] = None
    core: Optional[Rect] = None  # where certification sampling concentrates

    def __post_init__(self):
        if not (0.0 < self.lip_constant < 1.0):
            raise ValueError("lip_constant must lie in (0, 1)")

    def eval(self, x, z, check_domain: bool = True):
        x = np.asarray(x, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        if check_domain and not self.domain.contains(x, z):
            raise OutOfDomainError(
                f"evaluation outside domain {self.domain} of graph {self.name!r}"
            )
        return self.psi(x, z)


def graph_map(G: IntrinsicGraph, v) -> HPoint:
    """Graph parametrization of a single V0-point: v -> v * Y^psi(v).

    Accepts an HPoint on {y=0} or an (x, z) pair; the image has
    y = psi(v) and projects back to v under the {y=0} projection.
    """
    if isinstance(v, HPoint):
        vx, vz = v.x, v.z
    else:
        vx, vz = float(v[0]), float(v[-1])
    psi_v = float(G.eval(vx, vz))
    return HPoint(vx, psi_v, vz + 0.5 * vx * psi_v)


def graph_map_arrays(G: IntrinsicGraph, vx, vz, check_domain: bool = True):
    """Vectorized graph parametrization; returns (x, y, z) arrays."""
    vx = np.asarray(vx, dtype=np.float64)
    vz = np.asarray(vz, dtype=np.float64)
    psi_v = G.eval(vx, vz, check_domain=check_domain)
    return vx, psi_v, vz + 0.5 * vx * psi_v


def _sample_pairs(G: IntrinsicGraph, sample_count: int, seed: int):
    """Pairs of domain points mixing global and near-diagonal samples.

    Locals concentrate in the graph's core region (when set) and span
    separation scales over six decades, so fine structure is probed at
    its own scale.
    """
    rng = np.random.default_rng(seed)
    d = G.domain
    c = G.core if G.core is not None else d
    n_global = sample_count // 4
    n_local = sample_count - n_global

    gx1 = rng.uniform(d.x0, d.x1, n_global)
    gz1 = rng.uniform(d.z0, d.z1, n_global)
    gx2 = rng.uniform(d.x0, d.x1, n_global)
    gz2 = rng.uniform(d.z0, d.z1, n_global)

    lx1 = rng.uniform(c.x0, c.x1, n_local)
    lz1 = rng.uniform(c.z0, c.z1, n_local)
    scales = np.exp(rng.uniform(np.log(1e-6), 0.0, n_local))
    sx = scales * (c.x1 - c.x0)
    sz = scales ** 2 * (c.z1 - c.z0)
    lx2 = np.clip(lx1 + sx * rng.standard_normal(n_local), d.x0, d.x1)
    lz2 = np.clip(lz1 + sz * rng.standard_normal(n_local), d.z0, d.z1)

    x1 = np.concatenate([gx1, lx1])
    z1 = np.concatenate([gz1, lz1])
    x2 = np.concatenate([gx2, lx2])
    z2 = np.concatenate([gz2, lz2])
    return x1, z1, x2, z2


def _empirical_lipschitz(G: IntrinsicGraph, sample_count: int, seed: int):
    """Max sampled ratio |y(p)-y(q)| / d(p, q) over graph point pairs."""
    x1, z1, x2, z2 = _sample_pairs(G, sample_count, seed)
    px, py, pz = graph_map_arrays(G, x1, z1)
    qx, qy, qz = graph_map_arrays(G, x2, z2)
    # left-invariance: d(p,q) = ||p^-1 q||
    ix = qx - px
    iy = qy - py
    iz = qz - pz + 0.5 * (px * qy - qx * py)
    from ._kernels import koranyi_norm

    dd = np.asarray(koranyi_norm(ix, iy, iz))
    num = np.abs(qy - py)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(dd > 0.0, num / dd, 0.0)
    k = int(np.argmax(ratios))
    witness = (
        HPoint(float(px[k]), float(py[k]), float(pz[k])),
        HPoint(float(qx[k]), float(qy[k]), float(qz[k])),
    )
    return float(ratios[k]), witness


def verify_intrinsic_lipschitz(G: IntrinsicGraph, sample_count: int = 20000, seed: int = 0) -> float:
    """Empirical intrinsic Lipschitz constant from sampled graph pairs.

    Raises CertificationError (naming the witness pair) if some sampled
    pair exceeds the graph's certified constant beyond 1e-9.
    """
    if sample_count < 2:
        raise ValueError("sample_count must be >= 2")
    value, witness = _empirical_lipschitz(G, sample_count, seed)
    if value > G.lip_constant + 1e-9:
        raise CertificationError(
            f"graph {G.name!r} claims L={G.lip_constant} but the pair "
            f"{witness[0]} , {witness[1]} has ratio {value}"
        )
    return value


_WIDE = Rect(-1024.0, 1024.0, -1024.0 ** 2, 1024.0 ** 2)


def make_affine(a: float, b: float, domain: Rect = _WIDE) -> IntrinsicGraph:
    """Graph of psi = a*x + b: the vertical plane {y = a x + b}.

    The intrinsic Lipschitz constant is |a|/sqrt(1+a^2), attained along
    the plane's horizontal directions.
    """
    lip = abs(a) / math.hypot(1.0, a) if a != 0.0 else 1e-12

    def psi(x, z, _a=a, _b=b):
        return _a * np.asarray(x, dtype=np.float64) + _b + 0.0 * np.asarray(z)

    def grad(x, z, _a=a):
        x = np.asarray(x, dtype=np.float64)
        return np.full_like(x, _a), np.zeros_like(x)

    return IntrinsicGraph(
        psi=psi,
        lip_constant=max(lip, 1e-12),
        domain=domain,
        provenance="closed-form",
        name="affine",
        params={"a": a, "b": b},
        grad=grad,
    )


def _sampled_certificate(G: IntrinsicGraph, seed: int, samples: int = 60000) -> IntrinsicGraph:
    """Replace the provisional constant by a sampled certificate with margin.

    The measured pair supremum is inflated by a fixed safety factor;
    overestimating L only loosens the bounds that quote it, while the
    fresh-seed verifier guards against gross underestimates.
    """
    import dataclasses

    measured, _ = _empirical_lipschitz(G, samples, seed)
    certified = min(0.95, max(1.5 * measured, measured + 0.02))
    return dataclasses.replace(G, lip_constant=certified)


def make_quadratic(c: float, domain: Rect = Rect(-8.0, 8.0, -64.0, 64.0)) -> IntrinsicGraph:
    """Graph of psi = c*x^2 (z-independent).

    For z-independent psi the intrinsic constant is exactly
    m/sqrt(1+m^2) with m the sup of |psi'| over the domain: the y-gap of
    a pair is at most m times its x-gap, and the metric dominates the
    Euclidean (x, y)-distance.
    """
    m = 2.0 * abs(c) * max(abs(domain.x0), abs(domain.x1))
    if m >= 20.0:
        raise CertificationError("quadratic too steep to certify below L=1 comfortably")

    def psi(x, z, _c=c):
        x = np.asarray(x, dtype=np.float64)
        return _c * x * x + 0.0 * np.asarray(z)

    def grad(x, z, _c=c):
        x = np.asarray(x, dtype=np.float64)
        return 2.0 * _c * x, np.zeros_like(x)

    return IntrinsicGraph(
        psi=psi,
        lip_constant=max(m / math.hypot(1.0, m), 1e-12),
        domain=domain,
        provenance="closed-form",
        name="quadratic",
        params={"c": c, "x_half": max(abs(domain.x0), domain.x1)},
        grad=grad,
    )


def make_wave(
    amp: float,
    kx: float = 1.0,
    kz: float = 1.0,
    domain: Rect = Rect(-16.0, 16.0, -256.0, 256.0),
    seed: int = 1,
) -> IntrinsicGraph:
    """Smooth oscillatory surface psi = amp * sin(kx*x) * cos(kz*z)."""

    def psi(x, z, _a=amp, _kx=kx, _kz=kz):
        x = np.asarray(x, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        return _a * np.sin(_kx * x) * np.cos(_kz * z)

    def grad(x, z, _a=amp, _kx=kx, _kz=kz):
        x = np.asarray(x, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        return (
            _a * _kx * np.cos(_kx * x) * np.cos(_kz * z),
            -_a * _kz * np.sin(_kx * x) * np.sin(_kz * z),
        )

    G = IntrinsicGraph(
        psi=psi,
        lip_constant=0.95,
        domain=domain,
        provenance="closed-form",
        name="wave",
        params={"amp": amp, "kx": kx, "kz": kz},
        grad=grad,
    )
    return _sampled_certificate(G, seed)


@dataclass(frozen=True)
class BumpFamilySpec:
    """Layout of a multiscale bump family.

    Generation k (for k = 0 .. refinement_level) places bumps of
    half-width FILL/(nx 2^k) and the common aspect ratio, an exact
    anisotropic rescaling (x by 1/2, z by 1/4) of the previous
    generation.  Each generation owns every fourth column of the base
    lattice (round robin), so the generations' supports are disjoint and
    their multiscale contributions add exactly; each refinement level
    adds one more, finer, generation whose amplitude carries an extra
    factor DEPTH_DECAY relative to pure rescaling.  Bumps populate the
    central band of nz base rows.
    """

    bump_aspect: float = 2.0
    amplitude_scale: float = 0.05
    grid_counts: tuple = (64, 256)
    refinement_level: int = 0

    def __post_init__(self):
        if self.bump_aspect <= 0 or self.amplitude_scale <= 0:
            raise ValueError("bump_aspect and amplitude_scale must be positive")
        if self.refinement_level < 0:
            raise ValueError("refinement_level must be >= 0")


# relative amplitude decay per generation: the generation-k octave sums
# of gamma^s pick up DEPTH_DECAY^(s k), so s=2 totals keep growing
# (factor 2^-1/2 per level, partial sums 1, 1.71, 2.21, ...) while s=4
# totals stay within a factor 2 (factor 1/2 per level)
DEPTH_DECAY = 2.0 ** -0.25

# base-lattice columns cycle through this many generation classes
COLUMN_CLASSES = 4


class _BumpField:
    """Disjointly supported bump lattices, one per generation.

    Generation k places bumps at the centers of its dyadic sub-cells
    (the bump fills half the cell in each direction) but only inside
    base columns of class k mod COLUMN_CLASSES, and only within the
    central row band, so different generations never overlap.
    """

    FILL = 0.5

    def __init__(self, spec: BumpFamilySpec, seed: int):
        self.generations = []
        nx, nz = spec.grid_counts
        aspect = spec.bump_aspect
        for k in range(spec.refinement_level + 1):
            cell_x = 1.0 / (nx * 2 ** k)  # half-pitch of the x lattice
            rx = self.FILL * cell_x  # bump half-width
            rz = 2.0 * rx * rx / (aspect * aspect)  # so 2rx / sqrt(2rz) = aspect
            cell_z = rz / self.FILL
            mx = nx * 2 ** k
            mz = nz * 4 ** k  # keeps the populated band height constant
            # pure rescaling would give amp ~ rx; the extra decay per
            # generation separates the exponent regimes
            amp = spec.amplitude_scale * 2.0 * rx / (aspect * aspect) * DEPTH_DECAY ** k
            # random signs make the family generic; amplitudes stay
            # deterministic so generation statistics rescale exactly
            rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
            signs = rng.choice(np.array([-1, 1], dtype=np.int8), size=(mx, mz))
            self.generations.append((k, cell_x, cell_z, rx, rz, mx, mz, amp, signs))

    @property
    def band_half_height(self) -> float:
        _, _, cell_z, _, _, _, mz, _, _ = self.generations[0]
        return mz * cell_z

    def __call__(self, x, z):
        scalar = np.ndim(x) == 0 and np.ndim(z) == 0
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        z = np.atleast_1d(np.asarray(z, dtype=np.float64))
        if x.shape != z.shape:
            x, z = np.broadcast_arrays(x, z)
        out = np.zeros(x.shape, dtype=np.float64)
        for k, cell_x, cell_z, rx, rz, mx, mz, amp, coeff in self.generations:
            # bumps are strictly interior to their cells, so clipping the
            # indices is exact: out-of-lattice points land outside the
            # edge bump's support and get profile zero
            band = mz * cell_z
            ix = np.floor_divide(x + 1.0, 2.0 * cell_x).astype(np.int64)
            iz = np.floor_divide(z + band, 2.0 * cell_z).astype(np.int64)
            np.minimum(ix, mx - 1, out=ix)
            np.maximum(ix, 0, out=ix)
            np.minimum(iz, mz - 1, out=iz)
            np.maximum(iz, 0, out=iz)
            u = (x + 1.0 - (2.0 * ix + 1.0) * cell_x) / rx
            v = (z + band - (2.0 * iz + 1.0) * cell_z) / rz
            w = 1.0 - (u * u + v * v)
            np.maximum(w, 0.0, out=w)
            own = ((ix >> k) % COLUMN_CLASSES) == (k % COLUMN_CLASSES)
            out += np.where(own, amp * coeff[ix, iz] * (w * w * w), 0.0)
        return out[0] if scalar else out


def make_bump_family(
    spec: BumpFamilySpec,
    seed: int = 0,
    domain: Rect = Rect(-64.0, 64.0, -4096.0, 4096.0),
    sample_count: int = 40000,
) -> IntrinsicGraph:
    """Certified bump-family graph; raises CertificationError above L=1/2."""
    field_fn = _BumpField(spec, seed)
    G = IntrinsicGraph(
        psi=field_fn,
        lip_constant=0.5,
        domain=domain,
        provenance="bump-family",
        name="bump-family",
        params={
            "bump_aspect": spec.bump_aspect,
            "amplitude_scale": spec.amplitude_scale,
            "grid_nx": spec.grid_counts[0],
            "grid_nz": spec.grid_counts[1],
            "refinement": spec.refinement_level,
            "seed": seed,
            "band_half": field_fn.band_half_height,
        },
        core=Rect(-1.0, 1.0, -field_fn.band_half_height, field_fn.band_half_height),
    )
    value, witness = _empirical_lipschitz(G, sample_count, seed + 1)
    if value > 0.5:
        raise CertificationError(
            f"bump family exceeds L=1/2: ratio {value} at {witness[0]} , {witness[1]}"
        )
    return G


def graph_to_config(G: IntrinsicGraph) -> dict:
    """Flat key/value form of a generator, reproducible bit-for-bit."""
    out = {"name": G.name}
    for key, val in G.params.items():
        out[key] = repr(val) if not isinstance(val, str) else val
    return out


def graph_from_config(mapping) -> IntrinsicGraph:
    """Rebuild a generator from its flat key/value form."""
    name = mapping.get("name", "")
    get = lambda k, d: float(mapping.get(k, d))
    if name in ("affine", "plane", "zero"):
        return make_affine(get("a", 0.0), get("b", 0.0))
    if name == "quadratic":
        xh = get("x_half", 8.0)
        return make_quadratic(get("c", 0.1), domain=Rect(-xh, xh, -xh * xh, xh * xh))
    if name == "wave":
        return make_wave(get("amp", 0.05), get("kx", 1.0), get("kz", 1.0))
    if name == "bump-family":
        spec = BumpFamilySpec(
            bump_aspect=get("bump_aspect", 2.0),
            amplitude_scale=get("amplitude_scale", 0.05),
            grid_counts=(int(get("grid_nx", 4)), int(get("grid_nz", 4))),
            refinement_level=int(get("refinement", 0)),
        )
        return make_bump_family(spec, seed=int(get("seed", 0)))
    raise KeyError(f"unknown graph generator {name!r}")


def surface_measure_ratio(
    G: IntrinsicGraph,
    region: Rect,
    rho: float = 0.02,
    samples: int = 200000,
    seed: int = 0,
) -> float:
    """Monte-Carlo comparability of surface measure and projected area.

    Counts anisotropic boxes (rho, rho, rho^2) occupied by the image of
    random region points; N * rho^3 is a Hausdorff-measure surrogate for
    the graph patch, compared against the Lebesgue area of the region.
    Returns the ratio (a comparability factor, not an equality check).
    """
    rng = np.random.default_rng(seed)
    vx = rng.uniform(region.x0, region.x1, samples)
    vz = rng.uniform(region.z0, region.z1, samples)
    px, py, pz = graph_map_arrays(G, vx, vz)
    keys = np.stack(
        [
            np.floor(px / rho).astype(np.int64),
            np.floor(py / rho).astype(np.int64),
            np.floor(pz / (rho * rho)).astype(np.int64),
        ],
        axis=1,
    )
    n_boxes = np.unique(keys, axis=0).shape[0]
    h3_estimate = n_boxes * rho ** 3
    area = (region.x1 - region.x0) * (region.z1 - region.z0)
    return h3_estimate / area
