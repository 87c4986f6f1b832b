"""Group arithmetic on the first Heisenberg group.

Points live in R^3 with the twisted product
(x,y,z)(x',y',z') = (x+x', y+y', z+z' + (x y' - x' y)/2); the group norm
and its left-invariant metric, dilations, the nonlinear projection onto
the vertical plane {y=0}, horizontal lines and vertical planes all live
here.  Everything is immutable and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import fiber_distance, koranyi_norm as _norm_kernel

__all__ = [
    "HPoint",
    "ORIGIN",
    "HorizontalLine",
    "VerticalPlane",
    "V0",
    "mul",
    "inv",
    "koranyi_norm",
    "dist",
    "dilate",
    "project_pi",
    "mul_xyz",
    "dist_point_to_arrays",
    "fiber_distance",
]


@dataclass(frozen=True)
class HPoint:
    """A group element as real coordinates; z scales as length squared."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"coordinates must be finite, got {(self.x, self.y, self.z)}")

    def as_tuple(self):
        return (self.x, self.y, self.z)


ORIGIN = HPoint(0.0, 0.0, 0.0)


def mul(p: HPoint, q: HPoint) -> HPoint:
    """Group product of p and q."""
    return HPoint(
        p.x + q.x,
        p.y + q.y,
        p.z + q.z + 0.5 * (p.x * q.y - q.x * p.y),
    )


def inv(p: HPoint) -> HPoint:
    """Group inverse (-x, -y, -z)."""
    return HPoint(-p.x, -p.y, -p.z)


def koranyi_norm(p: HPoint) -> float:
    """((x^2+y^2)^2 + 16 z^2)^(1/4)."""
    return float(_norm_kernel(p.x, p.y, p.z))


def dist(p: HPoint, q: HPoint) -> float:
    """Left-invariant metric: the norm of p^-1 q."""
    return koranyi_norm(mul(inv(p), q))


def dilate(t: float, p: HPoint) -> HPoint:
    """Automorphism (x,y,z) -> (t x, t y, t^2 z); scales dist by t for t >= 0."""
    return HPoint(t * p.x, t * p.y, t * t * p.z)


def project_pi(p: HPoint) -> HPoint:
    """Projection along <Y>-cosets onto {y=0}: (x, 0, z - x y / 2).

    Idempotent and commutes with dilations.
    """
    return HPoint(p.x, 0.0, p.z - 0.5 * p.x * p.y)


@dataclass(frozen=True)
class HorizontalLine:
    """Coset v<aX + bY>; its direction has no z-component by construction."""

    basepoint: HPoint
    a: float
    b: float

    def __post_init__(self):
        if self.a == 0.0 and self.b == 0.0:
            raise ValueError("direction must be nonzero")

    @property
    def slope(self) -> float:
        return self.b / self.a if self.a != 0.0 else math.inf

    def point_at(self, t: float) -> HPoint:
        return mul(self.basepoint, HPoint(t * self.a, t * self.b, 0.0))


@dataclass(frozen=True)
class VerticalPlane:
    """Plane parallel to the z-axis.

    Finite slope m with offset c is the plane {y = m x + c}; infinite
    slope is the plane {x = c}, kept as a tagged variant so every
    vertical plane is representable.
    """

    slope: float
    offset: float

    @property
    def is_infinite_slope(self) -> bool:
        return math.isinf(self.slope)

    def contains(self, p: HPoint, tol: float = 0.0) -> bool:
        if self.is_infinite_slope:
            return abs(p.x - self.offset) <= tol
        return abs(p.y - (self.slope * p.x + self.offset)) <= tol

    def distance(self, p: HPoint) -> float:
        """Group distance from p to the plane.

        The z-component of p^-1 w is free as w ranges over the plane's
        vertical fiber, so the minimization collapses to the Euclidean
        distance between the (x, y) projections.
        """
        if self.is_infinite_slope:
            return abs(p.x - self.offset)
        return abs(self.slope * p.x - p.y + self.offset) / math.hypot(1.0, self.slope)


V0 = VerticalPlane(slope=0.0, offset=0.0)


def mul_xyz(px, py, pz, qx, qy, qz):
    """Vectorized group product on coordinate arrays."""
    return (
        px + qx,
        py + qy,
        pz + qz + 0.5 * (px * qy - qx * py),
    )


def dist_point_to_arrays(p: HPoint, qx, qy, qz):
    """Distances from a single point to an array of points."""
    ix, iy, iz = mul_xyz(-p.x, -p.y, -p.z, np.asarray(qx), np.asarray(qy), np.asarray(qz))
    return _norm_kernel(ix, iy, iz)
