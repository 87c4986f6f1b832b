"""Minimal static SVG emission for pseudoquad boundaries and heat maps."""

from __future__ import annotations

import math

import numpy as np


def _viewbox(xs, zs, pad=0.05):
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    z0, z1 = float(np.min(zs)), float(np.max(zs))
    dx, dz = x1 - x0 or 1.0, z1 - z0 or 1.0
    return x0 - pad * dx, z0 - pad * dz, dx * (1 + 2 * pad), dz * (1 + 2 * pad)


def _heat_color(t: float) -> str:
    """Blue -> red through white, t in [0, 1]."""
    t = min(max(t, 0.0), 1.0)
    r = int(255 * min(1.0, 2 * t))
    b = int(255 * min(1.0, 2 * (1 - t)))
    g = int(255 * (1 - abs(2 * t - 1)))
    return f"rgb({r},{g},{b})"


def write_boundaries_svg(path, polylines, width=800):
    """Closed (x, z) polylines, one per pseudoquad, in data coordinates."""
    all_x = np.concatenate([p[0] for p in polylines])
    all_z = np.concatenate([p[1] for p in polylines])
    vx, vz, vw, vh = _viewbox(all_x, all_z)
    height = int(width * vh / vw) if vw > 0 else width
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="{vx} {vz} {vw} {vh}" preserveAspectRatio="none">',
        f'<g transform="translate(0,{2 * vz + vh}) scale(1,-1)">',
    ]
    stroke = vw / width
    for xs, zs in polylines:
        pts = " ".join(f"{float(x)},{float(z)}" for x, z in zip(xs, zs))
        lines.append(
            f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="{stroke}"/>'
        )
    lines.append("</g></svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_heatmap_svg(path, xs, zs, values, cell_w, cell_h, width=800):
    """Colored cells centered at (xs, zs); values on a log scale."""
    vals = np.asarray(values, dtype=np.float64)
    pos = vals[vals > 0]
    lo = math.log10(float(np.min(pos))) if len(pos) else 0.0
    hi = math.log10(float(np.max(pos))) if len(pos) else 1.0
    span = (hi - lo) or 1.0
    vx, vz, vw, vh = _viewbox(xs, zs)
    height = int(width * vh / vw) if vw > 0 else width
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="{vx} {vz} {vw} {vh}" preserveAspectRatio="none">',
        f'<g transform="translate(0,{2 * vz + vh}) scale(1,-1)">',
    ]
    for x, z, v in zip(xs, zs, vals):
        t = (math.log10(v) - lo) / span if v > 0 else 0.0
        lines.append(
            f'<rect x="{float(x) - cell_w / 2}" y="{float(z) - cell_h / 2}" '
            f'width="{cell_w}" height="{cell_h}" fill="{_heat_color(t)}"/>'
        )
    lines.append("</g></svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
