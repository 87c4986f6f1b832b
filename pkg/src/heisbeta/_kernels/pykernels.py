"""Numpy implementations of the numeric hot kernels.

This is the reference backend; ``cykernels`` is a compiled drop-in
replacement with identical semantics, selected at import time by
``heisbeta._kernels``.
"""

import numpy as np

BACKEND = "python"


def koranyi_norm(x, y, z):
    """Homogeneous group norm ((x^2+y^2)^2 + 16 z^2)^(1/4), elementwise."""
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0 and np.ndim(z) == 0
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    r2 = x * x + y * y
    out = np.power(r2 * r2 + 16.0 * z * z, 0.25)
    return float(out) if scalar else out


def fiber_distance(px, py, pz, vx, vz):
    """Distance from the point p to the cosets (vx, t, vz + vx*t/2), t real.

    The fourth power of the group norm along a coset is a quartic in t
    whose derivative is a depressed cubic with nonnegative linear
    coefficient, so the minimizer is the cubic's unique real root
    (evaluated in the cancellation-free Cardano form).
    """
    scalar = np.ndim(vx) == 0 and np.ndim(vz) == 0
    vx = np.asarray(vx, dtype=np.float64)
    vz = np.asarray(vz, dtype=np.float64)
    a = vx - px
    # z-part of p^-1 * (vx, t, vz + vx*t/2) is c1 + a*u/2 with u = t - py
    c1 = vz - pz + vx * py - 0.5 * px * py
    pcoef = 3.0 * a * a
    qcoef = 4.0 * a * c1
    sq_disc = np.abs(a) * np.sqrt(4.0 * c1 * c1 + a ** 4)
    wbig = -0.5 * qcoef - np.copysign(sq_disc, qcoef)
    cbr = np.cbrt(wbig)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(cbr != 0.0, cbr - pcoef / (3.0 * cbr), 0.0)
    val = (a * a + u * u) ** 2 + 16.0 * (c1 + 0.5 * a * u) ** 2
    out = np.power(val, 0.25)
    return float(out) if scalar else out


def lp_state(x, vals, w, a, b, p, eps, metric=0):
    """Objective/gradient/curvature sums of the smoothed weighted L_p fit.

    Objective: sum_i w_i * (r_i^2 + eps^2)^(p/2) with r_i = vals_i - a*x_i - b.
    metric 0 uses the true Hessian weights ((p-1) r^2 + eps^2); metric 1
    the Gauss-Newton surrogate (r^2 + eps^2), which stays well scaled for
    p < 2.  Returns (obj, ga, gb, haa, hab, hbb).
    """
    x = np.asarray(x, dtype=np.float64)
    vals = np.asarray(vals, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    r = vals - a * x - b
    s = r * r + eps * eps
    sp2 = np.power(s, 0.5 * p - 1.0)
    obj = float(np.sum(w * sp2 * s))
    base = w * p * sp2 * r
    ga = float(np.sum(base * -x))
    gb = float(-np.sum(base))
    if metric:
        curv = w * p * sp2
    else:
        curv = w * p * np.power(s, 0.5 * p - 2.0) * ((p - 1.0) * r * r + eps * eps)
    haa = float(np.sum(curv * x * x))
    hab = float(np.sum(curv * x))
    hbb = float(np.sum(curv))
    return obj, ga, gb, haa, hab, hbb


def power_residual(x, vals, w, a, b, p):
    """sum_i w_i * |vals_i - a*x_i - b|^p (the unsmoothed fit objective)."""
    x = np.asarray(x, dtype=np.float64)
    vals = np.asarray(vals, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    r = np.abs(vals - a * x - b)
    return float(np.sum(w * np.power(r, p)))
