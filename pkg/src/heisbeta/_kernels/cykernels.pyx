# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; drop-in replacement for pykernels."""

import numpy as np

cimport numpy as cnp
from libc.math cimport cbrt, copysign, fabs, pow, sqrt

cnp.import_array()

BACKEND = "compiled"


def koranyi_norm(object x, object y, object z):
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0 and np.ndim(z) == 0
    xb, yb, zb = np.broadcast_arrays(
        np.asarray(x, dtype=np.float64),
        np.asarray(y, dtype=np.float64),
        np.asarray(z, dtype=np.float64),
    )
    shape = xb.shape
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(xb.ravel())
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ya = np.ascontiguousarray(yb.ravel())
    cdef cnp.ndarray[cnp.float64_t, ndim=1] za = np.ascontiguousarray(zb.ravel())
    cdef Py_ssize_t n = xa.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i
    cdef double r2
    for i in range(n):
        r2 = xa[i] * xa[i] + ya[i] * ya[i]
        out[i] = pow(r2 * r2 + 16.0 * za[i] * za[i], 0.25)
    if scalar:
        return float(out[0])
    return out.reshape(shape)


def fiber_distance(double px, double py, double pz, object vx, object vz):
    scalar = np.ndim(vx) == 0 and np.ndim(vz) == 0
    vxb, vzb = np.broadcast_arrays(
        np.asarray(vx, dtype=np.float64), np.asarray(vz, dtype=np.float64)
    )
    shape = vxb.shape
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vxa = np.ascontiguousarray(vxb.ravel())
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vza = np.ascontiguousarray(vzb.ravel())
    cdef Py_ssize_t n = vxa.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i
    cdef double a, c1, pcoef, qcoef, sq_disc, wbig, cbr, u, val
    for i in range(n):
        a = vxa[i] - px
        c1 = vza[i] - pz + vxa[i] * py - 0.5 * px * py
        pcoef = 3.0 * a * a
        qcoef = 4.0 * a * c1
        sq_disc = fabs(a) * sqrt(4.0 * c1 * c1 + a * a * a * a)
        wbig = -0.5 * qcoef - copysign(sq_disc, qcoef)
        cbr = cbrt(wbig)
        if cbr != 0.0:
            u = cbr - pcoef / (3.0 * cbr)
        else:
            u = 0.0
        val = (a * a + u * u) * (a * a + u * u) + 16.0 * (c1 + 0.5 * a * u) * (c1 + 0.5 * a * u)
        out[i] = pow(val, 0.25)
    if scalar:
        return float(out[0])
    return out.reshape(shape)


def lp_state(object x, object vals, object w, double a, double b, double p, double eps, int metric=0):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] va = np.ascontiguousarray(vals, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wa = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = xa.shape[0]
    cdef double obj = 0.0, ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0
    cdef double r, s, sp2, base, curv
    cdef Py_ssize_t i
    for i in range(n):
        r = va[i] - a * xa[i] - b
        s = r * r + eps * eps
        sp2 = pow(s, 0.5 * p - 1.0)
        obj += wa[i] * sp2 * s
        base = wa[i] * p * sp2 * r
        ga += base * -xa[i]
        gb -= base
        if metric:
            curv = wa[i] * p * sp2
        else:
            curv = wa[i] * p * pow(s, 0.5 * p - 2.0) * ((p - 1.0) * r * r + eps * eps)
        haa += curv * xa[i] * xa[i]
        hab += curv * xa[i]
        hbb += curv
    return obj, ga, gb, haa, hab, hbb


def power_residual(object x, object vals, object w, double a, double b, double p):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] va = np.ascontiguousarray(vals, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wa = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = xa.shape[0]
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        acc += wa[i] * pow(fabs(va[i] - a * xa[i] - b), p)
    return acc
