# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.  ``_kernels_py`` holds the reference numpy versions."""
from libc.math cimport sqrt, sin, cos, asin, atan2, hypot
from libc.stdint cimport int64_t

MAX_DIM = 8


def segment_moments(const double[::1] x, const int64_t[::1] gps_idx,
                    const double[:, ::1] seg_mean, const double[:, :, ::1] seg_cov,
                    double rho, double s2d, int q_order, double anchor, bint anchored_first,
                    double[::1] out_mean, double[::1] out_var):
    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t nseg = gps_idx.shape[0] - 1
    cdef int dim = q_order + 2
    cdef double c[8]
    cdef double zl[8]
    cdef double zr[8]
    cdef double work[8]
    cdef Py_ssize_t k, t, p, q, i, j
    cdef double xl, xr, a, ap, s, pw, m, v, inv_len, span
    if dim > MAX_DIM:
        raise ValueError("bias order too large for compiled kernel")
    for k in range(nseg):
        p = gps_idx[k]
        q = gps_idx[k + 1]
        if q - p < 2:
            continue
        span = <double>(q - p)
        inv_len = 1.0 / span
        if k == 0 and anchored_first:
            xl = anchor
            for i in range(q_order):
                zl[i] = 0.0
        else:
            xl = x[p]
            s = <double>p / <double>(T - 1)
            pw = 1.0
            for i in range(q_order):
                zl[i] = pw
                pw *= s
        xr = x[q]
        s = <double>q / <double>(T - 1)
        pw = 1.0
        for i in range(q_order):
            zr[i] = pw
            pw *= s
        for t in range(p + 1, q):
            a = (t - p) * inv_len
            ap = 1.0 - a
            s = <double>t / <double>(T - 1)
            pw = 1.0
            for i in range(q_order):
                c[i] = -rho * (pw - ap * zl[i] - a * zr[i])
                pw *= s
            c[q_order] = ap
            c[q_order + 1] = a
            m = rho * (x[t] - ap * xl - a * xr)
            for i in range(dim):
                m += c[i] * seg_mean[k, i]
            v = 0.0
            for i in range(dim):
                work[i] = 0.0
                for j in range(dim):
                    work[i] += seg_cov[k, i, j] * c[j]
                v += c[i] * work[i]
            out_mean[t] = m
            out_var[t] = v + rho * s2d * (t - p) * (q - t) * inv_len


def bridge_sequential(const double[::1] z, double a, double b, double sigma2, double[::1] out):
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t i
    cdef double r, prev
    out[0] = a
    prev = a
    for i in range(1, n + 1):
        r = <double>(n - i + 1)
        prev = prev + (b - prev) / r + sqrt(sigma2 * (r - 1.0) / r) * z[i - 1]
        out[i] = prev
    out[n] = b


def unproject_steps(const double[::1] de, const double[::1] dn, double lat0, double lon0,
                    double radius, double[::1] out_lat, double[::1] out_lon):
    cdef Py_ssize_t n = de.shape[0]
    cdef Py_ssize_t i
    cdef int pole = 0
    cdef double lat = lat0, lon = lon0, d, brg, lat2
    out_lat[0] = lat
    out_lon[0] = lon
    for i in range(n):
        d = hypot(de[i], dn[i]) / radius
        brg = atan2(de[i], dn[i])
        lat2 = asin(sin(lat) * cos(d) + cos(lat) * sin(d) * cos(brg))
        lon = lon + atan2(sin(brg) * sin(d) * cos(lat), cos(d) - sin(lat) * sin(lat2))
        lat = lat2
        if cos(lat) < 1e-12:
            pole += 1
        out_lat[i + 1] = lat
        out_lon[i + 1] = lon
    return pole
