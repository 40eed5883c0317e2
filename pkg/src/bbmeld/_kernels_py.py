"""Reference implementations of the compiled kernels (same signatures)."""
import math

import numpy as np


def segment_moments(x, gps_idx, seg_mean, seg_cov, rho, s2d, q_order, anchor, anchored_first, out_mean, out_var):
    """Pointwise mean/variance of the path between consecutive fixes.

    For each segment ``[p, q]`` (0-based) the mean is linear in the segment
    state ``(beta, eta_p, eta_q)`` with coefficient row ``c``; the variance adds
    the conditional bridge term ``rho * s2d * (t-p)(q-t)/(q-p)``.  Only interior
    points are written.  With ``anchored_first`` the first segment uses the
    known start value ``anchor`` in place of ``x[p] - h(p)`` (DR error is zero
    at the start).
    """
    T = len(x)
    powers = np.arange(q_order)
    for k in range(len(gps_idx) - 1):
        p, q = int(gps_idx[k]), int(gps_idx[k + 1])
        if q - p < 2:
            continue
        t = np.arange(p + 1, q)
        a = (t - p) / (q - p)
        ap = 1.0 - a
        if k == 0 and anchored_first:
            xl = anchor
            zl = np.zeros(q_order)
        else:
            xl = x[p]
            zl = (p / (T - 1)) ** powers
        zr = (q / (T - 1)) ** powers
        zt = (t / (T - 1))[:, None] ** powers
        coef = np.empty((len(t), q_order + 2))
        coef[:, :q_order] = -rho * (zt - ap[:, None] * zl - a[:, None] * zr)
        coef[:, q_order] = ap
        coef[:, q_order + 1] = a
        out_mean[p + 1:q] = rho * (x[p + 1:q] - ap * xl - a * x[q]) + coef @ seg_mean[k]
        out_var[p + 1:q] = np.einsum("ij,jk,ik->i", coef, seg_cov[k], coef) + rho * s2d * (t - p) * (q - t) / (q - p)


def bridge_sequential(z, a, b, sigma2, out):
    n = len(z)
    out[0] = prev = a
    for i in range(1, n + 1):
        r = float(n - i + 1)
        prev = prev + (b - prev) / r + math.sqrt(sigma2 * (r - 1.0) / r) * z[i - 1]
        out[i] = prev
    out[n] = b


def unproject_steps(de, dn, lat0, lon0, radius, out_lat, out_lon):
    lat, lon = lat0, lon0
    out_lat[0], out_lon[0] = lat, lon
    pole = 0
    sin, cos = math.sin, math.cos
    for i in range(len(de)):
        d = math.hypot(de[i], dn[i]) / radius
        brg = math.atan2(de[i], dn[i])
        lat2 = math.asin(sin(lat) * cos(d) + cos(lat) * sin(d) * cos(brg))
        lon = lon + math.atan2(sin(brg) * sin(d) * cos(lat), cos(d) - sin(lat) * sin(lat2))
        lat = lat2
        if cos(lat) < 1e-12:
            pole += 1
        out_lat[i + 1], out_lon[i + 1] = lat, lon
    return pole
