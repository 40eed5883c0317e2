"""Posterior of the path strictly between two consecutive GPS fixes."""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import ValidationError
from ..timeline import BiasBasis


def segment_conditional(theta, block_mean, block_cov, x_segment, basis: BiasBasis, t_k: int, T: int,
                        left_anchor: Optional[float] = None):
    """Pointwise mean and variance over ``t_k+1 .. t_{k+1}-1``.

    Given the segment state ``zeta_k = (beta, eta(t_k), eta(t_{k+1}))`` the
    interior is Gaussian with mean
    ``a' eta_k + a eta_{k+1} + rho * [detail(t) - (h(t) - a' h(t_k) - a h(t_{k+1}))]``
    where ``detail(t) = X(t) - a' X(t_k) - a X(t_{k+1})`` and covariance
    ``rho * sigma2_D * R_k``.  Averaging over ``zeta_k ~ N(block_mean, block_cov)``
    adds ``c' block_cov c`` for the coefficient row ``c``.  Only the diagonal of
    ``R_k`` is needed, so nothing is inverted.

    ``left_anchor`` replaces ``X(t_k) - h(t_k)`` with the known start value on the
    first segment, where the DR error is zero.
    """
    theta = np.asarray(theta, dtype=float)
    sH, sD = np.exp(theta)
    rho = sH / (sH + sD)
    Q = basis.order_Q
    x_segment = np.asarray(x_segment, dtype=float)
    L = len(x_segment) - 1
    block_mean = np.asarray(block_mean, dtype=float)
    block_cov = np.asarray(block_cov, dtype=float)
    if L < 1:
        raise ValidationError("segment needs two end points")
    if block_mean.shape != (Q + 2,) or block_cov.shape != (Q + 2, Q + 2):
        raise ValidationError(f"segment state must have dimension Q+2={Q + 2}")
    t_k1 = t_k + L
    t = np.arange(t_k + 1, t_k1)
    a = (t - t_k) / L
    ap = 1.0 - a
    z_t = basis.design(t, T)
    z_r = basis.design([t_k1], T)[0]
    if left_anchor is None:
        x_l = x_segment[0]
        z_l = basis.design([t_k], T)[0]
    else:
        x_l = float(left_anchor)
        z_l = np.zeros(Q)
    coef = np.column_stack([-rho * (z_t - ap[:, None] * z_l - a[:, None] * z_r), ap, a])
    detail = x_segment[1:-1] - ap * x_l - a * x_segment[-1]
    mean = rho * detail + coef @ block_mean
    var = rho * sD * (t - t_k) * (t_k1 - t) / L + np.einsum("ij,jk,ik->i", coef, block_cov, coef)
    return mean, var
