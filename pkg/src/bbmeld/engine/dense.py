"""Exact joint posterior over the full path by dense linear algebra.

This is the brute-force reference for the segment-wise fast path: it uses
every DR value, builds the bridge and DR-error covariances entry by entry,
and inverts them explicitly.  Cost is cubic in ``T``; keep ``T`` small.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SingularMatrixError, ValidationError
from ..stochastic import BridgeSpec, bb_cov_matrix, bb_mean, bm_cov_matrix
from ..timeline import BiasBasis, GpsSeries

__all__ = ["DenseSystem", "dense_system", "dense_joint_posterior", "dense_track_moments"]


@dataclass(frozen=True)
class DenseSystem:
    m1: np.ndarray
    m2: np.ndarray
    m3: float


def dense_system(x, y: GpsSeries, theta, basis: BiasBasis, max_t: int = 2000) -> DenseSystem:
    """Information-form pieces ``M1, M2, M3`` for ``zeta = (beta, eta(2:T-1))``."""
    x = np.asarray(x, dtype=float)
    T = len(x)
    if T > max_t:
        raise ValidationError(f"dense oracle is capped at T={max_t}, got T={T}")
    if y.T != T or y.indices[0] != 1:
        raise ValidationError("GPS indices must run from 1 to T")
    sH, sD = np.exp(np.asarray(theta, dtype=float))
    Q = basis.order_Q
    A, B = float(y.values[0]), float(y.values[-1])
    inner = np.arange(2, T)
    n = T - 2

    bridge = BridgeSpec(A, B, 1, T, sH)
    R = bb_cov_matrix(bridge, inner)
    f = bb_mean(bridge, inner)
    C = bm_cov_matrix(sD, np.arange(2, T + 1), origin=1)
    gps_inner = y.indices[1:-1]
    G = np.zeros((len(gps_inner), n))
    G[np.arange(len(gps_inner)), gps_inner - 2] = 1.0
    Z = basis.design(np.arange(2, T + 1), T)

    U = np.zeros((T - 1, Q + n))
    U[:, :Q] = Z
    U[:n, Q:] = np.eye(n)
    V = np.zeros((n, Q + n))
    V[:, Q:] = np.eye(n)
    W = np.zeros((len(gps_inner), Q + n))
    W[:, Q:] = G
    xvec = np.concatenate((x[1:-1], [x[-1] - B]))
    yvec = y.values[1:-1]

    try:
        Rinv = np.linalg.inv(R)
        Cinv = np.linalg.inv(C)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("dense covariance is singular") from None
    Dinv = 1.0 / y.sigma2_G
    m1 = V.T @ Rinv @ V + Dinv * (W.T @ W) + U.T @ Cinv @ U
    m2 = V.T @ Rinv @ f + Dinv * (W.T @ yvec) + U.T @ Cinv @ xvec
    m3 = float(f @ Rinv @ f + Dinv * (yvec @ yvec) + xvec @ Cinv @ xvec)
    return DenseSystem(0.5 * (m1 + m1.T), m2, m3)


def dense_joint_posterior(x, y: GpsSeries, theta, basis: BiasBasis, max_t: int = 2000):
    """Exact posterior ``(mean, cov)`` of ``(beta, eta(2:T-1))`` at fixed ``theta``."""
    sys = dense_system(x, y, theta, basis, max_t)
    try:
        L = np.linalg.cholesky(sys.m1)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("M1 is not positive definite") from None
    Linv = np.linalg.inv(L)
    cov = Linv.T @ Linv
    return cov @ sys.m2, cov


def dense_track_moments(x, y: GpsSeries, theta, basis: BiasBasis, max_t: int = 2000):
    """Posterior mean and SD over ``1..T`` with the pinned end points filled in."""
    mean, cov = dense_joint_posterior(x, y, theta, basis, max_t)
    Q = basis.order_Q
    m = np.concatenate(([y.values[0]], mean[Q:], [y.values[-1]]))
    sd = np.concatenate(([0.0], np.sqrt(np.maximum(np.diag(cov)[Q:], 0.0)), [0.0]))
    return m, sd
