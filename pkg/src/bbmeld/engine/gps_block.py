"""Posterior of the bias coefficients and the path at the GPS fixes.

Only DR values at the fixes enter here.  The path is handled as its
deviation ``e = eta - f`` from the straight line between the known end
points; the bridge and the DR error are Markov, so both precision matrices
are tridiagonal in the fix ordering and are written down from the gaps
``d_i = t_i - t_{i-1}`` without ever forming a covariance.
"""
from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from ..errors import SingularMatrixError, ValidationError
from ..timeline import BiasBasis, GpsSeries

__all__ = [
    "GpsBlockPosterior",
    "GpsBlockModel",
    "DetailStats",
    "detail_stats",
    "phi_log_posterior",
    "gps_block_posterior",
]


@dataclass(frozen=True)
class GpsBlockPosterior:
    """Gaussian posterior of ``(beta, eta at interior fixes)`` for one ``theta``."""

    mean: np.ndarray
    cov: np.ndarray
    q_order: int

    @property
    def beta_mean(self):
        return self.mean[: self.q_order]

    @property
    def eta_mean(self):
        return self.mean[self.q_order:]


@dataclass(frozen=True)
class DetailStats:
    """Sufficient statistics of the DR detail between fixes for the bias coefficients.

    Between fixes, ``X(t) - a' X(t_k) - a X(t_{k+1}) = J(t) beta + noise`` with
    noise covariance ``(sigma2_H + sigma2_D) R_k`` and ``R_k^{-1}`` the unit
    second-difference matrix, so all quadratic forms reduce to sums over
    first differences of the zero-padded sequences.
    """

    jj: np.ndarray
    jd: np.ndarray
    dd: float


def detail_stats(x_values, y: GpsSeries, basis: BiasBasis) -> DetailStats:
    """O(T) pass over the full DR path; ``x_values`` must start at the known position."""
    x_values = np.asarray(x_values, dtype=float)
    T = len(x_values)
    idx = y.indices
    t = np.arange(1, T + 1)
    seg = np.clip(np.searchsorted(idx, t, side="right") - 1, 0, y.K - 2)
    p = idx[seg]
    q = idx[seg + 1]
    a = (t - p) / (q - p)
    ap = 1.0 - a
    first = seg == 0
    x_l = np.where(first, y.values[0], x_values[p - 1])
    d = x_values - ap * x_l - a * x_values[q - 1]
    z = basis.design(t, T)
    z_l = np.where(first[:, None], 0.0, z[p - 1])
    J = z - ap[:, None] * z_l - a[:, None] * z[q - 1]
    d[idx - 1] = 0.0
    J[idx - 1] = 0.0
    dj = np.diff(J, axis=0)
    ddiff = np.diff(d)
    return DetailStats(dj.T @ dj, dj.T @ ddiff, float(ddiff @ ddiff))


def _tridiag(diag, off) -> np.ndarray:
    n = len(diag)
    m = np.diag(diag)
    if n > 1:
        i = np.arange(n - 1)
        m[i, i + 1] = off
        m[i + 1, i] = off
    return m


class GpsBlockModel:
    """Precomputed pieces of the fix-level model for fast repeated evaluation.

    Parameters
    ----------
    x_g : array, length K
        DR values at the GPS indices (the value at ``t_1`` is not used: the DR
        error is zero at the start).
    y : GpsSeries
    basis : BiasBasis
    detail : DetailStats, optional
        When given, :meth:`posterior` also conditions the bias coefficients on
        the DR detail between fixes, which makes it the exact conditional
        posterior given the whole DR path.  :meth:`log_posterior` always uses
        the fix-level data only.
    """

    def __init__(self, x_g, y: GpsSeries, basis: BiasBasis, detail: DetailStats | None = None):
        x_g = np.asarray(x_g, dtype=float)
        if x_g.shape != (y.K,):
            raise ValidationError(f"x_g has shape {x_g.shape}, expected ({y.K},)")
        self.y = y
        self.basis = basis
        self.Q = Q = basis.order_Q
        idx = y.indices
        self.T = T = int(idx[-1])
        self.K = K = y.K
        self.n = n = K - 2
        self.A, self.B = float(y.values[0]), float(y.values[-1])
        self.sigma2_G = float(y.sigma2_G)

        d = np.diff(idx).astype(float)
        self.gaps = d
        line = self.A + (self.B - self.A) * (idx - 1.0) / (T - 1.0)
        self.line = line
        self.y_dev = y.values[1:-1] - line[1:-1]
        self.r = x_g[1:] - line[1:]

        inv_d = 1.0 / d
        # bridge precision at interior fixes (unit variance scale)
        self.P_R = _tridiag(inv_d[:-1] + inv_d[1:], -inv_d[1:-1])
        # DR-error precision at fixes 2..K, origin at t_1
        self.P_C = _tridiag(np.append(inv_d[:-1] + inv_d[1:], inv_d[-1]), -inv_d[1:])

        U = np.zeros((n + 1, Q + n))
        U[:, :Q] = basis.design(idx[1:], T)
        U[np.arange(n), Q + np.arange(n)] = 1.0
        self.U = U
        self.UPU = U.T @ self.P_C @ U
        self.UPr = U.T @ (self.P_C @ self.r)
        self.PR_full = np.zeros((Q + n, Q + n))
        self.PR_full[Q:, Q:] = self.P_R
        self.D_full = np.zeros(Q + n)
        self.D_full[Q:] = 1.0 / self.sigma2_G
        self.rhs_y = np.zeros(Q + n)
        self.rhs_y[Q:] = self.y_dev / self.sigma2_G

        self.detail = detail if Q > 0 else None
        self.sum_log_d = float(np.sum(np.log(d)))
        self.n_evals = 0

        # first differences with zero padding: bridge residual (both ends) and DR residual (left end)
        diff_e = np.zeros((n + 1, n))
        diff_e[np.arange(n), np.arange(n)] = 1.0
        diff_e[np.arange(1, n + 1), np.arange(n)] = -1.0
        self._diff_e = diff_e
        diff_w = np.eye(n + 1) - np.eye(n + 1, k=-1)
        self._dw_r = diff_w @ self.r
        self._dw_U = diff_w @ U
        self._inv_gaps = inv_d
        self._diag = np.arange(Q + n) * (Q + n + 1)

    # -- core ---------------------------------------------------------------

    def _factor(self, theta, with_detail=False):
        try:
            sH, sD = math.exp(theta[0]), math.exp(theta[1])
        except OverflowError:
            sH = sD = math.inf
        if not (math.isfinite(sH) and math.isfinite(sD) and sH > 0 and sD > 0):
            raise ValidationError(f"non-finite variance parameters at theta={theta}")
        m1 = self.PR_full * (1.0 / sH) + self.UPU * (1.0 / sD)
        m1.flat[self._diag] += self.D_full
        m2 = self.rhs_y + self.UPr * (1.0 / sD)
        if with_detail and self.detail is not None:
            Q = self.Q
            m1[:Q, :Q] += self.detail.jj / (sH + sD)
            m2[:Q] += self.detail.jd / (sH + sD)
        if m1.size == 0:
            return sH, sD, (m1, True), m2
        c, info = lapack.dpotrf(m1, lower=1, clean=0, overwrite_a=1)
        if info != 0:
            raise SingularMatrixError(
                "M_G1 is not positive definite (collinear bias design or too few fixes for the bias order)"
            )
        if not np.isfinite(c.flat[self._diag]).all():
            raise SingularMatrixError("M_G1 factorization produced non-finite values")
        return sH, sD, (c, True), m2

    def log_posterior(self, theta) -> float:
        """Log density of ``theta = log(sigma2_H, sigma2_D)`` up to a constant (flat prior in theta)."""
        self.n_evals += 1
        theta = np.asarray(theta, dtype=float)
        sH, sD, cf, m2 = self._factor(theta)
        n, Q = self.n, self.Q
        if m2.size:
            zeta, info = lapack.dpotrs(cf[0], m2, lower=1)
            logdet_M1 = 2.0 * float(np.log(cf[0].flat[self._diag]).sum())
        else:
            zeta, logdet_M1 = m2, 0.0
        e = zeta[Q:]
        # residual quadratic forms evaluated at the conditional mode (no cancellation)
        de = self._diff_e @ e
        q_bridge = float(de @ (de * self._inv_gaps)) / sH
        ge = self.y_dev - e
        q_gps = float(ge @ ge) / self.sigma2_G
        dw = self._dw_r - self._dw_U @ zeta
        q_dr = float(dw @ (dw * self._inv_gaps)) / sD
        logdet_R = n * theta[0] + self.sum_log_d - math.log(self.T - 1.0)
        logdet_D = n * math.log(self.sigma2_G)
        logdet_C = (n + 1) * theta[1] + self.sum_log_d
        val = -0.5 * (logdet_R + logdet_D + logdet_C + logdet_M1 + q_bridge + q_gps + q_dr)
        if not math.isfinite(val):
            raise ValidationError(f"non-finite log posterior at theta={theta}")
        return float(val)

    def posterior(self, theta) -> GpsBlockPosterior:
        theta = np.asarray(theta, dtype=float)
        _, _, cf, m2 = self._factor(theta, with_detail=True)
        dim = self.Q + self.n
        if dim == 0:
            return GpsBlockPosterior(np.zeros(0), np.zeros((0, 0)), self.Q)
        zeta = linalg.cho_solve(cf, m2, check_finite=False)
        cov = linalg.cho_solve(cf, np.eye(dim), check_finite=False)
        cov = 0.5 * (cov + cov.T)
        mean = zeta.copy()
        mean[self.Q:] += self.line[1:-1]
        return GpsBlockPosterior(mean, cov, self.Q)

    def extended(self, block: GpsBlockPosterior):
        """Mean/cov over ``(beta, eta(t_1..t_K))`` with the pinned end points as constants."""
        Q, K = self.Q, self.K
        mean = np.empty(Q + K)
        mean[:Q] = block.beta_mean
        mean[Q] = self.A
        mean[Q + 1:Q + K - 1] = block.eta_mean
        mean[Q + K - 1] = self.B
        cov = np.zeros((Q + K, Q + K))
        keep = np.r_[np.arange(Q), Q + 1 + np.arange(K - 2)]
        cov[np.ix_(keep, keep)] = block.cov
        return mean, cov

    def segment_blocks(self, block: GpsBlockPosterior, segments=None):
        """Per-segment state ``zeta_k = (beta, eta(t_k), eta(t_{k+1}))`` mean and covariance."""
        mean, cov = self.extended(block)
        Q = self.Q
        if segments is None:
            segments = np.arange(self.K - 1)
        segments = np.asarray(segments)
        sel = np.empty((len(segments), Q + 2), dtype=np.int64)
        sel[:, :Q] = np.arange(Q)
        sel[:, Q] = Q + segments
        sel[:, Q + 1] = Q + segments + 1
        seg_mean = np.ascontiguousarray(mean[sel])
        seg_cov = np.ascontiguousarray(cov[sel[:, :, None], sel[:, None, :]])
        return seg_mean, seg_cov


def _check_identifiable(y: GpsSeries, basis: BiasBasis):
    if y.K < 3:
        raise ValidationError("need at least one interior GPS fix to estimate the variances")
    if not y.K - 2 > basis.order_Q:
        raise ValidationError(
            f"bias order Q={basis.order_Q} needs more than {basis.order_Q} interior fixes, have {y.K - 2}"
        )


def phi_log_posterior(theta, x_g, y: GpsSeries, basis: BiasBasis) -> float:
    """Log posterior of ``theta = (log sigma2_H, log sigma2_D)`` given the fix-level data."""
    _check_identifiable(y, basis)
    return GpsBlockModel(x_g, y, basis).log_posterior(theta)


def gps_block_posterior(theta, x_g, y: GpsSeries, basis: BiasBasis) -> GpsBlockPosterior:
    return GpsBlockModel(x_g, y, basis).posterior(theta)
