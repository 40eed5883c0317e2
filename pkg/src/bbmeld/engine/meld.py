"""End-to-end melding: fit, grid, per-node fix posterior, segments, mixture."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import _backend
from ..errors import ValidationError
from ..timeline import BiasBasis, GpsSeries, PosteriorTrack, Track1D, VarianceParams, validate_inputs
from .fit import EbFit, GridPoint, HyperGrid, OptConfig, build_grid, eb_fit
from .gps_block import GpsBlockModel, detail_stats

__all__ = ["MeldConfig", "MeldFit", "fit_hyper", "meld", "posterior_at", "reanchor"]


@dataclass(frozen=True)
class MeldConfig:
    q_order: int = 0
    sigma2_g: float = 0.0625
    delta_z: float = 1.0
    delta_pi: float = 3.0
    grid_cap: int = 25
    dense_oracle_max_t: int = 2000
    max_t: int = 20_000_000
    phi: Optional[VarianceParams] = None
    detail_beta: bool = True
    opt: OptConfig = OptConfig()

    def __post_init__(self):
        BiasBasis(self.q_order)
        if not self.sigma2_g > 0:
            raise ValidationError("sigma2_g must be positive")
        if not self.delta_z > 0 or self.delta_pi < 0:
            raise ValidationError("delta_z must be > 0 and delta_pi >= 0")
        if self.grid_cap < 0:
            raise ValidationError("grid_cap must be >= 0")

    @classmethod
    def from_mapping(cls, m: dict) -> "MeldConfig":
        known = {k: m[k] for k in ("q_order", "sigma2_g", "delta_z", "delta_pi", "grid_cap",
                                   "dense_oracle_max_t", "max_t", "detail_beta") if k in m and m[k] is not None}
        unknown = set(m) - set(known) - {"phi", "sigma2_H", "sigma2_D"}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        phi = None
        if m.get("sigma2_H") is not None and m.get("sigma2_D") is not None:
            phi = VarianceParams(float(m["sigma2_H"]), float(m["sigma2_D"]))
        return cls(phi=phi, **known)


@dataclass(frozen=True)
class MeldFit:
    """Hyperparameter stage: fix-level model, optional EB fit, weighted grid."""

    model: GpsBlockModel
    fit: Optional[EbFit]
    grid: HyperGrid
    phi_hat: VarianceParams
    x_values: np.ndarray


def reanchor(x_values: np.ndarray, y: GpsSeries) -> np.ndarray:
    """Shift the DR path so it starts at the first (known) GPS position."""
    return x_values - x_values[0] + y.values[0]


def fit_hyper(x: Track1D, y: GpsSeries, basis: Optional[BiasBasis] = None,
              config: Optional[MeldConfig] = None) -> MeldFit:
    config = config or MeldConfig()
    basis = basis or BiasBasis(config.q_order)
    validate_inputs(x, y)
    if x.T > config.max_t:
        raise ValidationError(f"T={x.T} exceeds the configured cap max_t={config.max_t}")
    xv = reanchor(np.asarray(x.values, dtype=float), y)
    detail = detail_stats(xv, y, basis) if config.detail_beta and basis.order_Q > 0 else None
    model = GpsBlockModel(xv[y.indices - 1], y, basis, detail)
    if config.phi is not None:
        th = config.phi.theta
        gp = GridPoint(th, 1.0, float("nan"), model.posterior(th))
        grid = HyperGrid([gp], {"1+": 0, "1-": 0, "2+": 0, "2-": 0}, False, np.zeros((1, 2)))
        return MeldFit(model, None, grid, config.phi, xv)
    fit = eb_fit(None, y, basis, config.opt, model=model)
    grid = build_grid(fit.theta_hat, fit.hessian, model, config.delta_z, config.delta_pi, config.grid_cap)
    return MeldFit(model, fit, grid, VarianceParams.from_theta(fit.theta_hat), xv)


def _component(mf: MeldFit, gp: GridPoint, segments=None):
    """Mean and variance over ``1..T`` (0-based arrays) for one grid node."""
    model = mf.model
    T, Q = model.T, model.Q
    sH, sD = np.exp(gp.theta)
    rho = sH / (sH + sD)
    gidx = model.y.indices - 1
    mean = np.zeros(T)
    var = np.zeros(T)
    ext_mean, ext_cov = model.extended(gp.block)
    mean[gidx] = ext_mean[Q:]
    var[gidx] = np.diag(ext_cov)[Q:]
    if segments is None:
        seg_mean, seg_cov = model.segment_blocks(gp.block)
        _backend.kernels.segment_moments(mf.x_values, gidx, seg_mean, seg_cov, rho, sD, Q,
                                         model.A, True, mean, var)
    else:
        for k in segments:
            seg_mean, seg_cov = model.segment_blocks(gp.block, [k])
            _backend.kernels.segment_moments(mf.x_values, np.ascontiguousarray(gidx[k:k + 2]), seg_mean,
                                             seg_cov, rho, sD, Q, model.A, k == 0, mean, var)
    return mean, var


def _mixture(mf: MeldFit, segments=None):
    """Weighted mixture moments with a fixed-order running update (West 1979)."""
    T, Q = mf.model.T, mf.model.Q
    mu = np.zeros(T)
    ss = np.zeros(T)
    b_mu = np.zeros(Q)
    b_ss = np.zeros(Q)
    W = 0.0
    for gp in mf.grid.points:
        if gp.weight <= 0.0:
            continue
        m, v = _component(mf, gp, segments)
        W += gp.weight
        f = gp.weight / W
        delta = m - mu
        mu += f * delta
        ss += gp.weight * (v + delta * (m - mu))
        bm = gp.block.beta_mean
        bd = bm - b_mu
        b_mu += f * bd
        b_ss += gp.weight * (np.diag(gp.block.cov)[:Q] + bd * (bm - b_mu))
    return mu, np.maximum(ss / W, 0.0), b_mu, np.maximum(b_ss / W, 0.0)


def meld(x: Track1D, y: GpsSeries, basis: Optional[BiasBasis] = None,
         config: Optional[MeldConfig] = None) -> PosteriorTrack:
    """Posterior mean and SD of the true path at every time point."""
    config = config or MeldConfig()
    t0 = time.perf_counter()
    mf = fit_hyper(x, y, basis, config)
    t1 = time.perf_counter()
    mu, var, b_mu, b_var = _mixture(mf)
    mu[0], mu[-1] = y.values[0], y.values[-1]
    var[0] = var[-1] = 0.0
    t2 = time.perf_counter()
    extras = {
        "theta_hat": mf.phi_hat.theta.tolist(),
        "grid_steps": dict(mf.grid.steps),
        "grid_capped": mf.grid.capped,
        "grid_thetas": mf.grid.thetas.tolist(),
        "grid_weights": mf.grid.weights.tolist(),
        "hessian": None if mf.fit is None else mf.fit.hessian.tolist(),
        "backend": _backend.BACKEND,
        "timings": {"fit_s": t1 - t0, "mixture_s": t2 - t1},
    }
    return PosteriorTrack(mu, np.sqrt(var), b_mu, np.sqrt(b_var), mf.phi_hat, len(mf.grid), extras)


def posterior_at(x: Track1D, y: GpsSeries, t_indices, basis: Optional[BiasBasis] = None,
                 config: Optional[MeldConfig] = None, mf: Optional[MeldFit] = None):
    """Posterior mean and SD at selected 1-based indices, evaluating only their segments."""
    config = config or MeldConfig()
    mf = mf or fit_hyper(x, y, basis, config)
    t_indices = np.asarray(t_indices, dtype=np.int64)
    segs = np.unique(np.clip(np.searchsorted(y.indices, t_indices, side="right") - 1, 0, y.K - 2))
    mu, var, _, _ = _mixture(mf, segs)
    pos = t_indices - 1
    m, v = mu[pos].copy(), var[pos].copy()
    m[t_indices == 1] = y.values[0]
    m[t_indices == y.T] = y.values[-1]
    v[(t_indices == 1) | (t_indices == y.T)] = 0.0
    return m, np.sqrt(v)
