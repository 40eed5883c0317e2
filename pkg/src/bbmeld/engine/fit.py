"""Empirical-Bayes fit of the log-variances and the integration grid around it."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from ..errors import ConvergenceError, IndefiniteHessianError, NumericalError, ValidationError
from ..timeline import BiasBasis, GpsSeries
from .gps_block import GpsBlockModel, GpsBlockPosterior, _check_identifiable

__all__ = ["OptConfig", "EbFit", "GridPoint", "HyperGrid", "eb_fit", "neg_hessian", "build_grid"]

# log-variance search box (km^2 per unit time)
THETA_BOUNDS = (-30.0, 15.0)


@dataclass(frozen=True)
class OptConfig:
    n_starts: int = 3
    start_spread: float = 1.5
    max_iter: int = 4000
    xatol: float = 1e-8
    fatol: float = 1e-11
    fd_rel_step: float = 1e-4
    theta_start: Optional[tuple] = None


@dataclass(frozen=True)
class EbFit:
    theta_hat: np.ndarray
    hessian: np.ndarray
    log_post_max: float
    n_evals: int


def _moment_start(model: GpsBlockModel) -> np.ndarray:
    d = model.gaps
    dy = np.diff(np.concatenate(([0.0], model.y_dev, [0.0])))
    s2h = max(np.sum(dy ** 2) / np.sum(d), 1e-8)
    resid = np.concatenate(([0.0], model.r[:-1] - model.y_dev, [model.r[-1]]))
    s2d = max(np.sum(np.diff(resid) ** 2) / np.sum(d), 1e-8)
    return np.log([s2h, s2d])


def neg_hessian(f, theta, rel_step: float = 1e-4) -> np.ndarray:
    """Negative Hessian of ``f`` at ``theta`` by central differences."""
    theta = np.asarray(theta, dtype=float)
    h = rel_step * np.maximum(1.0, np.abs(theta))
    n = len(theta)
    H = np.empty((n, n))
    f0 = f(theta)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = -(f(theta + ei) - 2.0 * f0 + f(theta - ei)) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            val = (f(theta + ei + ej) - f(theta + ei - ej) - f(theta - ei + ej) + f(theta - ei - ej)) / (4 * h[i] * h[j])
            H[i, j] = H[j, i] = -val
    return H


def eb_fit(x_g, y: GpsSeries, basis: BiasBasis, opt_config: Optional[OptConfig] = None,
           model: Optional[GpsBlockModel] = None) -> EbFit:
    """Maximize the marginal log posterior of ``theta`` by multi-start Nelder-Mead."""
    cfg = opt_config or OptConfig()
    _check_identifiable(y, basis)
    model = model or GpsBlockModel(x_g, y, basis)
    evals0 = model.n_evals

    def objective(th):
        try:
            return -model.log_posterior(th)
        except NumericalError:
            return np.inf

    if cfg.theta_start is not None:
        starts = [np.asarray(cfg.theta_start, dtype=float)]
    else:
        c = _moment_start(model)
        s = cfg.start_spread
        offsets = [(0.0, 0.0), (s, -s), (-s, s), (s, s), (-s, -s)]
        starts = [c + np.array(o) for o in offsets[: max(1, cfg.n_starts)]]
    bounds = [THETA_BOUNDS, THETA_BOUNDS]
    opts = dict(xatol=cfg.xatol, fatol=cfg.fatol, maxiter=cfg.max_iter, maxfev=2 * cfg.max_iter)

    best = None
    for st in starts:
        st = np.clip(st, THETA_BOUNDS[0] + 1, THETA_BOUNDS[1] - 1)
        res = optimize.minimize(objective, st, method="Nelder-Mead", bounds=bounds, options=opts)
        if best is None or res.fun < best.fun:
            best = res
    # restart from the best point with a fresh simplex to settle on the same optimum
    res = optimize.minimize(objective, best.x, method="Nelder-Mead", bounds=bounds,
                            options=dict(opts, initial_simplex=best.x + 0.05 * np.vstack([np.zeros(2), np.eye(2)])))
    if res.fun <= best.fun:
        best = res
    if not np.isfinite(best.fun):
        raise ConvergenceError("marginal posterior is not finite anywhere along the search")
    if not best.success:
        raise ConvergenceError(f"Nelder-Mead did not converge: {best.message}")
    theta = np.asarray(best.x, dtype=float)
    lo, hi = THETA_BOUNDS
    if np.any(theta - lo < 1e-3) or np.any(hi - theta < 1e-3):
        raise ConvergenceError(
            f"variance estimate ran to the search bound (theta={theta}); data carry no information on one variance"
        )
    H = neg_hessian(model.log_posterior, theta, cfg.fd_rel_step)
    H = 0.5 * (H + H.T)
    if not np.all(np.isfinite(H)) or np.min(np.linalg.eigvalsh(H)) <= 0:
        raise IndefiniteHessianError(
            "negative Hessian at the mode is not positive definite; "
            "try a different bias order Q or check the data"
        )
    return EbFit(theta, H, -float(best.fun), model.n_evals - evals0)


@dataclass(frozen=True)
class GridPoint:
    theta: np.ndarray
    weight: float
    log_post: float
    block: Optional[GpsBlockPosterior] = None


@dataclass(frozen=True)
class HyperGrid:
    points: list
    steps: dict
    capped: bool = False
    z: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __len__(self):
        return len(self.points)

    @property
    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.points])

    @property
    def thetas(self) -> np.ndarray:
        return np.array([p.theta for p in self.points])


def build_grid(theta_hat, hessian, model, delta_z: float = 1.0, delta_pi: float = 3.0,
               grid_cap: int = 25, with_blocks: bool = True) -> HyperGrid:
    """Rectangular grid in the eigenbasis of the inverse negative Hessian.

    Each of the four semi-axes is extended one ``delta_z`` step at a time while
    the log-density drop from the mode stays below ``delta_pi``.  ``model``
    needs ``log_posterior(theta)``; with ``with_blocks`` its ``posterior`` is
    evaluated at every node too.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    H = np.asarray(hessian, dtype=float)
    if delta_z <= 0 or delta_pi < 0:
        raise ValidationError("delta_z must be > 0 and delta_pi >= 0")
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise IndefiniteHessianError("Hessian passed to build_grid is not positive definite") from None
    lam, vecs = np.linalg.eigh(np.linalg.inv(H))
    scale = vecs * np.sqrt(lam)

    def theta_of(z):
        return theta_hat + scale @ z

    def lp(z):
        try:
            return model.log_posterior(theta_of(z))
        except NumericalError:
            return -np.inf

    lp0 = lp(np.zeros(2))
    steps = {}
    capped = False
    for axis in range(2):
        for sign, name in ((1, "+"), (-1, "-")):
            j = 0
            while j < grid_cap:
                z = np.zeros(2)
                z[axis] = sign * (j + 1) * delta_z
                if lp0 - lp(z) < delta_pi:
                    j += 1
                else:
                    break
            if j == grid_cap:
                capped = True
                warnings.warn(f"grid search along axis {axis + 1}{name} hit the cap of {grid_cap} steps")
            steps[f"{axis + 1}{name}"] = j

    j1 = np.arange(-steps["1-"], steps["1+"] + 1)
    j2 = np.arange(-steps["2-"], steps["2+"] + 1)
    zs = np.array([(a * delta_z, b * delta_z) for a in j1 for b in j2], dtype=float)
    lps = np.array([lp(z) for z in zs])
    w = np.exp(lps - np.max(lps))
    w /= np.sum(w)
    points = []
    for z, l, wi in zip(zs, lps, w):
        th = theta_of(z)
        block = model.posterior(th) if with_blocks and wi > 0 else None
        points.append(GridPoint(th, float(wi), float(l), block))
    return HyperGrid(points, steps, capped, zs)
