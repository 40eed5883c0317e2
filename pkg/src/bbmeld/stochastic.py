"""Brownian bridge and Brownian motion covariances, conditioning, exact samplers.

Indices are the same integer time points used everywhere else.  Covariances
are evaluated by formula; the ``*_matrix`` helpers exist for small oracles
and tests only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import ValidationError

__all__ = [
    "BridgeSpec",
    "bb_mean",
    "bb_cov",
    "bm_cov",
    "bb_cov_matrix",
    "bm_cov_matrix",
    "condition_on_endpoints",
    "sample_bridge",
    "sample_brownian_motion",
]


@dataclass(frozen=True)
class BridgeSpec:
    """``BB(a, b, t_s, t_e, sigma2)``: pinned at ``a`` at ``t_s`` and ``b`` at ``t_e``."""

    a: float
    b: float
    t_s: int
    t_e: int
    sigma2: float

    def __post_init__(self):
        if self.t_e - self.t_s < 1:
            raise ValidationError(f"bridge needs t_e > t_s, got {self.t_s}..{self.t_e}")
        if not (np.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise ValidationError(f"bridge variance must be >= 0, got {self.sigma2}")

    @property
    def length(self) -> int:
        return self.t_e - self.t_s


def _check_range(spec: BridgeSpec, *ts):
    for t in ts:
        if np.any(np.asarray(t) < spec.t_s) or np.any(np.asarray(t) > spec.t_e):
            raise ValidationError(f"time {t} outside bridge range [{spec.t_s}, {spec.t_e}]")


def bb_mean(spec: BridgeSpec, t):
    _check_range(spec, t)
    return spec.a + (spec.b - spec.a) * (np.asarray(t, dtype=float) - spec.t_s) / spec.length


def bb_cov(spec: BridgeSpec, s, t):
    _check_range(spec, s, t)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    lo = np.minimum(s, t)
    hi = np.maximum(s, t)
    return spec.sigma2 * (lo - spec.t_s) * (spec.t_e - hi) / spec.length


def bm_cov(sigma2: float, s, t, origin: int = 1):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < origin) or np.any(t < origin):
        raise ValidationError(f"Brownian motion times must be >= origin {origin}")
    return sigma2 * (np.minimum(s, t) - origin)


def bb_cov_matrix(spec: BridgeSpec, idx) -> np.ndarray:
    idx = np.asarray(idx)
    return bb_cov(spec, idx[:, None], idx[None, :])


def bm_cov_matrix(sigma2: float, idx, origin: int = 1) -> np.ndarray:
    idx = np.asarray(idx)
    return bm_cov(sigma2, idx[:, None], idx[None, :], origin)


def condition_on_endpoints(process: str, sigma2: float, t_k: int, t_k1: int, left_value: float,
                           right_value: float) -> BridgeSpec:
    """Law of the interior ``t_k+1 .. t_k1-1`` given the values at both ends.

    A Brownian bridge or a Brownian motion, once pinned at two times, is a
    bridge between them with the same variance scale, so both process kinds
    return the same spec.
    """
    if process not in ("BB", "BM"):
        raise ValidationError(f"process must be 'BB' or 'BM', got {process!r}")
    if t_k1 <= t_k + 1:
        raise ValidationError(f"empty interior between t={t_k} and t={t_k1}")
    return BridgeSpec(float(left_value), float(right_value), int(t_k), int(t_k1), float(sigma2))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_bridge(spec: BridgeSpec, rng_seed=None, method: str = "sequential") -> np.ndarray:
    """Exact draw over ``t_s..t_e`` (endpoints included).

    ``sequential`` runs the forward conditional recursion
    ``x[t] | x[t-1] ~ N(x[t-1] + (b - x[t-1]) / r, sigma2 (r - 1) / r)`` with
    ``r`` steps left; ``pinned_walk`` draws a random walk and subtracts the
    straight line through its end (same law, different construction).
    """
    rng = _rng(rng_seed)
    n = spec.length
    z = rng.standard_normal(n)
    if method == "sequential":
        out = np.empty(n + 1)
        _backend.kernels.bridge_sequential(z, float(spec.a), float(spec.b), float(spec.sigma2), out)
        return out
    if method == "pinned_walk":
        walk = np.concatenate(([0.0], np.cumsum(z) * np.sqrt(spec.sigma2)))
        frac = np.arange(n + 1) / n
        return spec.a + (spec.b - spec.a) * frac + walk - frac * walk[-1]
    raise ValidationError(f"unknown sampling method {method!r}")


def sample_brownian_motion(T: int, sigma2: float, rng_seed=None) -> np.ndarray:
    """Random walk on ``1..T`` starting at 0 with increment variance ``sigma2``."""
    rng = _rng(rng_seed)
    steps = rng.standard_normal(T - 1) * np.sqrt(sigma2)
    return np.concatenate(([0.0], np.cumsum(steps)))
