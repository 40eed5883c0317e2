"""Synthetic trips drawn from the melding model itself.

The true path is a Brownian bridge between the known endpoints, the DR path is
truth plus a polynomial bias plus a Brownian motion started at zero, and GPS
fixes are the truth plus iid Gaussian noise (exact at both ends).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ValidationError
from .stochastic import BridgeSpec, sample_bridge, sample_brownian_motion
from .timeline import MAX_Q, BiasBasis, GpsSeries, Track1D, VarianceParams

__all__ = [
    "DropoutPattern",
    "SimSpec",
    "simulate_trip",
    "make_bench_instance",
    "BENCH_PHI",
]

BENCH_PHI = (0.09, 0.05)
SLOT_SECONDS = 900


@dataclass(frozen=True)
class DropoutPattern:
    """One fix attempt every ``every`` steps from t=1, each succeeding with probability ``p``."""

    every: int
    p: float

    def __post_init__(self):
        if int(self.every) != self.every or self.every < 1:
            raise ValidationError(f"attempt interval must be a positive integer, got {self.every}")
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError(f"success probability must lie in [0, 1], got {self.p}")

    def draw(self, T: int, rng: np.random.Generator) -> np.ndarray:
        slots = np.arange(1 + self.every, T, self.every)
        hit = slots[rng.random(slots.size) < self.p]
        return np.concatenate(([1], hit, [T])).astype(np.int64)


@dataclass(frozen=True)
class SimSpec:
    """Generative settings for one synthetic trip.

    ``phi`` may hold zeros (noiseless limits), so it is stored as a plain pair;
    a :class:`VarianceParams` is accepted too.  ``gps_pattern`` is either a
    :class:`DropoutPattern` or an explicit sorted list of 1-based indices that
    must start at 1 and end at ``T``.
    """

    T: int
    gps_pattern: Union[DropoutPattern, Sequence[int]]
    phi: tuple = BENCH_PHI
    beta: tuple = ()
    sigma2_G: float = 0.0625
    endpoints: tuple = (0.0, 0.0)
    seed: int = 0
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 3:
            raise ValidationError(f"T must be an integer >= 3, got {self.T}")
        phi = self.phi
        if isinstance(phi, VarianceParams):
            phi = (phi.sigma2_H, phi.sigma2_D)
        phi = tuple(float(v) for v in phi)
        if len(phi) != 2 or not all(np.isfinite(v) and v >= 0 for v in phi):
            raise ValidationError(f"phi must be two non-negative variances, got {self.phi}")
        object.__setattr__(self, "phi", phi)
        beta = tuple(float(b) for b in self.beta)
        if len(beta) > MAX_Q or not all(np.isfinite(beta)):
            raise ValidationError(f"beta must hold at most {MAX_Q} finite values")
        object.__setattr__(self, "beta", beta)
        if not (np.isfinite(self.sigma2_G) and self.sigma2_G >= 0):
            raise ValidationError(f"sigma2_G must be non-negative, got {self.sigma2_G}")
        if len(self.endpoints) != 2 or not all(np.isfinite(self.endpoints)):
            raise ValidationError("endpoints must be two finite values")
        if not isinstance(self.gps_pattern, DropoutPattern):
            idx = np.asarray(self.gps_pattern, dtype=np.int64)
            if idx.ndim != 1 or idx.size < 2 or idx[0] != 1 or idx[-1] != self.T or np.any(np.diff(idx) <= 0):
                raise ValidationError("explicit GPS indices must increase strictly from 1 to T")
            object.__setattr__(self, "gps_pattern", tuple(int(i) for i in idx))

    @property
    def basis(self) -> BiasBasis:
        return BiasBasis(len(self.beta))


def simulate_trip(spec: SimSpec):
    """Draw ``(truth, x, y)`` for one trip.

    Independent child streams are spawned from ``spec.seed`` for the fix
    pattern, the true path, the DR error and the GPS noise, so changing one
    ingredient (say ``sigma2_G``) leaves the other draws untouched.

    Returns
    -------
    truth, x : Track1D
    y : GpsSeries
    """
    s_pat, s_eta, s_xi, s_gps = (np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(4))
    T = spec.T
    if isinstance(spec.gps_pattern, DropoutPattern):
        idx = spec.gps_pattern.draw(T, s_pat)
    else:
        idx = np.asarray(spec.gps_pattern, dtype=np.int64)
    A, B = (float(v) for v in spec.endpoints)
    sH, sD = spec.phi
    truth = sample_bridge(BridgeSpec(A, B, 1, T, sH), s_eta)
    xi = sample_brownian_motion(T, sD, s_xi)
    h = spec.basis.evaluate(spec.beta, np.arange(1, T + 1), T) if spec.beta else 0.0
    x = truth + h + xi
    noise = s_gps.standard_normal(idx.size) * np.sqrt(spec.sigma2_G)
    noise[0] = noise[-1] = 0.0
    y = GpsSeries(idx, truth[idx - 1] + noise, spec.sigma2_G)
    return Track1D.from_values(truth), Track1D.from_values(x), y


def _slot_indices(T: int, K: int, seed: int) -> tuple:
    """``K`` fixes: both ends plus ``K-2`` distinct 15-minute attempt slots."""
    slots = np.arange(1 + SLOT_SECONDS, T, SLOT_SECONDS)
    rng = np.random.default_rng(np.random.SeedSequence([seed, K]))
    pick = np.sort(rng.choice(slots, size=K - 2, replace=False))
    return (1, *pick.tolist(), T)


def make_bench_instance(scale: str = "small", seed: int = 0, beta: Optional[Sequence[float]] = (2.0, 10.0),
                        phi: tuple = BENCH_PHI, sigma2_G: float = 0.0625) -> SimSpec:
    """Benchmark trips at 1 Hz.

    ``small`` is T=5000 with an attempt every 50 steps at success rate 0.5
    (K about 50); ``trip1`` is six days with K=274 and ``trip2`` seven days with
    K=130, fixes placed on random 15-minute attempt slots.
    """
    beta = tuple(beta or ())
    if scale == "small":
        return SimSpec(5000, DropoutPattern(50, 0.5), phi, beta, sigma2_G, (0.0, 0.0), seed)
    if scale == "trip1":
        T, K = 518_400, 274
    elif scale == "trip2":
        T, K = 604_800, 130
    else:
        raise ValidationError(f"unknown scale {scale!r}; expected small, trip1 or trip2")
    return SimSpec(T, _slot_indices(T, K, seed), phi, beta, sigma2_G, (0.0, 0.0), seed)
