"""Domain types for one projected coordinate of a path, plus CSV helpers.

All arithmetic happens on the unit grid ``1..T``; ``TimeGrid.dt_seconds`` is
carried along for reporting only.  Arrays stored on the frozen dataclasses are
made read-only so the values can be shared freely.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "TimeGrid",
    "Track1D",
    "GpsSeries",
    "VarianceParams",
    "BiasBasis",
    "PosteriorTrack",
    "validate_inputs",
    "credible_band",
    "read_series_csv",
    "write_csv",
]

MAX_Q = 6


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    t_count: int
    start_epoch: Optional[float] = None
    dt_seconds: float = 1.0

    def __post_init__(self):
        if int(self.t_count) != self.t_count or self.t_count < 3:
            raise ValidationError(f"t_count must be an integer >= 3, got {self.t_count}")
        if not self.dt_seconds > 0:
            raise ValidationError("dt_seconds must be positive")

    @property
    def index(self) -> np.ndarray:
        """1-based sample indices ``1..T``."""
        return np.arange(1, self.t_count + 1)


@dataclass(frozen=True)
class Track1D:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 1:
            raise ValidationError("track values must be one-dimensional")

    @classmethod
    def from_values(cls, values, dt_seconds: float = 1.0) -> "Track1D":
        values = np.asarray(values, dtype=float)
        return cls(TimeGrid(len(values), dt_seconds=dt_seconds), values)

    @property
    def T(self) -> int:
        return self.grid.t_count

    def __len__(self):
        return self.grid.t_count


@dataclass(frozen=True)
class GpsSeries:
    """Sparse fixes at 1-based ``indices``; first and last are the known endpoints."""

    indices: np.ndarray
    values: np.ndarray
    sigma2_G: float = 0.0625

    def __post_init__(self):
        object.__setattr__(self, "indices", _frozen(self.indices, dtype=np.int64))
        object.__setattr__(self, "values", _frozen(self.values))
        if self.indices.shape != self.values.shape or self.indices.ndim != 1:
            raise ValidationError(
                f"GPS indices {self.indices.shape} and values {self.values.shape} differ in shape"
            )

    @property
    def K(self) -> int:
        return len(self.indices)

    @property
    def T(self) -> int:
        return int(self.indices[-1])

    def drop(self, positions: Sequence[int]) -> "GpsSeries":
        """Copy without the fixes at the given 0-based positions."""
        keep = np.ones(self.K, dtype=bool)
        keep[list(positions)] = False
        return GpsSeries(self.indices[keep], self.values[keep], self.sigma2_G)


@dataclass(frozen=True)
class VarianceParams:
    sigma2_H: float
    sigma2_D: float

    def __post_init__(self):
        for name in ("sigma2_H", "sigma2_D"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive and finite, got {v}")

    @classmethod
    def from_theta(cls, theta) -> "VarianceParams":
        return cls(float(np.exp(theta[0])), float(np.exp(theta[1])))

    @property
    def theta(self) -> np.ndarray:
        return np.log([self.sigma2_H, self.sigma2_D])

    @property
    def rho(self) -> float:
        """Share of DR detail attributed to the true path."""
        return self.sigma2_H / (self.sigma2_H + self.sigma2_D)


@dataclass(frozen=True)
class BiasBasis:
    """Polynomial DR bias ``h(t) = sum_i beta_i s**(i-1)`` with ``s = (t-1)/(T-1)``.

    Powers of the normalized time keep the design well conditioned when ``T``
    runs into the millions.  ``order_Q == 0`` means no bias term.
    """

    order_Q: int = 0

    def __post_init__(self):
        if int(self.order_Q) != self.order_Q or not 0 <= self.order_Q <= MAX_Q:
            raise ValidationError(f"order_Q must be an integer in 0..{MAX_Q}, got {self.order_Q}")

    def design(self, t, T: int) -> np.ndarray:
        """Design matrix rows for 1-based indices ``t``; shape ``(len(t), Q)``."""
        s = (np.asarray(t, dtype=float) - 1.0) / (T - 1.0)
        return s[:, None] ** np.arange(self.order_Q)

    def evaluate(self, beta, t, T: int) -> np.ndarray:
        return self.design(t, T) @ np.asarray(beta, dtype=float)


@dataclass(frozen=True)
class PosteriorTrack:
    mean: np.ndarray
    sd: np.ndarray
    beta_mean: np.ndarray
    beta_sd: np.ndarray
    phi_hat: VarianceParams
    grid_size: int
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("mean", "sd", "beta_mean", "beta_sd"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def T(self) -> int:
        return len(self.mean)

    @property
    def apse(self) -> float:
        """Averaged posterior standard error over all time points."""
        return float(np.mean(self.sd))


def validate_inputs(x: Track1D, y: GpsSeries):
    """Check every invariant of the (DR track, GPS series) pair and return it unchanged."""
    idx, vals = y.indices, y.values
    if y.K < 2:
        raise ValidationError(f"need at least 2 GPS fixes, got {y.K}")
    steps = np.diff(idx)
    if np.any(steps <= 0):
        bad = int(np.argmax(steps <= 0))
        raise ValidationError(
            f"GPS indices are non-monotone at position {bad + 1} (t_index={int(idx[bad + 1])})"
        )
    if idx[0] != 1:
        raise ValidationError(f"first GPS index must be 1, got {int(idx[0])}")
    if idx[-1] != x.grid.t_count:
        raise ValidationError(
            f"dimension mismatch: last GPS index {int(idx[-1])} but DR track has T={x.grid.t_count}"
        )
    if len(x.values) != x.grid.t_count:
        raise ValidationError(
            f"dimension mismatch: DR track has {len(x.values)} values for T={x.grid.t_count}"
        )
    bad_x = np.flatnonzero(~np.isfinite(x.values))
    if bad_x.size:
        raise ValidationError(f"non-finite DR value at t={int(bad_x[0]) + 1}")
    bad_y = np.flatnonzero(~np.isfinite(vals))
    if bad_y.size:
        raise ValidationError(f"non-finite GPS value at t={int(idx[bad_y[0]])}")
    if not (np.isfinite(y.sigma2_G) and y.sigma2_G > 0):
        raise ValidationError(f"sigma2_G must be positive, got {y.sigma2_G}")
    return x, y


def credible_band(track: PosteriorTrack, level: float = 0.95):
    """Pointwise ``mean -/+ z * sd`` band with ``z`` the normal quantile at ``(1+level)/2``."""
    if not 0.0 < level < 1.0:
        raise ValidationError(f"level must lie in (0, 1), got {level}")
    z = NormalDist().inv_cdf(0.5 * (1.0 + level))
    half = z * np.asarray(track.sd)
    return track.mean - half, track.mean + half


# --- CSV ---------------------------------------------------------------------------


def read_series_csv(path) -> dict:
    """Read a headered numeric CSV into a dict of column arrays (``t_index`` as int)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if "t_index" not in header:
        raise ValidationError(f"{path}: missing t_index column")
    cols = {}
    for j, name in enumerate(header):
        try:
            data = [float(r[j]) for r in rows]
        except (ValueError, IndexError) as exc:
            raise ValidationError(f"{path}: bad value in column {name!r}: {exc}") from None
        cols[name] = np.asarray(data)
    t = cols["t_index"]
    if np.any(t != np.round(t)):
        raise ValidationError(f"{path}: t_index must be integral")
    cols["t_index"] = t.astype(np.int64)
    return cols


def write_csv(path, columns: dict) -> None:
    """Write equal-length columns; floats use round-trip repr so reruns are byte-identical."""
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    n = len(arrays[0])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(n):
            w.writerow(
                [int(a[i]) if np.issubdtype(a.dtype, np.integer) else repr(float(a[i])) for a in arrays]
            )
