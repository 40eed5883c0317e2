"""Comparison methods: segment-wise DR correction and straight-line interpolation."""
from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .timeline import GpsSeries, Track1D, validate_inputs

__all__ = ["conventional_correct", "linear_interp"]


def _segment_weights(idx: np.ndarray, T: int):
    """Left/right fix positions (0-based) and interpolation weight for every t in 1..T."""
    t = np.arange(1, T + 1)
    seg = np.clip(np.searchsorted(idx, t, side="right") - 1, 0, len(idx) - 2)
    p, q = idx[seg], idx[seg + 1]
    return p - 1, q - 1, (t - p) / (q - p)


def conventional_correct(x: Track1D, y: GpsSeries) -> Track1D:
    """Shift each DR section onto its left fix and spread the closing gap evenly.

    Within ``[t_k, t_{k+1}]`` the corrected value is
    ``x(t) - x(t_k) + Y(t_k) + r_k (t - t_k) / (t_{k+1} - t_k)`` where ``r_k`` is
    the miss at ``t_{k+1}``.  The result passes through every fix exactly.

    Examples
    --------
    >>> y = GpsSeries(np.array([1, 3]), np.array([0.0, 4.0]))
    >>> conventional_correct(Track1D.from_values([0.0, 1.0, 2.0]), y).values.tolist()
    [0.0, 2.0, 4.0]
    """
    validate_inputs(x, y)
    xv = np.asarray(x.values, dtype=float)
    lo, hi, a = _segment_weights(y.indices, x.T)
    yv = np.empty(x.T)
    yv[y.indices - 1] = y.values
    out = (1.0 - a) * (xv - xv[lo] + yv[lo]) + a * (xv - xv[hi] + yv[hi])
    out[y.indices - 1] = y.values
    return Track1D(x.grid, out)


def linear_interp(y: GpsSeries, T: int | None = None) -> Track1D:
    """Straight lines between consecutive fixes on ``1..T``."""
    T = y.T if T is None else int(T)
    if y.K < 2:
        raise ValidationError(f"need at least 2 GPS fixes, got {y.K}")
    if y.indices[0] != 1 or y.indices[-1] != T:
        raise ValidationError(f"fixes must span 1..{T}, got {int(y.indices[0])}..{int(y.indices[-1])}")
    t = np.arange(1, T + 1, dtype=float)
    return Track1D.from_values(np.interp(t, y.indices.astype(float), y.values))
