"""Dead reckoning from tag accelerometer, magnetometer and depth streams.

World frame is North-East-Down; body ``x`` points along the direction of
travel.  Attitudes ``O`` map world vectors to body vectors (``a = O g``), so the
heading in world coordinates is the first row of ``O``.  Positions come out in
km, speeds are in m/s and depth in m.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericalError, ValidationError
from .timeline import Track1D, read_series_csv, write_csv

__all__ = [
    "GRAVITY_NED",
    "MAG_NED",
    "EPS_OZ",
    "TagStream",
    "DraResult",
    "SpeedUnobservableError",
    "smooth_stream",
    "wahba_solve",
    "wahba_solve_batch",
    "speed_from_depth",
    "dra_reconstruct",
    "simulate_tag",
    "read_tag_csv",
    "write_tag_csv",
]

GRAVITY_NED = (0.0, 0.0, 1.0)
# unit field with 60 degree inclination, pointing north and down
MAG_NED = (0.5, 0.0, float(np.sqrt(0.75)))
EPS_OZ = 0.05
TAG_COLUMNS = ("ax", "ay", "az", "mx", "my", "mz", "depth_m")


class SpeedUnobservableError(NumericalError):
    """Vertical heading component too small to turn depth rate into speed."""


def _vec3(v, name) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (3,) or not np.all(np.isfinite(v)) or np.linalg.norm(v) == 0:
        raise ValidationError(f"{name} must be a finite nonzero 3-vector")
    return v


def _check_refs(g, m):
    g, m = _vec3(g, "gravity reference"), _vec3(m, "magnetic reference")
    if np.linalg.norm(np.cross(g, m)) <= 1e-12 * np.linalg.norm(g) * np.linalg.norm(m):
        raise ValidationError("gravity and magnetic references are parallel; attitude is undetermined")
    return g, m


@dataclass(frozen=True)
class TagStream:
    accel: np.ndarray
    mag: np.ndarray
    depth: np.ndarray
    dt: float
    gravity_ref: tuple = GRAVITY_NED
    mag_ref: tuple = MAG_NED
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        acc = np.asarray(self.accel, dtype=float)
        mag = np.asarray(self.mag, dtype=float)
        dep = np.asarray(self.depth, dtype=float)
        if acc.ndim != 2 or acc.shape[1] != 3 or mag.shape != acc.shape or dep.shape != (acc.shape[0],):
            raise ValidationError(
                f"tag series lengths differ: accel {acc.shape}, mag {mag.shape}, depth {dep.shape}"
            )
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValidationError(f"dt must be positive, got {self.dt}")
        for name, a in (("accel", acc), ("mag", mag), ("depth", dep)):
            bad = np.flatnonzero(~np.all(np.isfinite(a.reshape(len(dep), -1)), axis=1))
            if bad.size:
                raise ValidationError(f"non-finite {name} sample at t={int(bad[0]) + 1}")
        g, m = _check_refs(self.gravity_ref, self.mag_ref)
        for name, a in (("accel", acc), ("mag", mag), ("depth", dep)):
            a = a.copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "gravity_ref", tuple(g))
        object.__setattr__(self, "mag_ref", tuple(m))

    def __len__(self):
        return len(self.depth)


def _running_mean(a: np.ndarray, window: int) -> np.ndarray:
    n = a.shape[0]
    h = window // 2
    c = np.concatenate([np.zeros((1,) + a.shape[1:]), np.cumsum(a, axis=0)])
    i = np.arange(n)
    lo = np.maximum(i - h, 0)
    hi = np.minimum(i + h + 1, n)
    width = (hi - lo).reshape((n,) + (1,) * (a.ndim - 1))
    return (c[hi] - c[lo]) / width


def smooth_stream(stream: TagStream, window: int = 5) -> TagStream:
    """Centered running mean of accelerometer and magnetometer; edges use the samples available.

    Examples
    --------
    >>> s = TagStream(np.tile([[1.0], [-1.0]], (3, 3)), np.tile([[1.0, 0, 0]], (6, 1)), np.zeros(6), 1.0)
    >>> smooth_stream(s, 3).accel[1:5, 0].round(6).tolist()
    [0.333333, -0.333333, 0.333333, -0.333333]
    """
    if int(window) != window or window < 1 or window % 2 == 0:
        raise ValidationError(f"smoothing window must be a positive odd integer, got {window}")
    if window > len(stream):
        raise ValidationError(f"smoothing window {window} is longer than the series ({len(stream)})")
    if window == 1:
        return stream
    return TagStream(_running_mean(stream.accel, window), _running_mean(stream.mag, window), stream.depth,
                     stream.dt, stream.gravity_ref, stream.mag_ref, dict(stream.meta))


def wahba_solve_batch(a_tilde, m_tilde, g, m) -> np.ndarray:
    """Stacked attitudes ``(n, 3, 3)`` minimizing ``|a - O g|^2 + |m_t - O m|^2`` per sample."""
    g, m = _check_refs(g, m)
    a = np.atleast_2d(np.asarray(a_tilde, dtype=float))
    mt = np.atleast_2d(np.asarray(m_tilde, dtype=float))
    B = a[:, :, None] * g[None, None, :] + mt[:, :, None] * m[None, None, :]
    U, _, Vt = np.linalg.svd(B)
    d = np.sign(np.linalg.det(U) * np.linalg.det(Vt))
    d[d == 0] = 1.0
    U = U.copy()
    U[:, :, 2] *= d[:, None]
    return U @ Vt


def wahba_solve(a_tilde, m_tilde, g, m) -> np.ndarray:
    """Proper rotation ``O`` minimizing ``|a_tilde - O g|^2 + |m_tilde - O m|^2``.

    Orthogonal Procrustes on the attitude profile matrix
    ``B = a_tilde g' + m_tilde m'``: with ``B = U S V'``,
    ``O = U diag(1, 1, det(U V')) V'``.
    """
    return wahba_solve_batch(_vec3(a_tilde, "a_tilde"), _vec3(m_tilde, "m_tilde"), g, m)[0]


def speed_from_depth(orientation_o, v_z: float, eps_oz: float = EPS_OZ) -> np.ndarray:
    """Velocity along the heading that produces vertical speed ``v_z``: ``o * v_z / o_z``."""
    o = np.asarray(orientation_o, dtype=float)
    if abs(o[2]) <= eps_oz:
        raise SpeedUnobservableError(
            f"surface/level swimming: speed unobservable (|o_z|={abs(o[2]):.3g} <= {eps_oz})"
        )
    return o * (v_z / o[2])


@dataclass(frozen=True)
class DraResult:
    easting: Track1D
    northing: Track1D
    flagged: int
    velocity: np.ndarray = field(repr=False, compare=False, default=None)


def dra_reconstruct(stream: TagStream, start=(0.0, 0.0), speed_mode: str = "from_depth",
                    speed: float = 1.0, window: int = 5, eps_oz: float = EPS_OZ) -> DraResult:
    """Integrate heading times speed into an (easting, northing) path in km.

    ``speed_mode`` is ``"from_depth"`` (speed from the central-difference depth
    rate) or ``"constant"`` (``speed`` m/s along the heading).  Samples where
    the depth rate cannot be converted keep the last valid velocity (zero
    before the first valid one); their number is returned as ``flagged``.
    """
    if speed_mode not in ("from_depth", "constant"):
        raise ValidationError(f"unknown speed mode {speed_mode!r}")
    if len(stream) < 2:
        raise ValidationError("need at least two tag samples")
    sm = smooth_stream(stream, window)
    O = wahba_solve_batch(sm.accel, sm.mag, stream.gravity_ref, stream.mag_ref)
    o = O[:, 0, :]
    n = len(stream)
    flagged = 0
    if speed_mode == "constant":
        if not speed >= 0:
            raise ValidationError("constant speed must be non-negative")
        vel = o * speed
    else:
        vz = np.gradient(stream.depth, stream.dt)
        ok = np.abs(o[:, 2]) > eps_oz
        flagged = int(n - np.count_nonzero(ok))
        vel = np.zeros((n, 3))
        vel[ok] = o[ok] * (vz[ok] / o[ok, 2])[:, None]
        last = np.maximum.accumulate(np.where(ok, np.arange(n), -1))
        held = ~ok & (last >= 0)
        vel[held] = vel[last[held]]
    steps_km = vel[:-1] * (stream.dt / 1000.0)
    north = start[1] + np.concatenate(([0.0], np.cumsum(steps_km[:, 0])))
    east = start[0] + np.concatenate(([0.0], np.cumsum(steps_km[:, 1])))
    return DraResult(Track1D.from_values(east, stream.dt), Track1D.from_values(north, stream.dt), flagged, vel)


def simulate_tag(easting_km, northing_km, depth_m, dt: float, accel_sd: float = 0.0, mag_sd: float = 0.0,
                 mag_bias=(0.0, 0.0, 0.0), seed: Optional[int] = None, gravity_ref=GRAVITY_NED,
                 mag_ref=MAG_NED) -> TagStream:
    """Sensor readings of an animal whose body axis follows its velocity.

    Velocity is the central-difference derivative of the 3-D truth.  The body
    frame is ``[forward, right, forward x right]`` with ``right`` horizontal;
    for vertical travel ``right`` falls back to east.  Samples with zero
    velocity keep the previous attitude and are counted in
    ``meta["stationary_samples"]``.
    """
    e = np.asarray(easting_km, dtype=float) * 1000.0
    nn = np.asarray(northing_km, dtype=float) * 1000.0
    d = np.asarray(depth_m, dtype=float)
    if not (e.shape == nn.shape == d.shape) or e.ndim != 1 or e.size < 2:
        raise ValidationError("truth easting, northing and depth must be equal-length series")
    g, m = _check_refs(gravity_ref, mag_ref)
    pos = np.column_stack([nn, e, d])
    vel = np.gradient(pos, dt, axis=0)
    speed = np.linalg.norm(vel, axis=1)
    moving = speed > 1e-12
    stationary = int(np.count_nonzero(~moving))
    if not np.any(moving):
        raise ValidationError("truth never moves; attitude is undefined")
    last = np.maximum.accumulate(np.where(moving, np.arange(len(speed)), -1))
    last[last < 0] = int(np.argmax(moving))
    fwd = vel[last] / speed[last][:, None]
    right = np.cross([0.0, 0.0, 1.0], fwd)
    rn = np.linalg.norm(right, axis=1)
    vertical = rn < 1e-9
    right[vertical] = (0.0, 1.0, 0.0)
    right[~vertical] /= rn[~vertical][:, None]
    down_b = np.cross(fwd, right)
    O = np.stack([fwd, right, down_b], axis=1)
    rng = np.random.default_rng(seed)
    n = len(d)
    accel = O @ g + rng.standard_normal((n, 3)) * accel_sd
    mag = O @ m + np.asarray(mag_bias, dtype=float) + rng.standard_normal((n, 3)) * mag_sd
    return TagStream(accel, mag, d, dt, tuple(g), tuple(m), {"stationary_samples": stationary})


def read_tag_csv(path, dt: float, gravity_ref=GRAVITY_NED, mag_ref=MAG_NED) -> TagStream:
    """Read ``t_index,ax,ay,az,mx,my,mz,depth_m``."""
    cols = read_series_csv(path)
    missing = [c for c in TAG_COLUMNS if c not in cols]
    if missing:
        raise ValidationError(f"{path}: missing tag columns {missing}")
    t = cols["t_index"]
    if t.size == 0 or np.any(t != np.arange(1, t.size + 1)):
        raise ValidationError(f"{path}: t_index must run 1..n without gaps")
    acc = np.column_stack([cols["ax"], cols["ay"], cols["az"]])
    mag = np.column_stack([cols["mx"], cols["my"], cols["mz"]])
    return TagStream(acc, mag, cols["depth_m"], dt, gravity_ref, mag_ref)


def write_tag_csv(path, stream: TagStream) -> None:
    n = len(stream)
    cols = {"t_index": np.arange(1, n + 1)}
    for j, c in enumerate(("ax", "ay", "az")):
        cols[c] = stream.accel[:, j]
    for j, c in enumerate(("mx", "my", "mz")):
        cols[c] = stream.mag[:, j]
    cols["depth_m"] = stream.depth
    write_csv(path, cols)
