"""Point-wise great-circle projection of GPS fixes onto a local plane.

Each fix is placed relative to the previous one: the planar step has the
haversine length and the initial bearing of the great circle between them.
Easting/northing are in km on a sphere of radius 6371 km.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _backend
from .errors import ValidationError

EARTH_RADIUS_KM = 6371.0

__all__ = [
    "EARTH_RADIUS_KM",
    "GeoPoint",
    "great_circle_km",
    "initial_bearing_deg",
    "destination",
    "project_pointwise",
    "unproject_pointwise",
    "unproject_arrays",
]


@dataclass(frozen=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValidationError(f"latitude out of range: {self.lat_deg}")
        if not -180.0 < self.lon_deg <= 180.0:
            raise ValidationError(f"longitude out of range: {self.lon_deg}")


def _wrap_lon(lon_deg: float) -> float:
    lon = math.fmod(lon_deg + 180.0, 360.0)
    if lon <= 0.0:
        lon += 360.0
    return lon - 180.0


def great_circle_km(p: GeoPoint, q: GeoPoint) -> float:
    lat1, lat2 = math.radians(p.lat_deg), math.radians(q.lat_deg)
    dlat = lat2 - lat1
    dlon = math.radians(q.lon_deg - p.lon_deg)
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def initial_bearing_deg(p: GeoPoint, q: GeoPoint) -> float:
    """Forward azimuth at ``p`` toward ``q``, clockwise from north, in [0, 360)."""
    if p == q:
        raise ValidationError("bearing undefined for coincident points")
    lat1, lat2 = math.radians(p.lat_deg), math.radians(q.lat_deg)
    dlon = math.radians(q.lon_deg - p.lon_deg)
    y = math.sin(dlon) * math.cos(lat2)
    x = math.cos(lat1) * math.sin(lat2) - math.sin(lat1) * math.cos(lat2) * math.cos(dlon)
    brg = math.degrees(math.atan2(y, x)) % 360.0
    return 0.0 if brg == 360.0 else brg


def destination(p: GeoPoint, bearing_deg: float, distance_km: float) -> GeoPoint:
    lat1 = math.radians(p.lat_deg)
    d = distance_km / EARTH_RADIUS_KM
    th = math.radians(bearing_deg)
    lat2 = math.asin(math.sin(lat1) * math.cos(d) + math.cos(lat1) * math.sin(d) * math.cos(th))
    dlon = math.atan2(math.sin(th) * math.sin(d) * math.cos(lat1), math.cos(d) - math.sin(lat1) * math.sin(lat2))
    return GeoPoint(math.degrees(lat2), _wrap_lon(p.lon_deg + math.degrees(dlon)))


def project_pointwise(fixes: Sequence[GeoPoint]) -> np.ndarray:
    """Planar ``(easting_km, northing_km)`` rows; the first fix maps to the origin."""
    if len(fixes) < 1:
        raise ValidationError("need at least one fix")
    out = np.zeros((len(fixes), 2))
    for i in range(1, len(fixes)):
        p, q = fixes[i - 1], fixes[i]
        d = great_circle_km(p, q)
        if d == 0.0:
            out[i] = out[i - 1]
            continue
        th = math.radians(initial_bearing_deg(p, q))
        out[i, 0] = out[i - 1, 0] + d * math.sin(th)
        out[i, 1] = out[i - 1, 1] + d * math.cos(th)
    return out


def unproject_arrays(track, anchor: GeoPoint):
    """Invert ``project_pointwise`` step by step from ``anchor`` (the planar origin).

    ``track`` is an ``(n, 2)`` array of easting/northing km whose first row is
    the origin.  Returns ``(lat_deg, lon_deg)`` arrays.  Raises when a step
    reaches a pole.
    """
    track = np.asarray(track, dtype=float).reshape(-1, 2)
    if len(track) == 0:
        return np.array([anchor.lat_deg]), np.array([anchor.lon_deg])
    steps = np.diff(track, axis=0)
    n = len(steps)
    lat = np.empty(n + 1)
    lon = np.empty(n + 1)
    pole = _backend.kernels.unproject_steps(
        np.ascontiguousarray(steps[:, 0]),
        np.ascontiguousarray(steps[:, 1]),
        math.radians(anchor.lat_deg),
        math.radians(anchor.lon_deg),
        EARTH_RADIUS_KM,
        lat,
        lon,
    )
    if pole:
        raise ValidationError("track crosses a pole; point-wise unprojection is undefined there")
    lon_deg = (np.degrees(lon) + 180.0) % 360.0 - 180.0
    lon_deg[lon_deg == -180.0] = 180.0
    return np.degrees(lat), lon_deg


def unproject_pointwise(track, anchor: GeoPoint) -> list[GeoPoint]:
    lat, lon = unproject_arrays(track, anchor)
    return [GeoPoint(float(a), float(b)) for a, b in zip(lat, lon)]
