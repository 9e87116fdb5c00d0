"""Geodesy primitives: great-circle distance, azimuth, cluster centroids.

Latitude/longitude are degrees at the API boundary; all trigonometry runs
in radians and double precision. Azimuths follow the north = 0,
east = +pi/2 convention and live in the principal range (-pi, +pi].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

__all__ = [
    "EARTH_RADIUS_KM",
    "AntimeridianWarning",
    "EmptyClusterError",
    "EarthModel",
    "GeoPoint",
    "LocalPolar",
    "azimuth_rad",
    "geo_centroid",
    "haversine_km",
    "to_local_polar",
]

EARTH_RADIUS_KM = 6371.0


class EmptyClusterError(ValueError):
    """An operation that needs at least one point received none."""


class AntimeridianWarning(UserWarning):
    """Cluster longitudes span more than 180 degrees; the raw-longitude mean
    used for the geographic centroid is unreliable there."""


def _normalize_lon(lon: float) -> float:
    """Wrap a longitude in degrees into (-180, +180]."""
    lon = math.fmod(lon, 360.0)
    if lon <= -180.0:
        lon += 360.0
    elif lon > 180.0:
        lon -= 360.0
    return lon


@dataclass(frozen=True)
class GeoPoint:
    """A point on the sphere. ``lat`` in [-90, +90], ``lon`` wrapped into
    (-180, +180] at construction."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, +90]")
        object.__setattr__(self, "lat", float(self.lat))
        object.__setattr__(self, "lon", _normalize_lon(float(self.lon)))


@dataclass(frozen=True)
class LocalPolar:
    """Polar coordinates of a point relative to a cluster center:
    radial distance ``d`` in km and azimuth ``sigma`` in (-pi, +pi]."""

    d: float
    sigma: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.d) and self.d >= 0.0):
            raise ValueError(f"radial distance must be finite and >= 0, got {self.d}")
        if not (-math.pi < self.sigma <= math.pi):
            raise ValueError(f"azimuth {self.sigma} outside (-pi, +pi]")


@dataclass(frozen=True)
class EarthModel:
    """Spherical earth model; only the mean radius matters here."""

    radius_km: float = EARTH_RADIUS_KM

    def __post_init__(self) -> None:
        if not self.radius_km > 0:
            raise ValueError(f"earth radius must be positive, got {self.radius_km}")


def haversine_km(a: GeoPoint, b: GeoPoint, earth: EarthModel = EarthModel()) -> float:
    """Great-circle distance between two points in kilometers.

    Uses the haversine form 2*R*asin(sqrt(sin^2(dlat/2) +
    cos(lat_a)*cos(lat_b)*sin^2(dlon/2))); symmetric, bounded by pi*R.
    """
    phi_a = math.radians(a.lat)
    phi_b = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dpsi = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi_a) * math.cos(phi_b) * math.sin(dpsi / 2.0) ** 2
    # float round-off can push h a hair past 1 for antipodal points
    h = min(1.0, max(0.0, h))
    return 2.0 * earth.radius_km * math.asin(math.sqrt(h))


def azimuth_rad(center: GeoPoint, p: GeoPoint) -> float:
    """Azimuth of ``p`` as seen from ``center``: 0 = north, +pi/2 = east.

    Computed as the argument of x + iy with
    x = cos(lat0)*sin(lat_p) - sin(lat0)*cos(lat_p)*cos(dlon) and
    y = sin(dlon)*cos(lat_p). Returns 0 for the degenerate case p == center.
    """
    phi0 = math.radians(center.lat)
    phip = math.radians(p.lat)
    dpsi = math.radians(p.lon - center.lon)
    x = math.cos(phi0) * math.sin(phip) - math.sin(phi0) * math.cos(phip) * math.cos(dpsi)
    y = math.sin(dpsi) * math.cos(phip)
    if x == 0.0 and y == 0.0:
        return 0.0
    sigma = math.atan2(y, x)
    if sigma <= -math.pi:  # atan2 can yield -pi; principal range is (-pi, +pi]
        sigma = math.pi
    return sigma


def geo_centroid(points: list[GeoPoint]) -> GeoPoint:
    """Arithmetic mean of latitudes and longitudes of a non-empty cluster.

    Raises EmptyClusterError on an empty list. Clusters whose raw longitudes
    span more than 180 degrees straddle the antimeridian, where the raw mean
    is meaningless; a diagnostic AntimeridianWarning is emitted.
    """
    if not points:
        raise EmptyClusterError("geo_centroid of an empty cluster")
    lons = [p.lon for p in points]
    if max(lons) - min(lons) > 180.0:
        warnings.warn(
            "cluster longitudes span more than 180 degrees; centroid is unreliable",
            AntimeridianWarning,
            stacklevel=2,
        )
    n = len(points)
    return GeoPoint(sum(p.lat for p in points) / n, sum(lons) / n)


def to_local_polar(center: GeoPoint, p: GeoPoint, earth: EarthModel = EarthModel()) -> LocalPolar:
    """Map ``p`` into the local polar frame anchored at ``center``."""
    return LocalPolar(haversine_km(center, p, earth), azimuth_rad(center, p))
