"""Great-circle bearings, angle normalization, and the CONUS Albers projection.

All angles are degrees. Bearings are measured clockwise from north in
[0, 360). Plane coordinates are meters in the Albers equal-area conic
projection used for every metric operation in the pipeline (buffering,
nearest-parcel distances, spatial weights).

Everything here is a pure function of its arguments and safe to call
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import IdenticalPointsError, InputError, OutOfDomainError

__all__ = [
    "GeoPoint",
    "PlanePoint",
    "bearing_deg",
    "haversine_m",
    "normalize_0_360",
    "normalize_pm180",
    "project_conus_albers",
    "unproject_conus_albers",
]

EARTH_RADIUS_M = 6371008.8  # mean radius, used only for haversine sanity distances

# Albers equal-area conic, CONUS (EPSG registry entry 5070):
# GRS80 ellipsoid, standard parallels 29.5N / 45.5N, latitude of origin 23N,
# central meridian 96W, false easting/northing 0. Hard-coded so no runtime
# CRS database is needed.
_GRS80_A = 6378137.0
_GRS80_F = 1.0 / 298.257222101
_E2 = 2.0 * _GRS80_F - _GRS80_F**2
_E = math.sqrt(_E2)

_LAT_1 = math.radians(29.5)
_LAT_2 = math.radians(45.5)
_LAT_0 = math.radians(23.0)
_LON_0 = math.radians(-96.0)


@dataclass(frozen=True)
class GeoPoint:
    """A geographic position in degrees; construction validates ranges."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise InputError(f"non-finite coordinates: ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise InputError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise InputError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class PlanePoint:
    """Projected position: easting/northing meters."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InputError(f"non-finite plane coordinates: ({self.x}, {self.y})")

    def distance_to(self, other: "PlanePoint") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def normalize_0_360(angle: float) -> float:
    """Reduce an angle to [0, 360)."""
    if not math.isfinite(angle):
        raise InputError(f"non-finite angle: {angle}")
    a = math.fmod(angle, 360.0)
    if a < 0.0:
        a += 360.0
    return a if a < 360.0 else 0.0


def normalize_pm180(angle: float) -> float:
    """Reduce an angle to (-180, 180]; the boundary maps to +180."""
    a = normalize_0_360(angle)
    return a if a <= 180.0 else a - 360.0


def bearing_deg(origin: GeoPoint, target: GeoPoint) -> float:
    """Initial great-circle bearing from ``origin`` to ``target``.

    Spherical formula: with dlon = lon2 - lon1,

        y = sin(dlon) * cos(lat2)
        x = cos(lat1) * sin(lat2) - sin(lat1) * cos(lat2) * cos(dlon)
        bearing = atan2(y, x)

    normalized to [0, 360). The bearing between coincident points is
    undefined and raises ``IdenticalPointsError``.
    """
    if abs(origin.lat - target.lat) < 1e-12 and abs(origin.lon - target.lon) < 1e-12:
        raise IdenticalPointsError(f"bearing undefined: {origin} == {target}")
    lat1 = math.radians(origin.lat)
    lat2 = math.radians(target.lat)
    dlon = math.radians(target.lon - origin.lon)
    y = math.sin(dlon) * math.cos(lat2)
    x = math.cos(lat1) * math.sin(lat2) - math.sin(lat1) * math.cos(lat2) * math.cos(dlon)
    return normalize_0_360(math.degrees(math.atan2(y, x)))


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on the mean sphere."""
    lat1, lat2 = math.radians(a.lat), math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon - a.lon)
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def _check_domain(lat: float, lon: float) -> None:
    # Generous CONUS guard; catches lat/lon swaps and garbage coordinates.
    if abs(lat - 37.0) > 40.0 or abs(lon + 96.0) > 60.0:
        raise OutOfDomainError(f"({lat}, {lon}) outside the CONUS projection domain")


def _authalic_q(sin_lat: float) -> float:
    return (1.0 - _E2) * (
        sin_lat / (1.0 - _E2 * sin_lat**2)
        - (1.0 / (2.0 * _E)) * math.log((1.0 - _E * sin_lat) / (1.0 + _E * sin_lat))
    )


def _cone_m(lat: float) -> float:
    return math.cos(lat) / math.sqrt(1.0 - _E2 * math.sin(lat) ** 2)


_M1 = _cone_m(_LAT_1)
_M2 = _cone_m(_LAT_2)
_Q1 = _authalic_q(math.sin(_LAT_1))
_Q2 = _authalic_q(math.sin(_LAT_2))
_Q0 = _authalic_q(math.sin(_LAT_0))
_N = (_M1**2 - _M2**2) / (_Q2 - _Q1)
_C = _M1**2 + _N * _Q1
_RHO0 = _GRS80_A * math.sqrt(_C - _N * _Q0) / _N


def project_conus_albers(p: GeoPoint) -> PlanePoint:
    """Forward Albers equal-area conic projection to meters."""
    _check_domain(p.lat, p.lon)
    lat = math.radians(p.lat)
    lon = math.radians(p.lon)
    q = _authalic_q(math.sin(lat))
    rho = _GRS80_A * math.sqrt(_C - _N * q) / _N
    theta = _N * (lon - _LON_0)
    return PlanePoint(rho * math.sin(theta), _RHO0 - rho * math.cos(theta))


def unproject_conus_albers(p: PlanePoint) -> GeoPoint:
    """Inverse Albers projection; round-trips the forward to < 1e-9 degrees."""
    rho = math.hypot(p.x, _RHO0 - p.y)
    theta = math.atan2(p.x, _RHO0 - p.y)
    lon = math.degrees(_LON_0 + theta / _N)
    q = (_C - (rho * _N / _GRS80_A) ** 2) / _N
    # Fixed-point iteration for the latitude (converges in a handful of steps).
    lat = math.asin(min(1.0, max(-1.0, q / 2.0)))
    for _ in range(50):
        s = math.sin(lat)
        denom = 1.0 - _E2 * s**2
        delta = (denom**2 / (2.0 * math.cos(lat))) * (
            q / (1.0 - _E2)
            - s / denom
            + (1.0 / (2.0 * _E)) * math.log((1.0 - _E * s) / (1.0 + _E * s))
        )
        lat += delta
        if abs(delta) < 1e-15:
            break
    return GeoPoint(math.degrees(lat), lon)
