"""Coordinate frames, satellite geometry, and standard atmosphere corrections.

WGS-84 geodetic conversions, local ENU rotations, elevation/azimuth,
Saastamoinen troposphere and Klobuchar ionosphere with fixed
standard-atmosphere parameters. The simulator applies the same models in
generation, so the estimator's corrections are exact on synthetic data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import C_LIGHT, OMEGA_EARTH, WGS84_A, WGS84_E2
from .types import EpochTime

__all__ = [
    "GeodeticPosition",
    "geodetic_to_ecef",
    "ecef_to_geodetic",
    "enu_rotation",
    "ecef_to_enu",
    "elevation_azimuth",
    "tropo_delay_saastamoinen",
    "iono_delay_klobuchar",
    "sagnac_corrected_range",
]

# Standard-atmosphere surface values used by the troposphere model.
STD_PRESSURE_HPA = 1013.25
STD_TEMPERATURE_K = 291.15
STD_VAPOR_PRESSURE_HPA = 11.75
# Water-vapor scale height (m) for the simple height decay of e.
_VAPOR_SCALE_HEIGHT_M = 2000.0

# Default elevation mask (rad); conventional 10 degrees for urban work.
DEFAULT_ELEVATION_MASK = math.radians(10.0)

# Conventional broadcast ionosphere coefficients (alpha0..3, beta0..3), used
# when no per-measurement delays are supplied.
DEFAULT_IONO_COEFFICIENTS = np.array([
    1.1176e-8, 7.4506e-9, -5.9605e-8, -5.9605e-8,
    90112.0, 0.0, -196608.0, -65536.0,
])

# GPS L1 wavelength used as the Klobuchar reference band.
_L1_WAVELENGTH = C_LIGHT / 1575.42e6


@dataclass(frozen=True)
class GeodeticPosition:
    """WGS-84 latitude/longitude (rad) and ellipsoidal height (m)."""

    latitude: float
    longitude: float
    height: float

    def __post_init__(self):
        if abs(self.latitude) > math.pi / 2 + 1e-12:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not (-math.pi < self.longitude <= math.pi + 1e-12):
            raise ValueError(f"longitude out of range: {self.longitude}")


def geodetic_to_ecef(pos: GeodeticPosition) -> np.ndarray:
    """WGS-84 geodetic to ECEF (m)."""
    s_lat, c_lat = math.sin(pos.latitude), math.cos(pos.latitude)
    s_lon, c_lon = math.sin(pos.longitude), math.cos(pos.longitude)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * s_lat * s_lat)
    return np.array([
        (n + pos.height) * c_lat * c_lon,
        (n + pos.height) * c_lat * s_lon,
        (n * (1.0 - WGS84_E2) + pos.height) * s_lat,
    ])


def ecef_to_geodetic(p: np.ndarray) -> GeodeticPosition:
    """ECEF (m) to WGS-84 geodetic, iterative latitude solution.

    Rejects points with |p| <= 6.2e6 m (inside the Earth); round-trips with
    geodetic_to_ecef to below 1e-6 m at surface heights.
    """
    p = np.asarray(p, dtype=float)
    r = float(np.linalg.norm(p))
    if r <= 6.2e6:
        raise ValueError(f"point inside Earth: |p| = {r:.3e} m")
    x, y, z = p
    lon = math.atan2(y, x)
    rho = math.hypot(x, y)
    # Iterate geodetic latitude; converges in a handful of steps.
    lat = math.atan2(z, rho * (1.0 - WGS84_E2))
    for _ in range(10):
        s_lat = math.sin(lat)
        n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * s_lat * s_lat)
        h = rho / math.cos(lat) - n
        lat_new = math.atan2(z, rho * (1.0 - WGS84_E2 * n / (n + h)))
        if abs(lat_new - lat) < 1e-14:
            lat = lat_new
            break
        lat = lat_new
    s_lat = math.sin(lat)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * s_lat * s_lat)
    if abs(lat) < math.pi / 2 - 1e-9:
        h = rho / math.cos(lat) - n
    else:
        h = abs(z) / abs(s_lat) - n * (1.0 - WGS84_E2)
    return GeodeticPosition(latitude=lat, longitude=lon, height=h)


def enu_rotation(pos: GeodeticPosition) -> np.ndarray:
    """Rows are the local East, North, Up unit vectors in ECEF."""
    s_lat, c_lat = math.sin(pos.latitude), math.cos(pos.latitude)
    s_lon, c_lon = math.sin(pos.longitude), math.cos(pos.longitude)
    return np.array([
        [-s_lon, c_lon, 0.0],
        [-s_lat * c_lon, -s_lat * s_lon, c_lat],
        [c_lat * c_lon, c_lat * s_lon, s_lat],
    ])


def ecef_to_enu(points: np.ndarray, origin: np.ndarray) -> np.ndarray:
    """Rotate ECEF offsets from `origin` into the local ENU frame at origin."""
    origin = np.asarray(origin, dtype=float)
    rot = enu_rotation(ecef_to_geodetic(origin))
    diff = np.atleast_2d(points) - origin
    out = diff @ rot.T
    return out[0] if np.ndim(points) == 1 else out


def elevation_azimuth(receiver: np.ndarray, satellite: np.ndarray) -> tuple[float, float]:
    """Elevation above the local horizon and azimuth clockwise from north.

    Elevation in [-pi/2, pi/2], azimuth in [0, 2*pi). Depends only on the
    line-of-sight direction, not its length.
    """
    receiver = np.asarray(receiver, dtype=float)
    satellite = np.asarray(satellite, dtype=float)
    los = satellite - receiver
    norm = float(np.linalg.norm(los))
    if norm == 0.0:
        raise ValueError("degenerate geometry: receiver and satellite coincide")
    rot = enu_rotation(ecef_to_geodetic(receiver))
    e, n, u = rot @ (los / norm)
    elevation = math.asin(max(-1.0, min(1.0, u)))
    azimuth = math.atan2(e, n) % (2.0 * math.pi)
    return elevation, azimuth


def tropo_delay_saastamoinen(elevation: float, height: float) -> float:
    """Saastamoinen slant troposphere delay (m), standard atmosphere.

    Surface values P=1013.25 hPa, T=291.15 K, e=11.75 hPa scaled with
    height by the standard lapse/pressure laws; 1/sin(el) mapping. Requires
    elevation above a 0.05 rad mask (lower satellites should already have
    been masked out).
    """
    if elevation <= 0.05:
        raise ValueError(f"elevation {elevation:.4f} rad below troposphere mask")
    h = max(0.0, height)
    pressure = STD_PRESSURE_HPA * (1.0 - 2.2557e-5 * h) ** 5.2568
    temperature = STD_TEMPERATURE_K - 6.5e-3 * h
    vapor = STD_VAPOR_PRESSURE_HPA * math.exp(-h / _VAPOR_SCALE_HEIGHT_M)
    zenith_dry = 0.0022768 * pressure
    zenith_wet = 0.002277 * (1255.0 / temperature + 0.05) * vapor
    return (zenith_dry + zenith_wet) / math.sin(elevation)


def iono_delay_klobuchar(
    elevation: float,
    azimuth: float,
    receiver: GeodeticPosition,
    time: EpochTime,
    coefficients: np.ndarray,
) -> float:
    """Klobuchar broadcast-model slant ionosphere delay (m) at L1.

    `coefficients` are the eight broadcast terms (alpha0..3, beta0..3).
    All-zero coefficients fall back to the night-time 5 ns floor times the
    obliquity factor. Scale by (wavelength / L1 wavelength)^2 for other
    bands.
    """
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (8,):
        raise ValueError("expected 8 Klobuchar coefficients (alpha0..3, beta0..3)")
    alpha, beta = coefficients[:4], coefficients[4:]

    # Work in semicircles per the broadcast algorithm.
    el_sc = elevation / math.pi
    lat_sc = receiver.latitude / math.pi
    lon_sc = receiver.longitude / math.pi

    psi = 0.0137 / (el_sc + 0.11) - 0.022
    lat_i = lat_sc + psi * math.cos(azimuth)
    lat_i = max(-0.416, min(0.416, lat_i))
    lon_i = lon_sc + psi * math.sin(azimuth) / math.cos(lat_i * math.pi)
    lat_m = lat_i + 0.064 * math.cos((lon_i - 1.617) * math.pi)

    t = 4.32e4 * lon_i + time.seconds
    t %= 86400.0

    obliquity = 1.0 + 16.0 * (0.53 - el_sc) ** 3

    amp = float(np.polyval(alpha[::-1], lat_m))
    per = float(np.polyval(beta[::-1], lat_m))
    amp = max(amp, 0.0)
    per = max(per, 72000.0)

    x = 2.0 * math.pi * (t - 50400.0) / per
    if abs(x) < 1.57:
        delay_s = obliquity * (5e-9 + amp * (1.0 - x * x / 2.0 + x ** 4 / 24.0))
    else:
        delay_s = obliquity * 5e-9
    return delay_s * C_LIGHT


def klobuchar_obliquity(elevation: float) -> float:
    """Obliquity factor of the Klobuchar model for a given elevation (rad)."""
    return 1.0 + 16.0 * (0.53 - elevation / math.pi) ** 3


def scale_iono_to_wavelength(delay_l1: float, wavelength: float) -> float:
    """Dispersive scaling of an L1 iono delay to another carrier band."""
    return delay_l1 * (wavelength / _L1_WAVELENGTH) ** 2


def sagnac_corrected_range(
    receiver: np.ndarray,
    satellite: np.ndarray,
    omega_earth: float = OMEGA_EARTH,
) -> float:
    """Geometric range plus the Earth-rotation (Sagnac) correction (m).

    With omega_earth set to 0 this reduces to the plain Euclidean norm,
    which is the simulator's inertial-equivalent convention.
    """
    receiver = np.asarray(receiver, dtype=float)
    satellite = np.asarray(satellite, dtype=float)
    rng = float(np.linalg.norm(satellite - receiver))
    if omega_earth == 0.0:
        return rng
    correction = omega_earth * (
        satellite[0] * receiver[1] - satellite[1] * receiver[0]) / C_LIGHT
    return rng + correction
