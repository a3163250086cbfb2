"""WGS-84 geodetic conversions and local ENU frames."""

import numpy as np

from .constants import WGS84_A, WGS84_E2


def geodetic_to_ecef(lat: float, lon: float, alt: float) -> np.ndarray:
    """Geodetic (rad, rad, m) to ECEF position."""
    sin_lat, cos_lat = np.sin(lat), np.cos(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sin_lat**2)
    return np.array([
        (n + alt) * cos_lat * np.cos(lon),
        (n + alt) * cos_lat * np.sin(lon),
        (n * (1.0 - WGS84_E2) + alt) * sin_lat,
    ])


def ecef_to_geodetic(pos: np.ndarray) -> tuple[float, float, float]:
    """ECEF position to geodetic (lat rad, lon rad, alt m), iterative."""
    x, y, z = pos
    lon = np.arctan2(y, x)
    p = np.hypot(x, y)
    # Iterate latitude; converges to sub-mm in a handful of rounds near Earth.
    lat = np.arctan2(z, p * (1.0 - WGS84_E2))
    for _ in range(8):
        sin_lat = np.sin(lat)
        n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sin_lat**2)
        alt = p / np.cos(lat) - n
        lat = np.arctan2(z, p * (1.0 - WGS84_E2 * n / (n + alt)))
    sin_lat = np.sin(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sin_lat**2)
    alt = p / np.cos(lat) - n
    return float(lat), float(lon), float(alt)


def enu_matrix(lat: float, lon: float) -> np.ndarray:
    """Rows are the unit East, North, Up vectors in ECEF at (lat, lon)."""
    sin_lat, cos_lat = np.sin(lat), np.cos(lat)
    sin_lon, cos_lon = np.sin(lon), np.cos(lon)
    return np.array([
        [-sin_lon, cos_lon, 0.0],
        [-sin_lat * cos_lon, -sin_lat * sin_lon, cos_lat],
        [cos_lat * cos_lon, cos_lat * sin_lon, sin_lat],
    ])


def ecef_to_enu(vec: np.ndarray, origin_ecef: np.ndarray) -> np.ndarray:
    """Rotate an ECEF displacement into the ENU frame at origin_ecef."""
    lat, lon, _ = ecef_to_geodetic(origin_ecef)
    return enu_matrix(lat, lon) @ np.asarray(vec, dtype=float)


def enu_to_ecef(vec: np.ndarray, origin_ecef: np.ndarray) -> np.ndarray:
    """Rotate an ENU displacement at origin_ecef back into ECEF."""
    lat, lon, _ = ecef_to_geodetic(origin_ecef)
    return enu_matrix(lat, lon).T @ np.asarray(vec, dtype=float)
