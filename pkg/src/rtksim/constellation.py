"""Deterministic satellite geometry.

Circular (zero-eccentricity) orbits on Walker-style shells, Earth rotation
applied as a z-axis rotation, and receiver-relative look geometry in the
local WGS-84 ENU frame.
"""

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .constants import GM_EARTH, OMEGA_EARTH, WGS84_A
from .geodesy import ecef_to_geodetic, enu_matrix


class Constellation(IntEnum):
    GPS_LIKE = 0
    GALILEO_LIKE = 1


# Golden-ratio fraction used to spread per-satellite clock parameters
# deterministically without an RNG (propagate must be a pure function).
_GOLDEN = 0.6180339887498949


@dataclass(frozen=True)
class OrbitShell:
    """One constellation shell of evenly spaced circular orbits."""

    sat_count: int
    plane_count: int
    semi_major_axis: float
    inclination: float
    raan_offsets: tuple[float, ...]
    anomaly_offsets: tuple[float, ...]
    constellation_id: Constellation = Constellation.GPS_LIKE

    def __post_init__(self):
        if self.semi_major_axis <= WGS84_A:
            raise ValueError("semi_major_axis must be above the Earth surface")
        if self.sat_count % self.plane_count != 0:
            raise ValueError("sat_count must be divisible by plane_count")
        if len(self.raan_offsets) != self.plane_count:
            raise ValueError("raan_offsets must have one entry per plane")
        if len(self.anomaly_offsets) != self.sat_count:
            raise ValueError("anomaly_offsets must have one entry per satellite slot")

    @property
    def period(self) -> float:
        return 2.0 * math.pi * math.sqrt(self.semi_major_axis**3 / GM_EARTH)


@dataclass(frozen=True)
class SatState:
    sat_id: int
    pos_ecef: np.ndarray
    vel_ecef: np.ndarray
    clock_bias: float
    clock_drift: float
    constellation_id: Constellation = Constellation.GPS_LIKE

    @property
    def key(self) -> tuple[int, int]:
        return (int(self.constellation_id), self.sat_id)


def walker_shell(sat_count: int, plane_count: int, semi_major_axis: float,
                 inclination: float, constellation_id: Constellation,
                 phase_factor: int = 1) -> OrbitShell:
    """Build an evenly phased Walker shell."""
    per_plane = sat_count // plane_count
    raan = tuple(2.0 * math.pi * k / plane_count for k in range(plane_count))
    anomaly = []
    for i in range(sat_count):
        plane = i // per_plane
        slot = i % per_plane
        anomaly.append(2.0 * math.pi * (slot / per_plane + phase_factor * plane / sat_count))
    return OrbitShell(sat_count, plane_count, semi_major_axis, inclination,
                      raan, tuple(anomaly), constellation_id)


def gps_like() -> OrbitShell:
    return walker_shell(24, 6, 26_559_700.0, math.radians(55.0), Constellation.GPS_LIKE)


def galileo_like() -> OrbitShell:
    return walker_shell(24, 3, 29_599_800.0, math.radians(56.0), Constellation.GALILEO_LIKE)


def _sat_clock_poly(constellation_id: Constellation, sat_id: int) -> tuple[float, float]:
    """Fixed per-satellite clock polynomial (bias0 [s], drift [s/s])."""
    u = ((sat_id + 17 * (int(constellation_id) + 1)) * _GOLDEN) % 1.0
    v = ((sat_id + 43 * (int(constellation_id) + 1)) * _GOLDEN * _GOLDEN) % 1.0
    bias0 = (u - 0.5) * 2.0e-4
    drift = (v - 0.5) * 2.0e-11
    return bias0, drift


def propagate(shell: OrbitShell, t: float, sat_clocks: bool = True) -> list[SatState]:
    """Satellite ECEF states at simulation time t [s].

    Satellites move on circular orbits in the inertial frame that coincides
    with ECEF at t = 0; Earth rotation is a z-rotation at OMEGA_EARTH.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    a = shell.semi_major_axis
    n = math.sqrt(GM_EARTH / a**3)
    per_plane = shell.sat_count // shell.plane_count
    cos_i, sin_i = math.cos(shell.inclination), math.sin(shell.inclination)
    theta_e = OMEGA_EARTH * t
    cos_e, sin_e = math.cos(theta_e), math.sin(theta_e)
    states = []
    for i in range(shell.sat_count):
        plane = i // per_plane
        raan = shell.raan_offsets[plane]
        u = shell.anomaly_offsets[i] + n * t
        cos_u, sin_u = math.cos(u), math.sin(u)
        # Orbital-plane coordinates rotated by inclination then RAAN.
        xp, yp = a * cos_u, a * sin_u
        xi = xp
        yi = yp * cos_i
        zi = yp * sin_i
        cos_o, sin_o = math.cos(raan), math.sin(raan)
        pos_i = np.array([cos_o * xi - sin_o * yi, sin_o * xi + cos_o * yi, zi])
        vxp, vyp = -a * n * sin_u, a * n * cos_u
        vxi = vxp
        vyi = vyp * cos_i
        vzi = vyp * sin_i
        vel_i = np.array([cos_o * vxi - sin_o * vyi, sin_o * vxi + cos_o * vyi, vzi])
        # Inertial -> ECEF: rotate by -theta_e about z.
        rot = np.array([[cos_e, sin_e, 0.0], [-sin_e, cos_e, 0.0], [0.0, 0.0, 1.0]])
        pos_e = rot @ pos_i
        vel_e = rot @ vel_i - np.cross([0.0, 0.0, OMEGA_EARTH], pos_e)
        if sat_clocks:
            bias0, drift = _sat_clock_poly(shell.constellation_id, i + 1)
        else:
            bias0, drift = 0.0, 0.0
        states.append(SatState(
            sat_id=i + 1,
            pos_ecef=pos_e,
            vel_ecef=vel_e,
            clock_bias=bias0 + drift * t,
            clock_drift=drift,
            constellation_id=shell.constellation_id,
        ))
    return states


@dataclass(frozen=True)
class LookGeometry:
    range: float
    elevation: float
    azimuth: float
    unit_los: np.ndarray


def look_geometry(receiver_ecef: np.ndarray, sat: SatState) -> LookGeometry:
    """Range, elevation, azimuth and unit line of sight receiver -> satellite."""
    receiver_ecef = np.asarray(receiver_ecef, dtype=float)
    los = sat.pos_ecef - receiver_ecef
    rng = float(np.linalg.norm(los))
    unit = los / rng
    lat, lon, _ = ecef_to_geodetic(receiver_ecef)
    e, n_, u = enu_matrix(lat, lon) @ unit
    elevation = math.asin(max(-1.0, min(1.0, u)))
    azimuth = math.atan2(e, n_) % (2.0 * math.pi)
    return LookGeometry(rng, elevation, azimuth, unit)


def visible(receiver_ecef: np.ndarray, sats: list[SatState], mask: float) -> list[SatState]:
    """Satellites at or above the elevation mask, ordered by (constellation, id)."""
    if not 0.0 <= mask < math.pi / 2:
        raise ValueError("mask must be in [0, pi/2)")
    out = [s for s in sats if look_geometry(receiver_ecef, s).elevation >= mask]
    out.sort(key=lambda s: s.key)
    return out
