"""GNSS observable synthesis and between-receiver differencing.

Pseudorange and carrier phase follow the standard single-frequency
observation equations with elevation-mapped troposphere/ionosphere terms,
per-receiver seeded noise, and integer ambiguities drawn at lock
acquisition and held until loss of lock.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constants import C_LIGHT, LAMBDA_L1
from .constellation import Constellation, SatState, look_geometry
from .geodesy import ecef_to_enu

SatKey = tuple[int, int]  # (constellation_id, sat_id)


class MissingSatellite(KeyError):
    """Requested satellite is absent or unlocked in an epoch."""


class SameSatellite(ValueError):
    """Double difference requested against the reference satellite itself."""


@dataclass
class ErrorModel:
    """Magnitudes of the simulated error sources; all configurable."""

    tropo_zenith: float = 2.4            # m
    iono_zenith: float = 5.0             # m
    iono_spatial_gradient: float = 0.002  # m per km of horizontal separation
    code_noise_sigma_zenith: float = 0.3  # m
    phase_noise_sigma_zenith: float = 0.003  # m
    rx_clock_rw_sigma: float = 1.0e-9    # s / sqrt(s)
    sat_clock_enabled: bool = True
    seed: int = 1
    # Anchor for the horizontal ionosphere gradient (usually the station
    # position, set by the harness). None disables the gradient term.
    iono_ref_ecef: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("tropo_zenith", "iono_zenith", "code_noise_sigma_zenith",
                     "phase_noise_sigma_zenith", "rx_clock_rw_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class Observation:
    sat_id: int
    constellation_id: Constellation
    pseudorange: float       # m
    carrier_phase: float     # cycles
    cn0: float               # dB-Hz
    lock: bool
    loss_of_lock_count: int

    @property
    def key(self) -> SatKey:
        return (int(self.constellation_id), self.sat_id)


@dataclass
class EpochObservations:
    t: float
    receiver_id: str
    obs: dict[SatKey, Observation]
    rx_clock_bias: float  # truth value, consumed only by oracles/tests

    def locked_keys(self) -> list[SatKey]:
        return sorted(k for k, o in self.obs.items() if o.lock)


def tropo_delay(model: ErrorModel, elevation: float) -> float:
    return model.tropo_zenith / math.sin(elevation)


def iono_zenith_at(model: ErrorModel, receiver_ecef: np.ndarray) -> float:
    """Zenith ionosphere at a receiver: base value plus horizontal gradient."""
    if model.iono_ref_ecef is None:
        return model.iono_zenith
    enu = ecef_to_enu(np.asarray(receiver_ecef, float) - model.iono_ref_ecef,
                      model.iono_ref_ecef)
    horizontal_km = math.hypot(enu[0], enu[1]) / 1000.0
    return model.iono_zenith + model.iono_spatial_gradient * horizontal_km


def iono_delay(model: ErrorModel, receiver_ecef: np.ndarray, elevation: float) -> float:
    return iono_zenith_at(model, receiver_ecef) / math.sin(elevation)


def clean_cn0(elevation: float) -> float:
    """Unjammed C/N0 [dB-Hz]; 38 at the horizon rising to 50 at zenith."""
    return 38.0 + 12.0 * math.sin(max(0.0, elevation))


class ReceiverClock:
    """Seeded random-walk receiver clock."""

    def __init__(self, model: ErrorModel, stream: int, initial_bias: Optional[float] = None):
        self._rng = np.random.default_rng(np.random.SeedSequence([model.seed, stream, 0xC10C]))
        self._sigma = model.rx_clock_rw_sigma
        if initial_bias is None:
            initial_bias = float(self._rng.uniform(-1e-3, 1e-3))
        self.bias = initial_bias

    def step(self, dt: float) -> float:
        self.bias += float(self._rng.normal(0.0, self._sigma * math.sqrt(dt)))
        return self.bias


class SignalSynthesizer:
    """Observable generator for one receiver.

    Owns the receiver's noise stream and per-satellite ambiguity/lock
    bookkeeping; must not be shared across concurrent contexts.
    """

    def __init__(self, model: ErrorModel, receiver_id: str, stream: int):
        self.model = model
        self.receiver_id = receiver_id
        self._rng = np.random.default_rng(np.random.SeedSequence([model.seed, stream, 0x0B5]))
        self._ambiguities: dict[SatKey, int] = {}
        self._loss_counts: dict[SatKey, int] = {}

    def mark_lock_lost(self, key: SatKey) -> None:
        """Drop the ambiguity for a channel; the next epoch re-locks it."""
        if key in self._ambiguities:
            del self._ambiguities[key]
            self._loss_counts[key] = self._loss_counts.get(key, 0) + 1

    def _ambiguity(self, key: SatKey) -> int:
        if key not in self._ambiguities:
            self._ambiguities[key] = int(self._rng.integers(-1_000_000, 1_000_001))
        return self._ambiguities[key]

    def synthesize(self, receiver_ecef: np.ndarray, rx_clock_bias: float,
                   sats: list[SatState], t: float) -> EpochObservations:
        """One epoch of pseudorange/carrier-phase/C/N0 for the given satellites."""
        receiver_ecef = np.asarray(receiver_ecef, dtype=float)
        model = self.model
        obs: dict[SatKey, Observation] = {}
        for sat in sorted(sats, key=lambda s: s.key):
            geo = look_geometry(receiver_ecef, sat)
            sin_el = math.sin(geo.elevation)
            tropo = tropo_delay(model, geo.elevation)
            iono = iono_delay(model, receiver_ecef, geo.elevation)
            sat_clock = sat.clock_bias if model.sat_clock_enabled else 0.0
            clock_term = C_LIGHT * (rx_clock_bias - sat_clock)
            code_sigma = model.code_noise_sigma_zenith / sin_el
            phase_sigma = model.phase_noise_sigma_zenith / sin_el
            code_noise = float(self._rng.normal(0.0, code_sigma)) if code_sigma > 0 else 0.0
            phase_noise = float(self._rng.normal(0.0, phase_sigma)) if phase_sigma > 0 else 0.0
            n_amb = self._ambiguity(sat.key)
            pseudorange = geo.range + clock_term + tropo + iono + code_noise
            phase_m = geo.range + clock_term + tropo - iono + LAMBDA_L1 * n_amb + phase_noise
            obs[sat.key] = Observation(
                sat_id=sat.sat_id,
                constellation_id=sat.constellation_id,
                pseudorange=pseudorange,
                carrier_phase=phase_m / LAMBDA_L1,
                cn0=clean_cn0(geo.elevation),
                lock=True,
                loss_of_lock_count=self._loss_counts.get(sat.key, 0),
            )
        return EpochObservations(t=t, receiver_id=self.receiver_id, obs=obs,
                                 rx_clock_bias=rx_clock_bias)

    def true_ambiguity(self, key: SatKey) -> Optional[int]:
        """Truth hook for oracles: the currently held integer ambiguity."""
        return self._ambiguities.get(key)


def _locked(epoch: EpochObservations, key: SatKey) -> Observation:
    o = epoch.obs.get(key)
    if o is None or not o.lock:
        raise MissingSatellite(f"satellite {key} not locked at {epoch.receiver_id}")
    return o


def single_difference(a: EpochObservations, b: EpochObservations,
                      key: SatKey) -> tuple[float, float]:
    """(code_sd [m], phase_sd [cycles]) of a minus b for one satellite."""
    oa, ob = _locked(a, key), _locked(b, key)
    return oa.pseudorange - ob.pseudorange, oa.carrier_phase - ob.carrier_phase


def double_difference(a: EpochObservations, b: EpochObservations,
                      ref_key: SatKey, key: SatKey) -> tuple[float, float]:
    """(code_dd [m], phase_dd [cycles]): satellite SD minus reference SD."""
    if ref_key == key:
        raise SameSatellite(f"reference and target satellite are both {key}")
    code_s, phase_s = single_difference(a, b, key)
    code_r, phase_r = single_difference(a, b, ref_key)
    return code_s - code_r, phase_s - phase_r
