"""Reference station pipeline.

The station measures at its surveyed position through whatever RF
environment the adversary imposes, optionally checks itself with a
standalone solve, and broadcasts what it measured. It is honest but
deceivable: a captured receiver's fake observables flow out unmodified,
and the health flag is advisory rather than stream-stopping.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adversary import RfEnvironment
from .constants import WGS84_A
from .constellation import SatState, visible
from .observation import (EpochObservations, ErrorModel, ReceiverClock,
                          SignalSynthesizer)
from .spp import InsufficientSats, NavSolution, SppConfig, spp_solve
from .wire import ObservationEpochMsg, ObsRecord, StationInfo, encode_frame


@dataclass
class StationConfig:
    station_id: int
    surveyed_ecef: np.ndarray
    mountpoint: str = "RTK1"
    epoch_rate: float = 1.0  # Hz
    self_monitor_enabled: bool = True
    position_alarm_threshold: float = 5.0   # m
    clock_alarm_threshold: float = 1e-6     # s per epoch
    elevation_mask: float = math.radians(10.0)
    station_info_interval: int = 10         # epochs

    def __post_init__(self):
        self.surveyed_ecef = np.asarray(self.surveyed_ecef, dtype=float)
        radius = float(np.linalg.norm(self.surveyed_ecef))
        if abs(radius - WGS84_A) > 100_000.0:
            raise ValueError("surveyed position must be within 100 km of the surface")


@dataclass
class HealthReport:
    healthy: bool
    spp: Optional[NavSolution] = None
    reason: str = ""


class ReferenceStation:
    """One receiver, one mountpoint, one epoch loop."""

    def __init__(self, cfg: StationConfig, model: ErrorModel,
                 rf_env: Optional[RfEnvironment] = None,
                 spp_cfg: Optional[SppConfig] = None):
        self.cfg = cfg
        self.model = model
        self.rf = rf_env or RfEnvironment([], seed=model.seed)
        self.spp_cfg = spp_cfg or SppConfig()
        self.synth = SignalSynthesizer(model, f"station-{cfg.station_id}", stream=1)
        self.clock = ReceiverClock(model, stream=1)
        self.healthy = True
        self._prev_spp_clock: Optional[float] = None
        self._epoch_index = 0
        self._last_sent_health: Optional[bool] = None

    def station_epoch(self, t: float, sats: list[SatState]) -> EpochObservations:
        """Measure one epoch through the current RF environment."""
        vis = visible(self.cfg.surveyed_ecef, sats, self.cfg.elevation_mask)
        locked = self.rf.update_channels(t, vis, self.cfg.surveyed_ecef, self.synth)
        dt = 1.0 / self.cfg.epoch_rate
        bias = self.clock.step(dt)
        epoch = self.synth.synthesize(self.cfg.surveyed_ecef, bias, locked, t)
        sat_lookup = {s.key: s for s in vis}
        return self.rf.apply_observables(t, epoch, sat_lookup, self.cfg.surveyed_ecef)

    def self_monitor(self, epoch: EpochObservations,
                     sats: list[SatState]) -> HealthReport:
        """Standalone cross-check of the station's own measurements."""
        sat_lookup = {s.key: s for s in sats}
        try:
            spp = spp_solve(epoch, sat_lookup, self.model, self.spp_cfg,
                            initial=self.cfg.surveyed_ecef)
        except InsufficientSats:
            self._prev_spp_clock = None
            return HealthReport(healthy=False, reason="Insufficient")
        offset = float(np.linalg.norm(spp.position_ecef - self.cfg.surveyed_ecef))
        healthy = offset <= self.cfg.position_alarm_threshold
        reason = "" if healthy else "PositionAlarm"
        if self._prev_spp_clock is not None:
            jump = abs(spp.clock_bias - self._prev_spp_clock)
            if jump > self.cfg.clock_alarm_threshold:
                healthy = False
                reason = (reason + "+ClockAlarm") if reason else "ClockAlarm"
        self._prev_spp_clock = spp.clock_bias
        return HealthReport(healthy=healthy, spp=spp, reason=reason)

    def broadcast(self, epoch: EpochObservations, sats: list[SatState]) -> bytes:
        """Encode this epoch's frames; StationInfo is periodic or on health change."""
        if self.cfg.self_monitor_enabled:
            self.healthy = self.self_monitor(epoch, sats).healthy
        else:
            self.healthy = True
        out = b""
        if (self._epoch_index % self.cfg.station_info_interval == 0
                or self.healthy != self._last_sent_health):
            info = StationInfo(
                station_id=self.cfg.station_id,
                ecef_x=float(self.cfg.surveyed_ecef[0]),
                ecef_y=float(self.cfg.surveyed_ecef[1]),
                ecef_z=float(self.cfg.surveyed_ecef[2]),
                healthy=self.healthy)
            out += encode_frame(info.encode())
            self._last_sent_health = self.healthy
        records = tuple(
            ObsRecord(constellation_id=int(o.constellation_id), sat_id=o.sat_id,
                      pseudorange=o.pseudorange, carrier_phase=o.carrier_phase,
                      cn0=o.cn0, lock=o.lock, loss_count=o.loss_of_lock_count)
            for _, o in sorted(epoch.obs.items()))
        msg = ObservationEpochMsg(week=int(epoch.t // 604800.0),
                                  tow_ms=round((epoch.t % 604800.0) * 1000.0),
                                  records=records)
        out += encode_frame(msg.encode())
        self._epoch_index += 1
        return out

    def run_epoch(self, t: float, sats: list[SatState]) -> tuple[EpochObservations, bytes]:
        epoch = self.station_epoch(t, sats)
        return epoch, self.broadcast(epoch, sats)
