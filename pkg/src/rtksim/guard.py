"""Rover-side correction gate.

Corrections are used only while the corrected solution stays consistent with
standalone positioning and the station's own stream stays consistent with
its broadcast coordinates. A rejection latches for a configurable number of
epochs to stop accept/reject flapping during attack onset.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .constellation import SatState
from .observation import ErrorModel, SatKey
from .rover import chi2_quantile, epoch_from_msg
from .spp import InsufficientSats, NavSolution, SppConfig, spp_solve
from .wire import ObservationEpochMsg, StationInfo


class GateReason(Enum):
    SOLUTION_DIVERGENCE = "SolutionDivergence"
    RESIDUAL_CHI2 = "ResidualChi2"
    STATION_SELF_INCONSISTENT = "StationSelfInconsistent"
    STATION_UNHEALTHY_FLAG = "StationUnhealthyFlag"
    STALE = "Stale"


@dataclass
class GateConfig:
    enabled: bool = True
    consistency_k: float = 3.0
    chi2_quantile: float = 0.999
    station_check_threshold: float = 10.0  # m
    hold_epochs: int = 5
    # Individual tests can be switched off for ablation studies.
    check_divergence: bool = True
    check_residual: bool = True
    check_station_stream: bool = True
    check_health_flag: bool = True

    def __post_init__(self):
        if self.consistency_k <= 0:
            raise ValueError("consistency_k must be > 0")
        if not 0.0 < self.chi2_quantile < 1.0:
            raise ValueError("chi2_quantile must be in (0, 1)")


@dataclass
class GateVerdict:
    accept: bool
    reasons: frozenset[GateReason] = frozenset()
    triggered: bool = False      # a fresh check fired this epoch
    low_confidence: bool = False  # no standalone solution to compare against

    def __post_init__(self):
        if self.accept and self.reasons:
            raise ValueError("accepting verdicts carry no reasons")


def station_stream_spp(msg: ObservationEpochMsg, sats: dict[SatKey, SatState],
                       model: ErrorModel, cfg: SppConfig = SppConfig(),
                       initial: Optional[np.ndarray] = None) -> NavSolution:
    """Standalone solution of the station as seen through its own stream."""
    epoch = epoch_from_msg(msg)
    if len(epoch.obs) < 4:
        raise InsufficientSats(f"{len(epoch.obs)} records in stream message")
    return spp_solve(epoch, sats, model, cfg, initial=initial)


class CorrectionGate:
    """Per-epoch gate with hysteresis; owns no state beyond the hold counter."""

    def __init__(self, cfg: GateConfig, model: ErrorModel,
                 spp_cfg: Optional[SppConfig] = None):
        self.cfg = cfg
        self.model = model
        self.spp_cfg = spp_cfg or SppConfig()
        self._hold = 0
        self._latched: frozenset[GateReason] = frozenset()

    def reset(self) -> None:
        self._hold = 0
        self._latched = frozenset()

    def evaluate(self, spp: Optional[NavSolution], rtk: Optional[NavSolution],
                 station_info: Optional[StationInfo],
                 obs_msg: Optional[ObservationEpochMsg],
                 sats: dict[SatKey, SatState], stale: bool) -> GateVerdict:
        cfg = self.cfg
        reasons: set[GateReason] = set()

        if stale:
            reasons.add(GateReason.STALE)
        if cfg.check_health_flag and station_info is not None and not station_info.healthy:
            reasons.add(GateReason.STATION_UNHEALTHY_FLAG)
        if (cfg.check_station_stream and station_info is not None
                and obs_msg is not None and len(obs_msg.records) >= 4):
            claimed = np.array([station_info.ecef_x, station_info.ecef_y,
                                station_info.ecef_z])
            try:
                stream = station_stream_spp(obs_msg, sats, self.model,
                                            self.spp_cfg, initial=claimed)
                if float(np.linalg.norm(stream.position_ecef - claimed)) > cfg.station_check_threshold:
                    reasons.add(GateReason.STATION_SELF_INCONSISTENT)
            except InsufficientSats:
                pass
        if cfg.check_divergence and spp is not None and rtk is not None:
            gap = float(np.linalg.norm(rtk.position_ecef - spp.position_ecef))
            if gap > cfg.consistency_k * spp.sigma3d():
                reasons.add(GateReason.SOLUTION_DIVERGENCE)
        if (cfg.check_residual and rtk is not None and rtk.dd_dof > 0
                and math.isfinite(rtk.dd_residual_chi2)):
            if rtk.dd_residual_chi2 > chi2_quantile(cfg.chi2_quantile, rtk.dd_dof):
                reasons.add(GateReason.RESIDUAL_CHI2)

        if reasons:
            self._hold = cfg.hold_epochs
            self._latched = frozenset(reasons)
            return GateVerdict(accept=False, reasons=self._latched, triggered=True,
                               low_confidence=spp is None)
        if self._hold > 0:
            self._hold -= 1
            return GateVerdict(accept=False, reasons=self._latched,
                               low_confidence=spp is None)
        return GateVerdict(accept=True, low_confidence=spp is None)
