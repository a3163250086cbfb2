"""RF-environment models applied at the reference station.

Attacks act on the station receiver's observables, never on the correction
link: synchronous spoofing lifts off code-phase aligned and drags every
captured channel's pseudorange coherently toward a commanded position and
clock; asynchronous spoofing appears misaligned and only captures channels
that reacquire under the spoofer's power advantage; barrage jamming
suppresses C/N0 until tracking is lost.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .constants import (C_LIGHT, CN0_ACQUIRE_THRESHOLD, CN0_TRACK_THRESHOLD,
                        HALF_CHIP_M, LAMBDA_L1)
from .constellation import SatState, look_geometry
from .observation import (EpochObservations, Observation, SatKey,
                          SignalSynthesizer, clean_cn0)


class AttackKind(Enum):
    SYNC_SPOOF = "sync_spoof"
    ASYNC_SPOOF = "async_spoof"
    JAM = "jam"


class SignalSource(Enum):
    AUTHENTIC = "authentic"
    SPOOFED = "spoofed"


@dataclass
class AttackScenario:
    kind: AttackKind
    t_start: float
    t_end: float
    target_position: Optional[np.ndarray] = None   # ECEF, spoof kinds
    target_clock_offset: Optional[float] = None    # s; None holds the lift-off offset
    drag_rate: float = 5.0                         # m/s
    power_advantage: float = 6.0                   # dB
    code_offset_at_start: Optional[float] = None   # m; defaults 0 sync / 300 async
    jsr: float = 0.0                               # dB, jam kind
    phase_coherent: bool = True
    capture_probability: float = 1.0

    def __post_init__(self):
        if self.t_start >= self.t_end:
            raise ValueError("attack window must satisfy t_start < t_end")
        if self.kind is not AttackKind.JAM and self.drag_rate <= 0:
            raise ValueError("drag_rate must be > 0 for spoofing attacks")
        if self.code_offset_at_start is None:
            self.code_offset_at_start = 300.0 if self.kind is AttackKind.ASYNC_SPOOF else 0.0
        if self.target_clock_offset is None:
            self.target_clock_offset = self.code_offset_at_start / C_LIGHT

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_end


def capture_check(code_offset: float, power_advantage: float,
                  probability: float = 1.0,
                  rng: Optional[np.random.Generator] = None) -> bool:
    """Lift-off condition: enough overpower and within the code pull-in region."""
    if power_advantage < 3.0 or abs(code_offset) > HALF_CHIP_M:
        return False
    if probability >= 1.0 or rng is None:
        return probability >= 1.0
    return bool(rng.random() < probability)


def commanded_state(scenario: AttackScenario, t: float,
                    surveyed_ecef: np.ndarray) -> tuple[np.ndarray, float]:
    """Attacker-commanded station position and clock offset at time t."""
    elapsed = max(0.0, t - scenario.t_start)
    pos = np.asarray(surveyed_ecef, dtype=float)
    if scenario.target_position is not None:
        delta = np.asarray(scenario.target_position, float) - pos
        dist = float(np.linalg.norm(delta))
        if dist > 0:
            pos = pos + delta / dist * min(scenario.drag_rate * elapsed, dist)
    clock = scenario.code_offset_at_start / C_LIGHT
    remaining = scenario.target_clock_offset - clock
    if remaining != 0.0:
        step = min(scenario.drag_rate / C_LIGHT * elapsed, abs(remaining))
        clock += math.copysign(step, remaining)
    return pos, clock


def spoof_pseudorange_offset(scenario: AttackScenario, t: float, sat: SatState,
                             surveyed_ecef: np.ndarray) -> float:
    """Coordinated pseudorange shift for one satellite at time t."""
    p_cmd, clock_cmd = commanded_state(scenario, t, surveyed_ecef)
    rho_cmd = float(np.linalg.norm(sat.pos_ecef - p_cmd))
    rho_true = float(np.linalg.norm(sat.pos_ecef - np.asarray(surveyed_ecef, float)))
    return rho_cmd - rho_true + C_LIGHT * clock_cmd


def _spoof_epoch(epoch: EpochObservations, scenario: AttackScenario, t: float,
                 sats: dict[SatKey, SatState], surveyed_ecef: np.ndarray,
                 captured: set[SatKey]) -> EpochObservations:
    obs = dict(epoch.obs)
    for key in captured:
        o = obs.get(key)
        sat = sats.get(key)
        if o is None or sat is None:
            continue
        delta = spoof_pseudorange_offset(scenario, t, sat, surveyed_ecef)
        phase = o.carrier_phase + (delta / LAMBDA_L1 if scenario.phase_coherent else 0.0)
        obs[key] = Observation(
            sat_id=o.sat_id, constellation_id=o.constellation_id,
            pseudorange=o.pseudorange + delta, carrier_phase=phase,
            cn0=min(60.0, o.cn0 + scenario.power_advantage),
            lock=True, loss_of_lock_count=o.loss_of_lock_count)
    return EpochObservations(epoch.t, epoch.receiver_id, obs, epoch.rx_clock_bias)


def sync_spoof_observables(epoch: EpochObservations, scenario: AttackScenario,
                           t: float, sats: dict[SatKey, SatState],
                           surveyed_ecef: np.ndarray,
                           captured: Optional[set[SatKey]] = None) -> EpochObservations:
    """Captured channels report observables consistent with the commanded state."""
    if captured is None:
        captured = set(epoch.obs)
    return _spoof_epoch(epoch, scenario, t, sats, surveyed_ecef, captured)


def async_spoof_observables(epoch: EpochObservations, scenario: AttackScenario,
                            t: float, sats: dict[SatKey, SatState],
                            surveyed_ecef: np.ndarray,
                            captured: set[SatKey]) -> EpochObservations:
    """Same drag model as sync spoofing, restricted to reacquired channels."""
    return _spoof_epoch(epoch, scenario, t, sats, surveyed_ecef, captured)


def jam_observables(epoch: EpochObservations, jsr: float) -> EpochObservations:
    """Suppress C/N0 by the J/S ratio; channels below threshold lose lock."""
    if jsr < 0:
        raise ValueError("jsr must be >= 0")
    obs = {}
    for key, o in epoch.obs.items():
        cn0 = o.cn0 - jsr
        if cn0 < CN0_TRACK_THRESHOLD:
            continue
        obs[key] = Observation(o.sat_id, o.constellation_id, o.pseudorange,
                               o.carrier_phase, cn0, o.lock, o.loss_of_lock_count)
    return EpochObservations(epoch.t, epoch.receiver_id, obs, epoch.rx_clock_bias)


@dataclass
class ChannelState:
    locked: bool = True
    source: SignalSource = SignalSource.AUTHENTIC


class RfEnvironment:
    """Per-channel RF state machine driven by the harness clock.

    Outside attack windows the environment is the identity on epochs.
    """

    def __init__(self, attacks: list[AttackScenario], seed: int = 0):
        for a, b in zip(attacks, attacks[1:]):
            if b.t_start < a.t_end:
                raise ValueError("attack windows must be ordered and non-overlapping")
        self.attacks = list(attacks)
        self.channels: dict[SatKey, ChannelState] = {}
        self._rng = np.random.default_rng(np.random.SeedSequence([seed, 0xADF]))

    def active_attack(self, t: float) -> Optional[AttackScenario]:
        for atk in self.attacks:
            if atk.active(t):
                return atk
        return None

    def update_channels(self, t: float, vis: list[SatState],
                        surveyed_ecef: np.ndarray,
                        synth: SignalSynthesizer) -> list[SatState]:
        """Advance lock/source state; returns the satellites locked this epoch."""
        atk = self.active_attack(t)
        vis_keys = {s.key for s in vis}
        # Channels whose satellite set: lock is gone until it rises again.
        for key in [k for k in self.channels if k not in vis_keys]:
            if self.channels[key].locked:
                synth.mark_lock_lost(key)
            del self.channels[key]

        locked: list[SatState] = []
        for sat in vis:
            ch = self.channels.get(sat.key)
            is_new = ch is None
            if is_new:
                ch = ChannelState(locked=False, source=SignalSource.AUTHENTIC)
                self.channels[sat.key] = ch
            cn0 = clean_cn0(look_geometry(surveyed_ecef, sat).elevation)

            if atk is not None and atk.kind is AttackKind.JAM:
                cn0_eff = cn0 - atk.jsr
                if ch.locked and cn0_eff < CN0_TRACK_THRESHOLD:
                    ch.locked = False
                    synth.mark_lock_lost(sat.key)
                elif not ch.locked and cn0_eff >= CN0_ACQUIRE_THRESHOLD:
                    ch.locked = True
                    ch.source = SignalSource.AUTHENTIC
            elif atk is not None and atk.kind in (AttackKind.SYNC_SPOOF,
                                                  AttackKind.ASYNC_SPOOF):
                spoof_cn0 = cn0 + atk.power_advantage
                if ch.locked and ch.source is SignalSource.AUTHENTIC:
                    # Pull-off attempt against a tracking channel.
                    offset = spoof_pseudorange_offset(atk, t, sat, surveyed_ecef)
                    if capture_check(offset, atk.power_advantage,
                                     atk.capture_probability, self._rng):
                        ch.source = SignalSource.SPOOFED
                elif not ch.locked:
                    # Reacquisition locks to the strongest signal present.
                    if spoof_cn0 >= CN0_ACQUIRE_THRESHOLD and capture_check(
                            0.0, atk.power_advantage, atk.capture_probability,
                            self._rng):
                        ch.locked = True
                        ch.source = SignalSource.SPOOFED
                    elif cn0 >= CN0_ACQUIRE_THRESHOLD:
                        ch.locked = True
                        ch.source = SignalSource.AUTHENTIC
            else:
                # Benign sky: spoofed channels fall back to the authentic
                # signal with a loss-of-lock event; unlocked channels relock.
                if ch.locked and ch.source is SignalSource.SPOOFED:
                    synth.mark_lock_lost(sat.key)
                    ch.source = SignalSource.AUTHENTIC
                elif not ch.locked and cn0 >= CN0_ACQUIRE_THRESHOLD:
                    ch.locked = True
                    ch.source = SignalSource.AUTHENTIC

            if ch.locked:
                locked.append(sat)
        return locked

    def apply_observables(self, t: float, epoch: EpochObservations,
                          sats: dict[SatKey, SatState],
                          surveyed_ecef: np.ndarray) -> EpochObservations:
        """Overlay the active attack on an authentic epoch."""
        atk = self.active_attack(t)
        if atk is None:
            return epoch
        if atk.kind is AttackKind.JAM:
            return jam_observables(epoch, atk.jsr)
        captured = {k for k, ch in self.channels.items()
                    if ch.locked and ch.source is SignalSource.SPOOFED}
        return _spoof_epoch(epoch, atk, t, sats, surveyed_ecef, captured)

    def captured_keys(self) -> set[SatKey]:
        return {k for k, ch in self.channels.items()
                if ch.locked and ch.source is SignalSource.SPOOFED}
