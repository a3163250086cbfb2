"""Rover RTK engine: code-DD DGNSS, carrier-phase float filter, integer
ambiguity resolution with ratio test, and the solution-mode ladder."""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.stats import chi2 as chi2_dist

from .ambiguity import fix_ambiguities
from .constants import C_LIGHT, LAMBDA_L1
from .constellation import SatState, look_geometry
from .geodesy import ecef_to_enu
from .observation import (EpochObservations, ErrorModel, Observation, SatKey,
                          double_difference)
from .spp import (InsufficientSats, NavSolution, SolutionMode, SppConfig,
                  no_solution, spp_solve)
from .wire import ObservationEpochMsg, StationInfo


class InsufficientCommonSats(RuntimeError):
    pass


class StaleCorrections(RuntimeError):
    pass


@dataclass
class RoverConfig:
    process_noise: float = 1.0            # m/sqrt(epoch) baseline random walk
    ratio_threshold: float = 3.0
    max_age: float = 10.0                 # s, corrections older than this are dropped
    elevation_mask: float = math.radians(10.0)
    ref_hysteresis: float = math.radians(2.0)
    amb_init_sigma: float = 100.0         # cycles
    chi2_reject_quantile: float = 0.9999  # innovation gate inside the filter
    fix_mean_var_limit: float = 25.0      # cycles^2; skip ILS while float is raw
    spp: SppConfig = field(default_factory=SppConfig)


@lru_cache(maxsize=512)
def chi2_quantile(q: float, dof: int) -> float:
    return float(chi2_dist.ppf(q, dof))


def epoch_from_msg(msg: ObservationEpochMsg) -> EpochObservations:
    """View a broadcast observation message as a receiver epoch."""
    obs = {}
    for rec in msg.records:
        if not rec.lock:
            continue
        key = (rec.constellation_id, rec.sat_id)
        obs[key] = Observation(
            sat_id=rec.sat_id, constellation_id=rec.constellation_id,
            pseudorange=rec.pseudorange, carrier_phase=rec.carrier_phase,
            cn0=rec.cn0, lock=True, loss_of_lock_count=rec.loss_count)
    return EpochObservations(t=msg.t, receiver_id="station-stream", obs=obs,
                             rx_clock_bias=0.0)


def common_dd_keys(rover_epoch: EpochObservations, station_epoch: EpochObservations,
                   sats: dict[SatKey, SatState], station_pos: np.ndarray,
                   mask: float) -> list[SatKey]:
    keys = []
    for key in rover_epoch.locked_keys():
        if key not in sats or key not in station_epoch.obs:
            continue
        if not station_epoch.obs[key].lock:
            continue
        if look_geometry(station_pos, sats[key]).elevation >= mask:
            keys.append(key)
    return keys


def select_reference(keys: list[SatKey], sats: dict[SatKey, SatState],
                     station_pos: np.ndarray, current: Optional[SatKey],
                     mask: float, hysteresis: float) -> SatKey:
    """Highest station elevation, kept until the current one nears the mask."""
    elevations = {k: look_geometry(station_pos, sats[k]).elevation for k in keys}
    if current in elevations and elevations[current] >= mask + hysteresis:
        return current
    return max(keys, key=lambda k: elevations[k])


def _sd_sigmas(keys: list[SatKey], sats: dict[SatKey, SatState],
               station_pos: np.ndarray, sigma_zenith: float) -> dict[SatKey, float]:
    out = {}
    for k in keys:
        el = look_geometry(station_pos, sats[k]).elevation
        out[k] = math.sqrt(2.0) * sigma_zenith / math.sin(el)
    return out


def dd_covariance(others: list[SatKey], ref: SatKey, sd_sigma: dict[SatKey, float]) -> np.ndarray:
    m = len(others)
    R = np.full((m, m), sd_sigma[ref] ** 2)
    R[np.diag_indices(m)] += np.array([sd_sigma[k] ** 2 for k in others])
    return R


def _dd_geometry(others: list[SatKey], ref: SatKey, sats: dict[SatKey, SatState],
                 rover_pos: np.ndarray, station_pos: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Predicted DD ranges and their Jacobian w.r.t. the baseline."""
    def sd_range(key):
        sat = sats[key].pos_ecef
        return (float(np.linalg.norm(sat - rover_pos))
                - float(np.linalg.norm(sat - station_pos)))

    def unit(key):
        sat = sats[key].pos_ecef
        return (sat - rover_pos) / float(np.linalg.norm(sat - rover_pos))

    sd_ref = sd_range(ref)
    u_ref = unit(ref)
    pred = np.array([sd_range(k) - sd_ref for k in others])
    H = np.array([u_ref - unit(k) for k in others])
    return pred, H


def dgnss_solve(rover_epoch: EpochObservations, station_epoch: EpochObservations,
                station_pos: np.ndarray, sats: dict[SatKey, SatState],
                model: ErrorModel, cfg: RoverConfig,
                ref: Optional[SatKey] = None,
                initial: Optional[np.ndarray] = None) -> NavSolution:
    """Weighted LS on code double differences for the baseline vector."""
    station_pos = np.asarray(station_pos, dtype=float)
    common = common_dd_keys(rover_epoch, station_epoch, sats, station_pos,
                            cfg.elevation_mask)
    if len(common) < 4:
        raise InsufficientCommonSats(f"{len(common)} common satellites")
    if ref is None:
        ref = select_reference(common, sats, station_pos, None,
                               cfg.elevation_mask, cfg.ref_hysteresis)
    others = [k for k in common if k != ref]
    meas = np.array([double_difference(rover_epoch, station_epoch, ref, k)[0]
                     for k in others])
    sd_sigma = _sd_sigmas(common, sats, station_pos, model.code_noise_sigma_zenith)
    W = np.linalg.inv(dd_covariance(others, ref, sd_sigma))
    b = np.zeros(3) if initial is None else np.asarray(initial, float).copy()
    for _ in range(10):
        pred, H = _dd_geometry(others, ref, sats, station_pos + b, station_pos)
        v = meas - pred
        delta = np.linalg.solve(H.T @ W @ H, H.T @ W @ v)
        b += delta
        if float(np.linalg.norm(delta)) < 1e-4:
            break
    post = v - H @ delta
    dof = len(others) - 3
    chi2 = float(post @ W @ post)
    scale = max(1.0, chi2 / dof) if dof > 0 else 1.0
    cov = np.linalg.inv(H.T @ W @ H) * scale
    return NavSolution(
        t=rover_epoch.t, position_ecef=station_pos + b, clock_bias=float("nan"),
        mode=SolutionMode.DGNSS, covariance=cov, n_sats=len(common),
        dd_residual_chi2=chi2, dd_dof=max(0, dof),
        baseline_enu=ecef_to_enu(b, station_pos))


class RtkFilter:
    """Kalman float filter over [baseline, DD ambiguities].

    Baseline states follow a white-noise position model; ambiguity states are
    constant, spawned per DD satellite and reset on loss-of-lock events. Two
    consecutive innovation-gate failures hard-reset the filter.
    """

    def __init__(self, model: ErrorModel, cfg: RoverConfig):
        self.model = model
        self.cfg = cfg
        self.reset()

    def reset(self) -> None:
        self.keys: list[SatKey] = []
        self.ref: Optional[SatKey] = None
        self.x = np.zeros(3)
        self.P = np.eye(3) * 1e4
        self.loss_counts: dict[SatKey, tuple[int, int]] = {}
        self.consecutive_rejects = 0
        self.initialized = False

    # -- state bookkeeping --------------------------------------------------
    def _remove_keys(self, drop: list[SatKey]) -> None:
        if not drop:
            return
        idx = [3 + self.keys.index(k) for k in drop]
        keep = [i for i in range(len(self.x)) if i not in idx]
        self.x = self.x[keep]
        self.P = self.P[np.ix_(keep, keep)]
        for k in drop:
            self.keys.remove(k)
            self.loss_counts.pop(k, None)

    def _add_key(self, key: SatKey, n0: float, losses: tuple[int, int]) -> None:
        self.keys.append(key)
        self.x = np.append(self.x, n0)
        n = len(self.x)
        P = np.zeros((n, n))
        P[:n - 1, :n - 1] = self.P
        P[n - 1, n - 1] = self.cfg.amb_init_sigma ** 2
        self.P = P
        self.loss_counts[key] = losses

    def _switch_reference(self, new_ref: SatKey, keep_old_as_state: bool) -> None:
        """Re-express DD ambiguities against a new reference satellite."""
        old_ref = self.ref
        j = self.keys.index(new_ref)
        n = len(self.x)
        T = np.eye(n)
        col = 3 + j
        for i, k in enumerate(self.keys):
            if k != new_ref:
                T[3 + i, col] -= 1.0
        T[col, col] = -1.0
        self.x = T @ self.x
        self.P = T @ self.P @ T.T
        # Slot j now holds the old reference's ambiguity (negated new-ref DD).
        self.keys[j] = old_ref
        self.ref = new_ref
        if not keep_old_as_state:
            self._remove_keys([old_ref])

    # -- epoch update --------------------------------------------------------
    def update(self, rover_epoch: EpochObservations, station_epoch: EpochObservations,
               station_pos: np.ndarray, sats: dict[SatKey, SatState]
               ) -> Optional[NavSolution]:
        cfg = self.cfg
        station_pos = np.asarray(station_pos, dtype=float)
        common = common_dd_keys(rover_epoch, station_epoch, sats, station_pos,
                                cfg.elevation_mask)
        if len(common) < 4:
            raise InsufficientCommonSats(f"{len(common)} common satellites")

        def losses(key: SatKey) -> tuple[int, int]:
            return (rover_epoch.obs[key].loss_of_lock_count,
                    station_epoch.obs[key].loss_of_lock_count)

        if not self.initialized:
            seed_sol = dgnss_solve(rover_epoch, station_epoch, station_pos, sats,
                                   self.model, cfg)
            self.x[:3] = seed_sol.position_ecef - station_pos
            self.P = np.eye(3) * max(1.0, 4.0 * float(np.trace(seed_sol.covariance)))
            self.ref = select_reference(common, sats, station_pos, None,
                                        cfg.elevation_mask, cfg.ref_hysteresis)
            self.loss_counts[self.ref] = losses(self.ref)
            self.initialized = True

        # Reference maintenance (the reference must stay in the common set,
        # and a switch is only possible onto a satellite that has a state).
        if self.ref not in common:
            candidates = [k for k in self.keys if k in common]
            if not candidates:
                self.reset()
                return self.update(rover_epoch, station_epoch, station_pos, sats)
            new_ref = select_reference(candidates, sats, station_pos, None,
                                       cfg.elevation_mask, cfg.ref_hysteresis)
            self._switch_reference(new_ref, keep_old_as_state=False)
        else:
            new_ref = select_reference(common, sats, station_pos, self.ref,
                                       cfg.elevation_mask, cfg.ref_hysteresis)
            if new_ref != self.ref and new_ref in self.keys:
                self._switch_reference(new_ref, keep_old_as_state=True)

        # A lock slip on the reference invalidates every DD ambiguity.
        if self.loss_counts.get(self.ref) != losses(self.ref):
            self._remove_keys(list(self.keys))
            self.loss_counts[self.ref] = losses(self.ref)

        # Drop states that left the common set or slipped their lock.
        drop = [k for k in self.keys
                if k not in common or k == self.ref or self.loss_counts.get(k) != losses(k)]
        self._remove_keys(drop)

        ref = self.ref
        for key in common:
            if key == ref or key in self.keys:
                continue
            code_dd, phase_dd = double_difference(rover_epoch, station_epoch, ref, key)
            self._add_key(key, phase_dd - code_dd / LAMBDA_L1, losses(key))

        others = self.keys
        if len(others) < 1:
            raise InsufficientCommonSats("no double-difference satellites")

        # Predict: white-noise baseline, constant ambiguities.
        self.P[:3, :3] += np.eye(3) * cfg.process_noise ** 2
        self.P = 0.5 * (self.P + self.P.T)

        meas_code = np.empty(len(others))
        meas_phase = np.empty(len(others))
        for i, key in enumerate(others):
            code_dd, phase_dd = double_difference(rover_epoch, station_epoch, ref, key)
            meas_code[i] = code_dd
            meas_phase[i] = phase_dd * LAMBDA_L1
        z = np.concatenate([meas_code, meas_phase])

        b = self.x[:3]
        pred, H_geo = _dd_geometry(others, ref, sats, station_pos + b, station_pos)
        m = len(others)
        n = len(self.x)
        H = np.zeros((2 * m, n))
        H[:m, :3] = H_geo
        H[m:, :3] = H_geo
        H[m:, 3:] = np.eye(m) * LAMBDA_L1
        h = np.concatenate([pred, pred + LAMBDA_L1 * self.x[3:]])

        all_keys = [ref] + others
        sd_code = _sd_sigmas(all_keys, sats, station_pos, self.model.code_noise_sigma_zenith)
        sd_phase = _sd_sigmas(all_keys, sats, station_pos,
                              max(self.model.phase_noise_sigma_zenith, 1e-6))
        sd_code = {k: max(v, 1e-4) for k, v in sd_code.items()}
        R = np.zeros((2 * m, 2 * m))
        R[:m, :m] = dd_covariance(others, ref, sd_code)
        R[m:, m:] = dd_covariance(others, ref, sd_phase)

        v = z - h
        S = H @ self.P @ H.T + R
        try:
            Sinv_v = np.linalg.solve(S, v)
        except np.linalg.LinAlgError:
            self.reset()
            return None
        chi2 = float(v @ Sinv_v)
        dof = 2 * m
        if chi2 > chi2_quantile(cfg.chi2_reject_quantile, dof):
            self.consecutive_rejects += 1
            if self.consecutive_rejects >= 2:
                self.reset()
                return None
            # Skip this update; report the coasted state with the bad chi2.
            return self._solution(rover_epoch.t, station_pos, len(common), chi2, dof)
        self.consecutive_rejects = 0

        K = self.P @ H.T @ np.linalg.inv(S)
        self.x = self.x + K @ v
        IKH = np.eye(n) - K @ H
        self.P = IKH @ self.P @ IKH.T + K @ R @ K.T
        self.P = 0.5 * (self.P + self.P.T)
        return self._solution(rover_epoch.t, station_pos, len(common), chi2, dof)

    def _solution(self, t: float, station_pos: np.ndarray, n_sats: int,
                  chi2: float, dof: int) -> NavSolution:
        b = self.x[:3].copy()
        return NavSolution(
            t=t, position_ecef=station_pos + b, clock_bias=float("nan"),
            mode=SolutionMode.FLOAT, covariance=self.P[:3, :3].copy(),
            n_sats=n_sats, dd_residual_chi2=chi2, dd_dof=dof,
            baseline_enu=ecef_to_enu(b, station_pos))

    def try_fix(self, float_sol: NavSolution, station_pos: np.ndarray
                ) -> Optional[NavSolution]:
        """Attempt integer resolution and condition the baseline on it."""
        k = len(self.keys)
        if k < 4:
            return None
        Qa = self.P[3:, 3:]
        if float(np.mean(np.diag(Qa))) > self.cfg.fix_mean_var_limit:
            return None
        res = fix_ambiguities(self.x[3:], Qa, self.cfg.ratio_threshold)
        if res is None:
            return None
        Qba = self.P[:3, 3:]
        try:
            gain = Qba @ np.linalg.inv(0.5 * (Qa + Qa.T))
        except np.linalg.LinAlgError:
            return None
        b_fixed = self.x[:3] - gain @ (self.x[3:] - res.integers)
        cov = self.P[:3, :3] - gain @ Qba.T
        cov = 0.5 * (cov + cov.T)
        station_pos = np.asarray(station_pos, dtype=float)
        return NavSolution(
            t=float_sol.t, position_ecef=station_pos + b_fixed,
            clock_bias=float("nan"), mode=SolutionMode.FIXED, covariance=cov,
            n_sats=float_sol.n_sats, ratio=res.ratio,
            dd_residual_chi2=float_sol.dd_residual_chi2, dd_dof=float_sol.dd_dof,
            baseline_enu=ecef_to_enu(b_fixed, station_pos))
