"""Standalone single-point positioning and the shared solution types."""

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import numpy as np

from .constants import C_LIGHT
from .constellation import SatState, look_geometry
from .geodesy import ecef_to_enu
from .observation import (EpochObservations, ErrorModel, SatKey, iono_delay,
                          tropo_delay)


class SolutionMode(IntEnum):
    NONE = 0
    STANDALONE = 1
    DGNSS = 2
    FLOAT = 3
    FIXED = 4


class InsufficientSats(RuntimeError):
    pass


class NoConvergence(RuntimeError):
    pass


@dataclass
class NavSolution:
    t: float
    position_ecef: np.ndarray
    clock_bias: float
    mode: SolutionMode
    covariance: np.ndarray
    n_sats: int
    ratio: float = float("nan")
    dd_residual_chi2: float = float("nan")
    dd_dof: int = 0
    baseline_enu: Optional[np.ndarray] = None

    def enu_error(self, truth_ecef: np.ndarray) -> np.ndarray:
        return ecef_to_enu(self.position_ecef - np.asarray(truth_ecef, float),
                           truth_ecef)

    def sigma3d(self) -> float:
        return float(math.sqrt(max(0.0, np.trace(self.covariance))))


def no_solution(t: float) -> NavSolution:
    return NavSolution(t=t, position_ecef=np.full(3, np.nan), clock_bias=float("nan"),
                       mode=SolutionMode.NONE, covariance=np.full((3, 3), np.nan),
                       n_sats=0)


@dataclass
class SppConfig:
    """Receiver-side correction model and solver settings.

    The troposphere model matches the simulated delay; the ionosphere model
    is applied at a sub-unity efficiency, leaving the residual that makes
    differential positioning worthwhile. The residual budget is carried in
    the measurement weights so the covariance stays conservative.
    """

    iono_correction_factor: float = 0.8
    min_sats: int = 4
    max_iterations: int = 10
    convergence_m: float = 1e-4


def measurement_sigma(model: ErrorModel, cfg: SppConfig, elevation: float) -> float:
    sin_el = math.sin(elevation)
    residual_iono = (1.0 - cfg.iono_correction_factor) * model.iono_zenith / sin_el
    noise = model.code_noise_sigma_zenith / sin_el
    return math.sqrt(noise * noise + residual_iono * residual_iono)


def spp_solve(epoch: EpochObservations, sats: dict[SatKey, SatState],
              model: ErrorModel, cfg: SppConfig = SppConfig(),
              initial: Optional[np.ndarray] = None) -> NavSolution:
    """Iterative weighted least squares on pseudoranges for (x, y, z, c*dt)."""
    used = [(k, epoch.obs[k]) for k in epoch.locked_keys() if k in sats]
    if len(used) < cfg.min_sats:
        raise InsufficientSats(f"{len(used)} locked satellites, need {cfg.min_sats}")

    pos = np.zeros(3) if initial is None else np.asarray(initial, dtype=float).copy()
    cdt = 0.0
    n = len(used)
    h_mat = np.zeros((n, 4))
    resid = np.zeros(n)
    weights = np.ones(n)
    last_update = math.inf
    for iteration in range(cfg.max_iterations):
        # Until the estimate reaches Earth scale, skip the atmosphere model
        # and weighting; elevations are meaningless from deep inside.
        warm = np.linalg.norm(pos) > 6.0e6
        for i, (key, obs) in enumerate(used):
            sat = sats[key]
            geo = look_geometry(pos, sat) if warm else None
            rho = float(np.linalg.norm(sat.pos_ecef - pos))
            unit = (sat.pos_ecef - pos) / rho
            corrected = obs.pseudorange + C_LIGHT * sat.clock_bias
            if warm:
                corrected -= tropo_delay(model, geo.elevation)
                corrected -= cfg.iono_correction_factor * iono_delay(model, pos, geo.elevation)
                weights[i] = 1.0 / measurement_sigma(model, cfg, geo.elevation) ** 2
            else:
                weights[i] = 1.0
            resid[i] = corrected - rho - cdt
            h_mat[i, :3] = -unit
            h_mat[i, 3] = 1.0
        wh = h_mat * weights[:, None]
        normal = h_mat.T @ wh
        try:
            delta = np.linalg.solve(normal, wh.T @ resid)
        except np.linalg.LinAlgError as err:
            raise NoConvergence(f"singular geometry: {err}") from err
        pos += delta[:3]
        cdt += delta[3]
        step = float(np.linalg.norm(delta[:3]))
        if step < cfg.convergence_m and warm:
            break
        if iteration == cfg.max_iterations - 1 and step > max(1.0, last_update):
            raise NoConvergence(f"diverging after {cfg.max_iterations} iterations")
        last_update = step

    post = resid - h_mat @ delta
    dof = n - 4
    chi2 = float(np.sum(weights * post * post))
    scale = max(1.0, chi2 / dof) if dof > 0 else 1.0
    cov4 = np.linalg.inv(normal) * scale
    return NavSolution(
        t=epoch.t, position_ecef=pos, clock_bias=cdt / C_LIGHT,
        mode=SolutionMode.STANDALONE, covariance=cov4[:3, :3], n_sats=n,
        dd_residual_chi2=chi2, dd_dof=max(0, dof))
