"""UMi street-canyon link budget: LOS probability, pathloss, SINR, decoding.

Pathloss is the single-slope UMi-Street-Canyon model of 3GPP TR 38.901 with
distances in meters and frequencies in GHz, applied at every distance: no
breakpoint is modelled. Decoding is a hard SINR threshold; there is no fast
fading.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

THERMAL_NOISE_DBM_HZ = -174.0
LOS_CUTOFF_M = 18.0
LOS_DECAY_M = 36.0


class ChannelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    carrier_freq_ghz: float = Field(3.5, ge=0.5, le=100.0)
    tx_power_dbm: float = Field(23.0, allow_inf_nan=False)
    noise_figure_db: float = Field(9.0, allow_inf_nan=False)
    # 10 MHz pool split over the default 4 subchannels
    bandwidth_per_subchannel_hz: float = Field(2.5e6, gt=0, allow_inf_nan=False)
    shadow_sigma_los_db: float = Field(4.0, ge=0, allow_inf_nan=False)
    shadow_sigma_nlos_db: float = Field(7.82, ge=0, allow_inf_nan=False)
    antenna_height_m: float = Field(1.5, gt=0, allow_inf_nan=False)
    sinr_decode_threshold_db: float = Field(2.8, allow_inf_nan=False)

    @property
    def noise_dbm(self) -> float:
        return noise_power_dbm(self)


def noise_power_dbm(cfg: ChannelConfig) -> float:
    return THERMAL_NOISE_DBM_HZ + cfg.noise_figure_db + 10.0 * math.log10(cfg.bandwidth_per_subchannel_hz)


def los_probability(d2d: float) -> float:
    if d2d < 0:
        raise ValueError(f"distance must be >= 0, got {d2d}")
    if d2d <= LOS_CUTOFF_M:
        return 1.0
    return LOS_CUTOFF_M / d2d + math.exp(-d2d / LOS_DECAY_M) * (1.0 - LOS_CUTOFF_M / d2d)


def los_probability_array(d2d: np.ndarray) -> np.ndarray:
    d = np.maximum(d2d, LOS_CUTOFF_M)
    p = LOS_CUTOFF_M / d + np.exp(-d / LOS_DECAY_M) * (1.0 - LOS_CUTOFF_M / d)
    return np.where(d2d <= LOS_CUTOFF_M, 1.0, p)


def _pl_los(d3d, f_ghz):
    return 32.4 + 21.0 * np.log10(d3d) + 20.0 * math.log10(f_ghz)


def _pl_nlos(d3d, f_ghz, h_ut):
    nlos = 35.3 * np.log10(d3d) + 22.4 + 21.3 * math.log10(f_ghz) - 0.3 * (h_ut - 1.5)
    return np.maximum(_pl_los(d3d, f_ghz), nlos)


def pathloss_db(d3d: float, los: bool, cfg: ChannelConfig) -> float:
    if d3d < 1.0:
        raise ValueError(f"pathloss requires d3d >= 1 m, got {d3d}")
    if los:
        return float(_pl_los(d3d, cfg.carrier_freq_ghz))
    return float(_pl_nlos(d3d, cfg.carrier_freq_ghz, cfg.antenna_height_m))


def pathloss_matrix(d3d: np.ndarray, los: np.ndarray, cfg: ChannelConfig) -> np.ndarray:
    """Vectorised pathloss; distances below 1 m are clamped to 1 m."""
    d = np.maximum(d3d, 1.0)
    return np.where(
        los,
        _pl_los(d, cfg.carrier_freq_ghz),
        _pl_nlos(d, cfg.carrier_freq_ghz, cfg.antenna_height_m),
    )


def received_power_dbm(tx_dbm: float, pathloss: float, shadow_db: float) -> float:
    return tx_dbm - pathloss - shadow_db


def dbm_to_mw(dbm):
    return np.power(10.0, np.asarray(dbm) / 10.0)


def sinr_db(signal_dbm: float, interferer_dbms: Sequence[float], cfg: ChannelConfig) -> float:
    interference = float(np.sum(dbm_to_mw(list(interferer_dbms)))) if len(interferer_dbms) else 0.0
    noise = float(dbm_to_mw(noise_power_dbm(cfg)))
    return 10.0 * math.log10(float(dbm_to_mw(signal_dbm)) / (interference + noise))


def decode(sinr: float, cfg: ChannelConfig) -> bool:
    return sinr >= cfg.sinr_decode_threshold_db


class LinkField:
    """Per-run frozen link randomness for ``n`` vehicles.

    Each unordered pair gets one uniform ``u``; the pair is LOS whenever
    ``u < p_LOS(d)`` at the current distance. Each ordered pair gets one
    standard normal, scaled by the LOS or NLOS shadowing sigma.
    """

    def __init__(self, n: int, los_rng: np.random.Generator, shadow_rng: np.random.Generator, cfg: ChannelConfig):
        self.cfg = cfg
        u = los_rng.random((n, n))
        self.los_uniform = np.triu(u, 1) + np.triu(u, 1).T
        self.shadow_std_normal = shadow_rng.standard_normal((n, n))
        np.fill_diagonal(self.shadow_std_normal, 0.0)

    def los(self, d2d: np.ndarray) -> np.ndarray:
        return self.los_uniform < los_probability_array(d2d)

    def shadow_db(self, los: np.ndarray) -> np.ndarray:
        sigma = np.where(los, self.cfg.shadow_sigma_los_db, self.cfg.shadow_sigma_nlos_db)
        return self.shadow_std_normal * sigma

    def rx_power_dbm(self, d2d: np.ndarray) -> np.ndarray:
        """Received power matrix indexed ``[tx, rx]``; the diagonal is -inf."""
        los = self.los(d2d)
        pl = pathloss_matrix(d2d, los, self.cfg)  # equal antenna heights: d3d == d2d
        p = self.cfg.tx_power_dbm - pl - self.shadow_db(los)
        np.fill_diagonal(p, -np.inf)
        return p
