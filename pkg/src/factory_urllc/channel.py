"""Radio propagation: path loss, shadowing, Rayleigh fading and noise.

Internal arithmetic is done on linear power gains; dB only appears at the
function boundaries.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PathLossParams:
    """Log-distance path loss ``a*log10(d) + b + c*log10(fc/5)``.

    Defaults are the WINNER II A1 (indoor office) LOS coefficients.
    """

    carrier_freq_ghz: float = 3.0
    a_coeff: float = 18.7
    b_coeff: float = 46.8
    c_coeff: float = 20.0
    min_distance_m: float = 1.0

    def __post_init__(self):
        if not self.carrier_freq_ghz > 0:
            raise ValueError("carrier_freq_ghz must be positive")
        if not self.min_distance_m > 0:
            raise ValueError("min_distance_m must be positive")
        if self.a_coeff < 0:
            # a negative slope would make loss decrease with distance
            raise ValueError("a_coeff must be non-negative")


@dataclass(frozen=True)
class ShadowingParams:
    std_db: float = 3.0

    def __post_init__(self):
        if self.std_db < 0:
            raise ValueError("std_db must be non-negative")


@dataclass(frozen=True)
class NoiseModel:
    psd_dbm_per_hz: float = -169.0
    noise_figure_db: float = 5.0
    bandwidth_hz: float = 1e6

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth_hz must be positive")


@dataclass(frozen=True)
class LinkGain:
    """Large-scale gain ``L`` and per-sub-band small-scale gains ``g[m]``."""

    large_scale_linear: float
    small_scale_linear: np.ndarray

    @property
    def composite_linear(self) -> np.ndarray:
        return self.large_scale_linear * self.small_scale_linear

    @property
    def composite_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.composite_linear)


def path_loss_db(params: PathLossParams, distance_m):
    """Path loss in dB; accepts scalars or arrays. Distances are clamped."""
    d = np.maximum(np.asarray(distance_m, dtype=float), params.min_distance_m)
    pl = (
        params.a_coeff * np.log10(d)
        + params.b_coeff
        + params.c_coeff * np.log10(params.carrier_freq_ghz / 5.0)
    )
    return float(pl) if pl.ndim == 0 else pl


def draw_shadowing_db(params: ShadowingParams, rng: np.random.Generator, size=None):
    if params.std_db == 0:
        return 0.0 if size is None else np.zeros(size)
    return rng.normal(0.0, params.std_db, size=size)


def draw_rayleigh_power(rng: np.random.Generator, size=None):
    """|h|^2 for h ~ CN(0, 1): unit-mean exponential."""
    return rng.standard_exponential(size=size)


def noise_power_dbm(model: NoiseModel) -> float:
    return model.psd_dbm_per_hz + 10.0 * np.log10(model.bandwidth_hz) + model.noise_figure_db


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


def large_scale_linear(pl_db, shadow_db):
    return 10.0 ** (-(np.asarray(pl_db, dtype=float) + np.asarray(shadow_db, dtype=float)) / 10.0)


def composite_link_gain(pl_db: float, shadow_db: float, fading_linear) -> LinkGain:
    fading = np.array(fading_linear, dtype=float)
    if not (np.isfinite(pl_db) and np.isfinite(shadow_db)) or not np.all(np.isfinite(fading)):
        raise ValueError("link gain inputs must be finite")
    if np.any(fading <= 0):
        raise ValueError("fading gains must be strictly positive")
    large = float(large_scale_linear(pl_db, shadow_db))
    if not (large > 0 and np.isfinite(large)):
        raise ValueError(f"large-scale gain out of range for pl={pl_db}, shadow={shadow_db}")
    return LinkGain(large, fading)
