"""Closed-form LoRa link model.

RSSI from the log-distance path loss law, SF-dependent receiver
sensitivity, the recording gate (weak signals drop out as missing
values), and the threshold imputation that fills them back in.

All functions are pure: randomness (the shadowing draw) is supplied by
the caller, so everything here is deterministic and safe to call from
any number of workers.
"""

from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

SPEED_OF_LIGHT_M_S = 299_792_458.0

SPREADING_FACTORS = (7, 8, 9, 10, 11, 12)

# Demodulation SNR thresholds (dB) per SF for a standard LoRa receiver.
DEFAULT_SNR_THRESHOLDS_DB = {
    7: -7.5,
    8: -10.0,
    9: -12.5,
    10: -15.0,
    11: -17.5,
    12: -20.0,
}

# In-memory marker for an unrecorded RSSI. CSV files spell it "MISSING".
MISSING = float("nan")

ArrayLike = Union[float, np.ndarray]


def check_sf(sf: int) -> int:
    """Validate a spreading factor (only 7..12 exist)."""
    if sf not in SPREADING_FACTORS:
        raise ValueError(f"spreading factor must be in 7..12, got {sf!r}")
    return int(sf)


def is_missing(value: ArrayLike) -> ArrayLike:
    """True where an RSSI entry is the missing marker."""
    return np.isnan(value)


@dataclass(frozen=True)
class LinkBudgetParams:
    """Log-distance path loss parameters.

    tx_power_dbm is the transmit power, ref_distance_m the reference
    distance of the model, frequency_hz the carrier, path_loss_exponent
    the decay rate, shadowing_sigma_db the std-dev of the zero-mean
    Gaussian shadowing term (in dB).
    """

    tx_power_dbm: float = 14.0
    ref_distance_m: float = 1.0
    frequency_hz: float = 868e6
    path_loss_exponent: float = 2.7
    shadowing_sigma_db: float = 4.0

    def __post_init__(self):
        if self.ref_distance_m <= 0:
            raise ValueError("ref_distance_m must be > 0")
        if self.frequency_hz <= 0:
            raise ValueError("frequency_hz must be > 0")
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be > 0")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be >= 0")


@dataclass(frozen=True)
class SensitivityParams:
    """Receiver sensitivity model: thermal noise floor + NF + per-SF SNR threshold."""

    bandwidth_hz: float = 125e3
    noise_figure_db: float = 6.0
    snr_threshold_db: Mapping[int, float] = field(
        default_factory=lambda: dict(DEFAULT_SNR_THRESHOLDS_DB)
    )

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be > 0")
        missing = [sf for sf in SPREADING_FACTORS if sf not in self.snr_threshold_db]
        if missing:
            raise ValueError(f"snr_threshold_db lacks entries for SF {missing}")
        thresholds = [self.snr_threshold_db[sf] for sf in SPREADING_FACTORS]
        if not all(a > b for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("snr_threshold_db must be strictly decreasing in SF")


@dataclass(frozen=True)
class RssiObservation:
    """One gated RSSI reading (value_dbm is NaN when unrecorded) and its SF."""

    value_dbm: float
    sf: int

    def __post_init__(self):
        check_sf(self.sf)

    @property
    def missing(self) -> bool:
        return bool(np.isnan(self.value_dbm))


def rssi_at(params: LinkBudgetParams, distance_m: ArrayLike, shadowing_db: ArrayLike = 0.0) -> ArrayLike:
    """RSSI (dBm) at a given distance under the log-distance path loss law.

    RSSI = P_tx - [20log10(4 pi d0 / c) + 20log10(f) + 10 beta log10(d/d0) + X]

    where X is the caller-supplied shadowing draw in dB. Accepts scalars
    or numpy arrays for distance_m / shadowing_db (broadcasting applies).
    """
    d = np.asarray(distance_m, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("distance_m must be > 0")
    ref_loss = 20.0 * np.log10(4.0 * np.pi * params.ref_distance_m / SPEED_OF_LIGHT_M_S)
    freq_loss = 20.0 * np.log10(params.frequency_hz)
    dist_loss = 10.0 * params.path_loss_exponent * np.log10(d / params.ref_distance_m)
    out = params.tx_power_dbm - (ref_loss + freq_loss + dist_loss + np.asarray(shadowing_db, dtype=np.float64))
    return float(out) if np.isscalar(distance_m) and np.isscalar(shadowing_db) else out


def sensitivity(params: SensitivityParams, sf: int) -> float:
    """Receiver sensitivity (dBm) for one SF: -174 + 10log10(BW_Hz) + NF + SNR_thr."""
    check_sf(sf)
    return (
        -174.0
        + 10.0 * np.log10(params.bandwidth_hz)
        + params.noise_figure_db
        + params.snr_threshold_db[sf]
    )


def sensitivity_table(params: SensitivityParams) -> dict:
    """Sensitivity (dBm) for every SF. Lowest (best) at SF12."""
    return {sf: sensitivity(params, sf) for sf in SPREADING_FACTORS}


def gate_recording(rssi_dbm: float, sf: int, params: SensitivityParams) -> RssiObservation:
    """Apply the recording gate: values at or below sensitivity become missing.

    The gate is strict: rssi must exceed the sensitivity to be recorded.
    """
    threshold = sensitivity(params, sf)
    value = float(rssi_dbm) if rssi_dbm > threshold else MISSING
    return RssiObservation(value_dbm=value, sf=sf)


def impute_missing(obs: RssiObservation, params: SensitivityParams) -> float:
    """Replace a missing reading by the sensitivity of its SF; pass others through."""
    if obs.missing:
        return sensitivity(params, obs.sf)
    return obs.value_dbm


def gate_vector(rssi_dbm: np.ndarray, sf: int, params: SensitivityParams) -> np.ndarray:
    """Vectorized recording gate over one sample's per-gateway RSSI vector."""
    threshold = sensitivity(params, sf)
    out = np.asarray(rssi_dbm, dtype=np.float64).copy()
    out[~(out > threshold)] = MISSING
    return out


def impute_vector(rssi_dbm: np.ndarray, sf: int, params: SensitivityParams) -> np.ndarray:
    """Vectorized imputation: every NaN becomes the sensitivity of the sample's SF."""
    out = np.asarray(rssi_dbm, dtype=np.float64).copy()
    out[np.isnan(out)] = sensitivity(params, sf)
    return out
