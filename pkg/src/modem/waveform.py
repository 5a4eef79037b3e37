#!/usr/bin/env python3
"""
QPSK Waveform Generator
Modem configuration, seeded symbol and noise streams, and the sampled QPSK
carrier sqrt(2) sin(omega_ref t + n pi/4) with additive white Gaussian noise.

Version: 1.0.0
"""

import math
from typing import Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import signal

VALID_SYMBOLS = (1, 3, 5, 7)
MIN_SAMPLES_PER_CYCLE = 20
MIN_CARRIER_TO_SYMBOL_RATIO = 4


class ModemError(Exception):
    """Custom exception for signal-level simulation errors"""
    pass


class ModemConfig(BaseModel):
    """
    Signal-level simulation parameters.

    Frequencies named *_freq or *_cutoff are angular (rad/s); rates are per second.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    carrier_freq: float = Field(..., gt=0, description="Reference carrier omega_ref, rad/s")
    sample_rate: float = Field(..., gt=0, description="Samples per second")
    symbol_rate: float = Field(..., gt=0, description="Symbols per second")
    lpf_cutoff: Optional[float] = Field(default=None, description="Arm low-pass cutoff, rad/s")
    noise_sigma: float = Field(default=0.0, ge=0, description="Per-sample noise standard deviation")
    seed: int = Field(default=0, ge=0)
    prefilter_cutoff: Optional[float] = Field(default=None, description="Optional pulse smoothing cutoff, rad/s")

    @field_validator("lpf_cutoff", "prefilter_cutoff")
    @classmethod
    def validate_cutoff(cls, v):
        if v is not None and not v > 0:
            raise ValueError("cutoff frequencies must be positive")
        return v

    @model_validator(mode="after")
    def validate_rates(self):
        carrier_hz = self.carrier_freq / (2.0 * math.pi)
        if self.sample_rate < MIN_SAMPLES_PER_CYCLE * carrier_hz * (1.0 - 1e-12):
            raise ValueError(
                f"sample_rate must give at least {MIN_SAMPLES_PER_CYCLE} samples per carrier cycle "
                f"({MIN_SAMPLES_PER_CYCLE * carrier_hz:.6g} samples/s)"
            )
        if self.symbol_rate * MIN_CARRIER_TO_SYMBOL_RATIO > carrier_hz:
            raise ValueError("symbol_rate must be well below the carrier frequency")
        ratio = self.sample_rate / self.symbol_rate
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError("sample_rate must be an integer multiple of symbol_rate")
        cutoff = self.effective_lpf_cutoff
        if not (2.0 * math.pi * self.symbol_rate < cutoff < 2.0 * self.carrier_freq):
            raise ValueError("lpf_cutoff must lie strictly between 2 pi symbol_rate and 2 carrier_freq")
        return self

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def samples_per_symbol(self) -> int:
        return int(round(self.sample_rate / self.symbol_rate))

    @property
    def effective_lpf_cutoff(self) -> float:
        """Arm LPF cutoff, defaulting to the geometric mean of symbol and carrier frequencies"""
        if self.lpf_cutoff is not None:
            return self.lpf_cutoff
        return math.sqrt(2.0 * math.pi * self.symbol_rate * self.carrier_freq)

    def with_noise(self, noise_sigma: float) -> "ModemConfig":
        return self.model_copy(update={"noise_sigma": noise_sigma})


class SymbolSource:
    """
    Seeded symbol and noise streams.

    Both streams come from Philox counter-based generators spawned from one seed,
    so the symbols do not depend on how much noise is drawn and the standard
    normals do not depend on the noise level.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        symbol_seq, noise_seq = np.random.SeedSequence(self.seed).spawn(2)
        self._symbols = np.random.Generator(np.random.Philox(symbol_seq))
        self._noise = np.random.Generator(np.random.Philox(noise_seq))

    def symbols(self, count: int) -> np.ndarray:
        if count < 1:
            raise ModemError("Symbol count must be positive")
        return 2 * self._symbols.integers(0, 4, size=count, dtype=np.int64) + 1

    def standard_normals(self, count: int) -> np.ndarray:
        return self._noise.standard_normal(count)


def validate_symbols(symbols: np.ndarray) -> np.ndarray:
    symbols = np.asarray(symbols)
    if symbols.ndim != 1 or symbols.size == 0:
        raise ModemError("Symbol stream must be a nonempty 1-D sequence")
    if not np.isin(symbols, VALID_SYMBOLS).all():
        bad = sorted(set(np.unique(symbols).tolist()) - set(VALID_SYMBOLS))
        raise ModemError(f"Symbols must be in {{1, 3, 5, 7}}, got {bad}")
    return symbols.astype(np.int64)


def sample_times(config: ModemConfig, n_samples: int) -> np.ndarray:
    return np.arange(n_samples, dtype=np.float64) / config.sample_rate


def symbol_baseband(config: ModemConfig, symbols: np.ndarray) -> np.ndarray:
    """Complex baseband exp(j n pi/4) per sample, rectangular pulses or first-order smoothed"""
    per_sample = np.repeat(symbols, config.samples_per_symbol)
    baseband = np.exp(1j * per_sample * (math.pi / 4.0))
    if config.prefilter_cutoff is not None:
        alpha = 1.0 - math.exp(-config.prefilter_cutoff * config.dt)
        baseband = signal.lfilter([alpha], [1.0, alpha - 1.0], baseband)
    return baseband


def generate_qpsk(config: ModemConfig, symbols: np.ndarray,
                  normals: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Sampled QPSK input s[k] = sqrt(2) sin(omega_ref t_k + n_k pi/4) + noise_sigma * z_k.

    The z_k are standard normals drawn from the config seed unless passed in,
    which lets sweeps reuse one draw across noise levels.
    """
    symbols = validate_symbols(symbols)
    baseband = symbol_baseband(config, symbols)
    n_samples = baseband.size
    t = sample_times(config, n_samples)

    carrier = np.exp(1j * config.carrier_freq * t)
    waveform = math.sqrt(2.0) * np.imag(baseband * carrier)

    if config.noise_sigma > 0:
        if normals is None:
            normals = SymbolSource(config.seed).standard_normals(n_samples)
        if normals.size < n_samples:
            raise ModemError(f"Need {n_samples} noise samples, got {normals.size}")
        waveform = waveform + config.noise_sigma * normals[:n_samples]

    logger.debug(f"Generated {symbols.size} symbols, {n_samples} samples, sigma={config.noise_sigma:.4g}")
    return waveform


def lpf_noise_bandwidth(config: ModemConfig) -> float:
    """Equivalent noise bandwidth in Hz of the first-order arm LPF"""
    cutoff_hz = config.effective_lpf_cutoff / (2.0 * math.pi)
    return 0.5 * math.pi * cutoff_hz


def noise_sigma_for_snr(config: ModemConfig, snr_db: float) -> float:
    """
    Per-sample noise deviation for an SNR measured in the arm LPF bandwidth.

    Signal power is 1; white noise of variance sigma^2 has one-sided density
    2 sigma^2 / fs, so SNR = fs / (2 sigma^2 B) with B the LPF noise bandwidth.
    """
    snr = 10.0 ** (snr_db / 10.0)
    return math.sqrt(config.sample_rate / (2.0 * lpf_noise_bandwidth(config) * snr))


def snr_db_for_sigma(config: ModemConfig, sigma: float) -> float:
    if sigma <= 0:
        return float("inf")
    snr = config.sample_rate / (2.0 * lpf_noise_bandwidth(config) * sigma ** 2)
    return 10.0 * math.log10(snr)


def reference_phase(config: ModemConfig, n_samples: int) -> np.ndarray:
    """theta_ref(t_k) = omega_ref t_k"""
    return config.carrier_freq * sample_times(config, n_samples)


def mean_power(waveform: np.ndarray) -> float:
    return float(np.mean(np.square(waveform)))
