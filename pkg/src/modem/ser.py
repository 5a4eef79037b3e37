#!/usr/bin/env python3
"""
Symbol Error Rate Measurement
Full transmit / recover / demodulate chains and Monte-Carlo SER estimates for the
classical, fourth-power and folding Costas loops.

SNR is signal power (1) over the noise power inside the arm LPF noise bandwidth.
Every point of a sweep reuses the same symbols and standard normals, scaled to
the point's noise level.

Version: 1.0.0
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy.stats import binomtest

from ..core.config import LOOP_VARIANTS, PdKind, settings
from ..detectors.characteristics import HALF_PI, find_stable_zero
from ..dynamics.phase_model import LoopParams, PiFilter
from .costas_circuits import CircuitOutput, LoopCircuit, prewarm_kernel
from .demodulator import demodulate, resolve_ambiguity
from .waveform import (
    ModemConfig,
    ModemError,
    SymbolSource,
    generate_qpsk,
    noise_sigma_for_snr,
    reference_phase,
    sample_times,
)

MIN_SER_SYMBOLS = 1000
# phase error still within this distance of a lock point at the end of warm-up counts as locked
LOCK_WINDOW = math.pi / 8

DEFAULT_K_VCO = 200.0
DEFAULT_TAU1 = 0.05
DEFAULT_TAU2 = 0.02


@dataclass
class SerPoint:
    """One SER estimate with its Wilson 95% interval"""
    variant: str
    snr_db: float
    noise_sigma: float
    symbols: int
    errors: int
    ser: float
    ci_low: float
    ci_high: float
    locked: bool
    slipped: bool
    quarter_turns: int

    @property
    def ci95(self) -> Tuple[float, float]:
        return self.ci_low, self.ci_high

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class ChainRecord:
    """Everything one chain run produced, sample by sample"""
    variant: PdKind
    config: ModemConfig
    symbols: np.ndarray
    waveform: np.ndarray
    output: CircuitOutput
    lock_point: float

    @property
    def times(self) -> np.ndarray:
        return sample_times(self.config, self.waveform.size)

    @property
    def theta_e(self) -> np.ndarray:
        """Unwrapped phase error theta_ref - theta_vco at each sample"""
        return reference_phase(self.config, self.waveform.size) - self.output.vco_phase

    def decisions(self) -> np.ndarray:
        return demodulate(self.config, self.waveform, self.output.vco_phase, rotation=self.lock_point)

    def lock_offset(self, sample_index: int) -> float:
        """Distance of theta_e from its nearest lock point at one sample"""
        theta = float(self.theta_e[sample_index])
        k = round((theta - self.lock_point) / HALF_PI)
        return abs(theta - (self.lock_point + k * HALF_PI))

    def lock_index(self, sample_index: int) -> int:
        """Which pi/2 branch theta_e sits on at one sample"""
        return int(round((float(self.theta_e[sample_index]) - self.lock_point) / HALF_PI))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.times,
            "input": self.waveform,
            "I": self.output.i,
            "Q": self.output.q,
            "g": self.output.g,
            "vco_phase": self.output.vco_phase,
        })


def chain_loop(variant: PdKind, config: ModemConfig, k_vco: float = DEFAULT_K_VCO,
               tau1: float = DEFAULT_TAU1, tau2: float = DEFAULT_TAU2, offset: float = 0.0,
               k_pd: Optional[float] = None) -> LoopParams:
    """Loop parameters for a chain: the reference is the config carrier, the VCO free-runs offset below it"""
    return LoopParams(
        pd=variant,
        k_vco=k_vco,
        filter=PiFilter(tau1=tau1, tau2=tau2),
        omega_ref=config.carrier_freq,
        omega_free=config.carrier_freq - offset,
        k_pd=k_pd,
    )


def run_chain(params: LoopParams, config: ModemConfig, n_symbols: int,
              symbols: Optional[np.ndarray] = None, normals: Optional[np.ndarray] = None,
              initial_phase_error: Optional[float] = None, initial_control: Optional[float] = None,
              folding_scheme: str = "simplified", kernel_mode: str = "auto") -> ChainRecord:
    """
    Generate n_symbols of QPSK, run it through one Costas loop circuit and keep every signal.

    The loop starts with phase error theta_e(0) = initial_phase_error (its stable lock
    point by default) and with the loop filter holding the steady-state control for the
    frequency offset unless initial_control is given.
    """
    if abs(params.omega_ref - config.carrier_freq) > 1e-9 * config.carrier_freq:
        raise ModemError("Loop reference frequency must equal the modem carrier frequency")
    if symbols is None:
        symbols = SymbolSource(config.seed).symbols(n_symbols)
    symbols = np.asarray(symbols)[:n_symbols]

    waveform = generate_qpsk(config, symbols, normals)
    lock_point = find_stable_zero(params.pd)
    theta0 = lock_point if initial_phase_error is None else initial_phase_error

    circuit = LoopCircuit(params, config.sample_rate, config.effective_lpf_cutoff,
                          initial_phase=-theta0, initial_control=initial_control,
                          folding_scheme=folding_scheme, kernel_mode=kernel_mode)
    output = circuit.run(waveform)
    return ChainRecord(variant=params.pd, config=config, symbols=symbols, waveform=waveform,
                       output=output, lock_point=lock_point)


def wilson_interval(errors: int, symbols: int) -> Tuple[float, float]:
    ci = binomtest(int(errors), int(symbols)).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def measure_ser(variant: PdKind, config: ModemConfig, snr_db: float, n_symbols: int,
                loop: Optional[LoopParams] = None, warmup: Optional[int] = None,
                kernel_mode: str = "auto", initial_phase_error: Optional[float] = None) -> SerPoint:
    """
    SER of one loop variant at one SNR.

    The first `warmup` symbols are acquisition preamble: they train the pi/2
    ambiguity rotation and are not counted. A loop whose phase error is not within
    pi/8 of a lock point at the end of warm-up is reported unlocked; one that moves
    to another lock point afterwards is reported slipped.

    The loop starts at its lock point unless `initial_phase_error` is given; a
    frequency offset comes in through `loop` (see `chain_loop`).
    """
    variant = PdKind(variant)
    if variant not in LOOP_VARIANTS:
        raise ModemError(f"{variant.value} is not a Costas loop variant")
    if n_symbols < MIN_SER_SYMBOLS:
        raise ModemError(f"SER needs at least {MIN_SER_SYMBOLS} counted symbols, got {n_symbols}")
    warmup = settings.warmup_symbols if warmup is None else warmup
    if warmup < 1:
        raise ModemError("Warm-up must cover at least one symbol")

    params = chain_loop(variant, config) if loop is None else replace(
        loop, pd=variant, k_pd=None, omega_ref=config.carrier_freq,
        omega_free=config.carrier_freq - loop.offset,
    )
    sigma = noise_sigma_for_snr(config, snr_db)
    noisy = config.with_noise(sigma)

    total = warmup + n_symbols
    source = SymbolSource(config.seed)
    symbols = source.symbols(total)
    normals = source.standard_normals(total * config.samples_per_symbol)

    record = run_chain(params, noisy, total, symbols=symbols, normals=normals,
                       initial_phase_error=initial_phase_error, kernel_mode=kernel_mode)

    sps = config.samples_per_symbol
    warm_end = warmup * sps - 1
    locked = record.lock_offset(warm_end) < LOCK_WINDOW
    slipped = record.lock_index(warm_end) != record.lock_index(record.waveform.size - 1)

    turns, decisions = resolve_ambiguity(record.decisions(), symbols, warmup)
    errors = int(np.count_nonzero(decisions[warmup:] != symbols[warmup:]))
    low, high = wilson_interval(errors, n_symbols)

    point = SerPoint(
        variant=variant.value, snr_db=float(snr_db), noise_sigma=sigma, symbols=n_symbols,
        errors=errors, ser=errors / n_symbols, ci_low=low, ci_high=high,
        locked=bool(locked), slipped=bool(slipped), quarter_turns=turns,
    )
    if not locked:
        logger.warning(f"{variant.value} loop did not lock during warm-up at {snr_db} dB")
    logger.debug(f"SER {variant.value} @ {snr_db} dB: {errors}/{n_symbols}")
    return point


def _ser_job(job: Tuple[PdKind, ModemConfig, float, int, Optional[LoopParams], Optional[int], str,
                         Optional[float]]) -> SerPoint:
    variant, config, snr_db, n_symbols, loop, warmup, kernel_mode, initial_phase_error = job
    return measure_ser(variant, config, snr_db, n_symbols, loop=loop, warmup=warmup, kernel_mode=kernel_mode,
                       initial_phase_error=initial_phase_error)


def sweep_ser(variants: Sequence[PdKind], config: ModemConfig, snr_grid: Sequence[float],
              n_symbols: int, loop: Optional[LoopParams] = None, warmup: Optional[int] = None,
              max_workers: Optional[int] = None, kernel_mode: str = "auto",
              initial_phase_error: Optional[float] = None) -> List[SerPoint]:
    """
    SER over variants x SNR grid with common random numbers.

    Points come back ordered by variant, then by SNR as given.
    """
    if not variants or not len(snr_grid):
        raise ModemError("SER sweep needs at least one variant and one SNR point")
    workers = settings.max_workers if max_workers is None else max_workers
    jobs = [(PdKind(v), config, float(snr), n_symbols, loop, warmup, kernel_mode, initial_phase_error)
            for v in variants for snr in snr_grid]

    logger.info(f"SER sweep: {len(jobs)} points, {n_symbols} symbols each, {workers} worker(s)")
    if workers > 1 and len(jobs) > 1:
        prewarm_kernel()
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as executor:
            points = list(executor.map(_ser_job, jobs))
    else:
        points = [_ser_job(job) for job in jobs]

    unlocked = [p for p in points if not p.locked]
    if unlocked:
        logger.warning(f"{len(unlocked)} SER point(s) did not lock and are excluded from curves")
    return points


def locked_points(points: Sequence[SerPoint]) -> List[SerPoint]:
    """Points usable for SER curves"""
    return [p for p in points if p.locked and not p.slipped]


def ser_frame(points: Sequence[SerPoint]) -> pd.DataFrame:
    return pd.DataFrame([p.to_dict() for p in points], columns=[
        "variant", "snr_db", "symbols", "errors", "ser", "ci_low", "ci_high",
        "locked", "slipped", "quarter_turns", "noise_sigma",
    ])
