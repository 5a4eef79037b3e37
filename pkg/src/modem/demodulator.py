"""
Integrate-and-Dump Demodulator
Recovers QPSK symbol decisions from the received waveform using the VCO phase of a
Costas loop circuit, and resolves the pi/2 phase ambiguity against known symbols.

Version: 1.0.0
"""

from typing import Tuple

import numpy as np

from ..detectors.characteristics import decide_symbol, rotate_symbols
from .waveform import ModemConfig, ModemError


def integrate_and_dump(config: ModemConfig, waveform: np.ndarray,
                       carrier_phase: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-symbol correlations with sqrt(2) sin / sqrt(2) cos of the recovered carrier phase"""
    waveform = np.asarray(waveform, dtype=np.float64)
    carrier_phase = np.asarray(carrier_phase, dtype=np.float64)
    if waveform.shape != carrier_phase.shape:
        raise ModemError(
            f"Waveform and carrier phase lengths differ: {waveform.size} vs {carrier_phase.size}"
        )
    sps = config.samples_per_symbol
    if waveform.size == 0 or waveform.size % sps:
        raise ModemError(f"Waveform length {waveform.size} is not a whole number of {sps}-sample symbols")

    scale = np.sqrt(2.0) * config.dt
    i_int = (waveform * np.sin(carrier_phase) * scale).reshape(-1, sps).sum(axis=1)
    q_int = (waveform * np.cos(carrier_phase) * scale).reshape(-1, sps).sum(axis=1)
    return i_int, q_int


def demodulate(config: ModemConfig, waveform: np.ndarray, vco_phase: np.ndarray,
               rotation: float = 0.0) -> np.ndarray:
    """
    Symbol decisions with the carrier estimate vco_phase + rotation.

    A loop locked at theta_e* tracks the reference offset by theta_e*, so passing
    that lock point as the rotation puts the constellation back on its axes.
    """
    i_int, q_int = integrate_and_dump(config, waveform, np.asarray(vco_phase) + rotation)
    return decide_symbol(i_int, q_int)


def resolve_ambiguity(decisions: np.ndarray, reference: np.ndarray,
                      training: int) -> Tuple[int, np.ndarray]:
    """
    Pick the quarter-turn rotation that best matches the first `training` known symbols.

    Returns the rotation and the rotated decision stream; ties go to the smallest rotation.
    """
    decisions = np.asarray(decisions, dtype=np.int64)
    reference = np.asarray(reference, dtype=np.int64)
    if decisions.shape != reference.shape:
        raise ModemError("Decision and reference streams differ in length")
    training = min(int(training), decisions.size)
    if training < 1:
        raise ModemError("Ambiguity resolution needs at least one training symbol")

    matches = [
        int(np.count_nonzero(rotate_symbols(decisions[:training], k) == reference[:training]))
        for k in range(4)
    ]
    best = int(np.argmax(matches))
    return best, rotate_symbols(decisions, best)
