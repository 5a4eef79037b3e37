#!/usr/bin/env python3
"""
Costas Loop Circuits
Sample-by-sample signal-level models of the classical, fourth-power and folding
4QAM Costas loops: quadrature mixers, first-order arm low-pass filters, the
variant-specific detector, a proportional-integral loop filter and the VCO.

The inner loop is a plain-Python kernel over numpy arrays, JIT-compiled with
numba when it is importable and enabled in settings.

Version: 1.0.0
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from loguru import logger

from ..core.config import PdKind, settings
from ..detectors.characteristics import FOLDING_CENTER, INV_SQRT2, SQRT2
from ..dynamics.phase_model import LoopParams
from .waveform import ModemError

try:
    from numba import njit
except Exception:  # optional dependency
    njit = None

CLASSICAL_CODE = 0
FOURTH_POWER_CODE = 1
FOLDING_CODE = 2
FOLDING_ORIGINAL_CODE = 3

VARIANT_CODES = {
    PdKind.CLASSICAL: CLASSICAL_CODE,
    PdKind.FOURTH_POWER: FOURTH_POWER_CODE,
    PdKind.FOLDING: FOLDING_CODE,
}

# Amplitude of each combiner output before the K_pd gain is applied
NATIVE_AMPLITUDES = {
    PdKind.CLASSICAL: 1.0,
    PdKind.FOURTH_POWER: 1.0,
    PdKind.FOLDING: FOLDING_CENTER,
}


def _circuit_kernel_python(samples, variant, gain, k_vco, omega_free, b, h, alpha, dt,
                           state, out_i, out_q, out_u, out_g, out_phase):
    """Reference Costas loop inner loop (Python)."""
    lpf_i = state[0]
    lpf_q = state[1]
    x = state[2]
    phase = state[3]

    for k in range(samples.shape[0]):
        s = samples[k]
        out_phase[k] = phase

        # mixers and arm LPFs: I ~ cos(theta_e + n pi/4), Q ~ sin(theta_e + n pi/4)
        lpf_i += alpha * (SQRT2 * s * math.sin(phase) - lpf_i)
        lpf_q += alpha * (SQRT2 * s * math.cos(phase) - lpf_q)
        i_val = lpf_i
        q_val = lpf_q

        if variant == 0:
            sign_i = 1.0 if i_val >= 0.0 else -1.0
            sign_q = 1.0 if q_val >= 0.0 else -1.0
            raw = i_val * sign_q - q_val * sign_i
        elif variant == 1:
            re2 = i_val * i_val - q_val * q_val
            im2 = 2.0 * i_val * q_val
            raw = 2.0 * re2 * im2
        elif variant == 2:
            raw = math.hypot(abs(i_val) - INV_SQRT2, abs(q_val) - INV_SQRT2) - FOLDING_CENTER
        else:
            sign_i = 1.0 if i_val >= 0.0 else -1.0
            sign_q = 1.0 if q_val >= 0.0 else -1.0
            i_arm = abs(i_val * sign_q)
            q_arm = abs(q_val * sign_i)
            raw = math.hypot(i_arm - INV_SQRT2, q_arm - INV_SQRT2) - FOLDING_CENTER

        u = gain * raw

        # PI loop filter driven with inverted polarity: dx/dt = -b u, g = c x - h u
        g = x - h * u
        x -= b * u * dt

        phase += (omega_free + k_vco * g) * dt

        out_i[k] = i_val
        out_q[k] = q_val
        out_u[k] = u
        out_g[k] = g

    state[0] = lpf_i
    state[1] = lpf_q
    state[2] = x
    state[3] = phase


_circuit_kernel_numba = None
if njit is not None:
    _circuit_kernel_numba = njit(cache=True)(_circuit_kernel_python)

_NUMBA_KERNEL_READY = None


def _numba_kernel_available() -> bool:
    """True when the numba kernel compiles and runs"""
    global _NUMBA_KERNEL_READY
    if _circuit_kernel_numba is None:
        return False
    if _NUMBA_KERNEL_READY is None:
        try:
            one = np.zeros(1, dtype=np.float64)
            _circuit_kernel_numba(one, 0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.5, 1.0,
                                  np.zeros(4, dtype=np.float64),
                                  one.copy(), one.copy(), one.copy(), one.copy(), one.copy())
            _NUMBA_KERNEL_READY = True
        except Exception as e:
            logger.warning(f"Numba kernel unavailable, using Python kernel: {e}")
            _NUMBA_KERNEL_READY = False
    return _NUMBA_KERNEL_READY


def select_kernel(mode: str = "auto") -> Tuple[str, object]:
    """Resolve kernel mode 'auto' | 'python' | 'numba' to a backend"""
    mode = str(mode).strip().lower()
    if mode not in {"auto", "python", "numba"}:
        raise ModemError("kernel mode must be one of: auto, python, numba")
    if mode == "python" or (mode == "auto" and not settings.use_numba):
        return "python", _circuit_kernel_python
    if mode == "numba":
        if not _numba_kernel_available():
            raise ModemError("kernel mode 'numba' requested but numba is unavailable")
        return "numba", _circuit_kernel_numba
    if _numba_kernel_available():
        return "numba", _circuit_kernel_numba
    return "python", _circuit_kernel_python


@dataclass
class CircuitOutput:
    """Per-sample circuit signals; vco_phase is the phase used to mix each sample"""
    i: np.ndarray
    q: np.ndarray
    u: np.ndarray
    g: np.ndarray
    vco_phase: np.ndarray


class LoopCircuit:
    """Stateful signal-level Costas loop"""

    def __init__(self, params: LoopParams, sample_rate: float, lpf_cutoff: float,
                 initial_phase: float = 0.0, initial_control: Optional[float] = None,
                 folding_scheme: str = "simplified", kernel_mode: str = "auto"):
        if not params.pd.is_loop_variant:
            raise ModemError(f"{params.pd.value} is not a Costas loop variant")
        if not (sample_rate > 0 and lpf_cutoff > 0):
            raise ModemError("sample_rate and lpf_cutoff must be positive")
        if folding_scheme not in {"simplified", "original"}:
            raise ModemError("folding_scheme must be 'simplified' or 'original'")

        self.params = params
        self.variant = params.pd
        self.dt = 1.0 / sample_rate
        self.lpf_cutoff = lpf_cutoff
        self.alpha = 1.0 - math.exp(-lpf_cutoff * self.dt)
        self.gain = params.k_pd / NATIVE_AMPLITUDES[self.variant]
        self.folding_scheme = folding_scheme
        self._code = VARIANT_CODES[self.variant]
        if self.variant == PdKind.FOLDING and folding_scheme == "original":
            self._code = FOLDING_ORIGINAL_CODE

        x0 = params.offset / (params.k_vco * params.filter.c) if initial_control is None else initial_control
        # lpf1 (I arm), lpf2 (Q arm), loop filter state, VCO phase
        self.state = np.array([0.0, 0.0, x0, initial_phase], dtype=np.float64)
        self.backend, self._kernel = select_kernel(kernel_mode)

        logger.debug(
            f"{self.variant.value} circuit initialized: backend={self.backend}, "
            f"K_vco={params.k_vco}, K_pd={params.k_pd:.6g}, lpf={lpf_cutoff:.6g} rad/s"
        )

    @property
    def lpf1(self) -> float:
        return float(self.state[0])

    @property
    def lpf2(self) -> float:
        return float(self.state[1])

    @property
    def loop_filter_state(self) -> float:
        return float(self.state[2])

    @property
    def vco_phase(self) -> float:
        return float(self.state[3])

    def run(self, samples: np.ndarray) -> CircuitOutput:
        """Process a block of input samples, carrying state across calls"""
        samples = np.ascontiguousarray(samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ModemError("Input samples must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise ModemError("Non-finite input sample")

        n = samples.size
        out = CircuitOutput(i=np.empty(n), q=np.empty(n), u=np.empty(n), g=np.empty(n), vco_phase=np.empty(n))
        f = self.params.filter
        self._kernel(samples, self._code, self.gain, self.params.k_vco, self.params.omega_free,
                     f.b, f.h, self.alpha, self.dt, self.state,
                     out.i, out.q, out.u, out.g, out.vco_phase)

        if not np.all(np.isfinite(self.state)):
            raise ModemError("Circuit state became non-finite")
        return out

    def step(self, sample: float) -> Tuple[float, float, float, float]:
        """One sample tick; returns (I, Q, g, VCO phase after the tick)"""
        out = self.run(np.array([sample], dtype=np.float64))
        return float(out.i[0]), float(out.q[0]), float(out.g[0]), self.vco_phase


def step_loop(circuit: LoopCircuit, sample: float, dt: float) -> Tuple[float, float, float, float]:
    """Advance a circuit by one sample of length dt = 1 / sample_rate"""
    if abs(dt - circuit.dt) > 1e-12 * circuit.dt:
        raise ModemError(f"dt {dt} does not match the circuit sample period {circuit.dt}")
    if not math.isfinite(sample):
        raise ModemError("Non-finite input sample")
    return circuit.step(sample)


def prewarm_kernel() -> bool:
    """Compile the numba kernel ahead of time, before worker fan-out"""
    return _numba_kernel_available()
