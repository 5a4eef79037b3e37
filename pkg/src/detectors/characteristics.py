#!/usr/bin/env python3
"""
Phase Detector Characteristics
Closed-form phase detector (PD) characteristics of the classical, fourth-power and
folding 4QAM Costas loops, their unit-amplitude reference shapes, and the
deviation and zero-crossing analysis built on top of them.

All characteristics are pi/2-periodic functions of the phase error theta_e.
Functions returning K_pd*phi accept scalars or numpy arrays.

Version: 1.0.0
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from loguru import logger
from scipy.optimize import brentq

from ..core.config import PdKind, REFERENCE_SHAPES

ArrayLike = Union[float, np.ndarray]

QUARTER_PI = math.pi / 4
HALF_PI = math.pi / 2
SQRT2 = math.sqrt(2.0)
INV_SQRT2 = 1.0 / SQRT2

# Centering constant of the folding detector, equal to its amplitude
FOLDING_CENTER = math.sqrt(2.0 - SQRT2) / 2.0

PD_GAINS: Dict[PdKind, float] = {
    PdKind.CLASSICAL: 0.5,
    PdKind.FOURTH_POWER: 1.0,
    PdKind.FOLDING: FOLDING_CENTER,
    PdKind.SINUSOIDAL_REF: 1.0,
    PdKind.SAWTOOTH_REF: 1.0,
    PdKind.TRIANGULAR_REF: 1.0,
}

MIN_DEVIATION_SAMPLES = 1000
ZERO_XTOL = 1e-15


class CharacteristicError(Exception):
    """Custom exception for invalid phase detector requests"""
    pass


@dataclass
class PdCurve:
    """Sampled PD characteristic over one period"""
    kind: PdKind
    thetas: np.ndarray
    values: np.ndarray
    k_pd: float

    @property
    def normalized(self) -> np.ndarray:
        return self.values / self.k_pd

    def to_dict(self) -> Dict[str, List[float]]:
        return {
            "theta_e": self.thetas.tolist(),
            "value": self.values.tolist(),
            "normalized_value": self.normalized.tolist(),
        }


@dataclass
class ZeroCrossing:
    """Zero of a PD characteristic with its slope sign"""
    theta: float
    stable: bool
    slope: float = field(default=0.0)


def sign(value: ArrayLike) -> ArrayLike:
    """Sign with the sign(0) = +1 convention"""
    return np.where(np.asarray(value) >= 0.0, 1.0, -1.0)


def wrap_branch(theta: ArrayLike) -> ArrayLike:
    """Reduce theta modulo pi/2 into (-pi/4, pi/4]"""
    theta = np.asarray(theta, dtype=float)
    return theta - HALF_PI * np.ceil((theta - QUARTER_PI) / HALF_PI)


def _as_output(value: np.ndarray, like: ArrayLike) -> ArrayLike:
    if np.ndim(like) == 0:
        return float(value)
    return value


def pd_classical(theta_e: ArrayLike) -> ArrayLike:
    """
    Classical Costas PD characteristic K_pd*phi with K_pd = 1/2.

    Piecewise -(1/sqrt 2) sin on (-pi/4, pi/4), (1/sqrt 2) cos on (pi/4, 3pi/4) and so on.
    Branch boundaries take the left-limit value.
    """
    w = wrap_branch(theta_e)
    return _as_output(-INV_SQRT2 * np.sin(w), theta_e)


def pd_fourth(theta_e: ArrayLike) -> ArrayLike:
    """Fourth-power PD characteristic -sin(4 theta_e), K_pd = 1"""
    return _as_output(-np.sin(4.0 * np.asarray(theta_e, dtype=float)), theta_e)


def pd_folding(theta_e: ArrayLike) -> ArrayLike:
    """
    Folding PD characteristic K_pd*phi with K_pd = sqrt(2 - sqrt 2)/2.

    Evaluated on the reduced angle as 2|sin(w/2)| - c0, which is the radical form
    with its radicand rewritten as 4 sin^2(w/2). The radical itself loses half of
    its digits next to its zeros.
    """
    w = wrap_branch(theta_e)
    return _as_output(2.0 * np.abs(np.sin(0.5 * w)) - FOLDING_CENTER, theta_e)


def folding_radical_form(theta_e: ArrayLike) -> ArrayLike:
    """Folding characteristic as sqrt(2 - sqrt2 (|sin(t+pi/4)| + |cos(t+pi/4)|)) - c0"""
    u = np.asarray(theta_e, dtype=float) + QUARTER_PI
    radicand = 2.0 - SQRT2 * (np.abs(np.sin(u)) + np.abs(np.cos(u)))
    # rounding pushes the radicand slightly below zero at theta_e = 0 mod pi/2
    radicand = np.maximum(radicand, 0.0)
    return _as_output(np.sqrt(radicand) - FOLDING_CENTER, theta_e)


def folding_complex_form(theta_e: ArrayLike) -> ArrayLike:
    """Folding characteristic as |(|cos(t+pi/4)| - cos pi/4) + j(|sin(t+pi/4)| - sin pi/4)| - c0"""
    u = np.asarray(theta_e, dtype=float) + QUARTER_PI
    folded = (np.abs(np.cos(u)) - INV_SQRT2) + 1j * (np.abs(np.sin(u)) - INV_SQRT2)
    return _as_output(np.abs(folded) - FOLDING_CENTER, theta_e)


def pd_reference(kind: PdKind, theta_e: ArrayLike) -> ArrayLike:
    """Unit-amplitude pi/2-periodic reference shapes"""
    kind = PdKind(kind)
    if kind == PdKind.SINUSOIDAL_REF:
        return pd_fourth(theta_e)

    w = wrap_branch(theta_e)
    if kind == PdKind.SAWTOOTH_REF:
        values = -(4.0 / math.pi) * w
    elif kind == PdKind.TRIANGULAR_REF:
        values = -1.0 + (8.0 / math.pi) * np.abs(w)
    else:
        raise CharacteristicError(f"{kind.value} is not a reference shape")
    return _as_output(values, theta_e)


_CHARACTERISTICS: Dict[PdKind, Callable[[ArrayLike], ArrayLike]] = {
    PdKind.CLASSICAL: pd_classical,
    PdKind.FOURTH_POWER: pd_fourth,
    PdKind.FOLDING: pd_folding,
}


def k_pd(kind: PdKind) -> float:
    """Native amplitude K_pd of a characteristic"""
    return PD_GAINS[PdKind(kind)]


def evaluate(kind: PdKind, theta_e: ArrayLike) -> ArrayLike:
    """K_pd*phi for any supported kind"""
    kind = PdKind(kind)
    if kind in REFERENCE_SHAPES:
        return pd_reference(kind, theta_e)
    try:
        return _CHARACTERISTICS[kind](theta_e)
    except KeyError:
        raise CharacteristicError(f"Unsupported phase detector: {kind}")


def normalized(kind: PdKind, theta_e: ArrayLike) -> ArrayLike:
    """Unit-amplitude characteristic phi"""
    kind = PdKind(kind)
    values = np.asarray(evaluate(kind, theta_e)) / k_pd(kind)
    return _as_output(values, theta_e)


# Scalar forms of the normalized characteristics for the phase-model integrator.
# They return phi (unit amplitude) and use math instead of numpy ufuncs.

def _classical_scalar(theta: float) -> float:
    w = theta - HALF_PI * math.ceil((theta - QUARTER_PI) / HALF_PI)
    return -SQRT2 * math.sin(w)


def _fourth_scalar(theta: float) -> float:
    return -math.sin(4.0 * theta)


def _folding_scalar(theta: float) -> float:
    w = theta - HALF_PI * math.ceil((theta - QUARTER_PI) / HALF_PI)
    return (2.0 * abs(math.sin(0.5 * w)) - FOLDING_CENTER) / FOLDING_CENTER


def _sawtooth_scalar(theta: float) -> float:
    w = theta - HALF_PI * math.ceil((theta - QUARTER_PI) / HALF_PI)
    return -(4.0 / math.pi) * w


def _triangular_scalar(theta: float) -> float:
    w = theta - HALF_PI * math.ceil((theta - QUARTER_PI) / HALF_PI)
    return -1.0 + (8.0 / math.pi) * abs(w)


_SCALAR_FORMS: Dict[PdKind, Callable[[float], float]] = {
    PdKind.CLASSICAL: _classical_scalar,
    PdKind.FOURTH_POWER: _fourth_scalar,
    PdKind.FOLDING: _folding_scalar,
    PdKind.SINUSOIDAL_REF: _fourth_scalar,
    PdKind.SAWTOOTH_REF: _sawtooth_scalar,
    PdKind.TRIANGULAR_REF: _triangular_scalar,
}


def scalar_characteristic(kind: PdKind) -> Callable[[float], float]:
    """Fast scalar phi for use inside integration loops"""
    return _SCALAR_FORMS[PdKind(kind)]


def period_grid(n_samples: int, include_start: bool = False) -> np.ndarray:
    """Uniform grid over one period (-pi/4, pi/4]"""
    if include_start:
        return np.linspace(-QUARTER_PI, QUARTER_PI, n_samples)
    return np.linspace(-QUARTER_PI, QUARTER_PI, n_samples + 1)[1:]


def sample_curve(kind: PdKind, n_samples: int) -> PdCurve:
    """Sample K_pd*phi over one period"""
    if n_samples < 2:
        raise CharacteristicError("A PD curve needs at least 2 samples")
    kind = PdKind(kind)
    thetas = period_grid(n_samples, include_start=True)
    values = np.asarray(evaluate(kind, thetas), dtype=float)
    return PdCurve(kind=kind, thetas=thetas, values=values, k_pd=k_pd(kind))


def max_deviation(kind_a: PdKind, kind_b: PdKind, n_samples: int) -> float:
    """
    Maximum deviation between two normalized characteristics on one period.

    The grid is (-pi/4, pi/4] so jump points at pi/4 are compared through their
    left limits, which is how every discontinuous shape here is evaluated.
    """
    if n_samples < MIN_DEVIATION_SAMPLES:
        raise CharacteristicError(
            f"n_samples must be at least {MIN_DEVIATION_SAMPLES} to bound the deviation, got {n_samples}"
        )
    thetas = period_grid(n_samples)
    deviation = np.abs(np.asarray(normalized(kind_a, thetas)) - np.asarray(normalized(kind_b, thetas)))
    result = float(deviation.max())
    logger.debug(f"max deviation {PdKind(kind_a).value} vs {PdKind(kind_b).value}: {result:.6f}")
    return result


def zero_crossings(kind: PdKind, n_grid: int = 4096) -> List[ZeroCrossing]:
    """All sign-change zeros of phi on [-pi/4, pi/4), continuous crossings only"""
    kind = PdKind(kind)
    fn = scalar_characteristic(kind)
    thetas = np.linspace(-QUARTER_PI, QUARTER_PI, n_grid + 1)
    values = np.array([fn(float(t)) for t in thetas])
    jump = 0.5  # only a discontinuity moves this far between neighbouring grid points

    crossings: List[ZeroCrossing] = []
    for i in range(n_grid):
        a, b = values[i], values[i + 1]
        if abs(b - a) > jump:
            continue
        if a > 0.0 >= b:
            stable = True
        elif a <= 0.0 < b:
            stable = False
        else:
            continue
        theta = brentq(fn, float(thetas[i]), float(thetas[i + 1]), xtol=ZERO_XTOL)
        if theta >= QUARTER_PI:
            continue
        h = 1e-6
        slope = (fn(theta + h) - fn(theta - h)) / (2 * h)
        crossings.append(ZeroCrossing(theta=theta, stable=stable, slope=slope))
    return crossings


_STABLE_ZERO_CACHE: Dict[PdKind, float] = {}


def find_stable_zero(kind: PdKind) -> float:
    """
    Stable lock point theta_e* in [-pi/4, pi/4).

    With the loop polarity used by the phase model the restoring zeros are
    the ones where phi crosses from positive to negative.
    """
    kind = PdKind(kind)
    if kind in _STABLE_ZERO_CACHE:
        return _STABLE_ZERO_CACHE[kind]

    stable = [z for z in zero_crossings(kind) if z.stable]
    if not stable:
        raise CharacteristicError(f"{kind.value} has no stable zero on one period")

    # a symmetric grid can land a zero on a grid node; keep the one closest to the centre
    theta = min(stable, key=lambda z: abs(z.theta)).theta
    _STABLE_ZERO_CACHE[kind] = theta
    logger.debug(f"Stable zero of {kind.value}: {theta:.12f}")
    return theta


def slope_at(kind: PdKind, theta_e: float, step: float = 1e-7) -> float:
    """Central-difference slope of phi"""
    fn = scalar_characteristic(kind)
    return (fn(theta_e + step) - fn(theta_e - step)) / (2.0 * step)


def decide_symbol(i_val: ArrayLike, q_val: ArrayLike) -> ArrayLike:
    """QPSK decision table: (+,+)->1, (-,+)->3, (-,-)->5, (+,-)->7 with sign(0) = +1"""
    i_pos = np.asarray(i_val) >= 0.0
    q_pos = np.asarray(q_val) >= 0.0
    symbols = np.where(q_pos, np.where(i_pos, 1, 3), np.where(i_pos, 7, 5))
    if np.ndim(symbols) == 0:
        return int(symbols)
    return symbols.astype(np.int64)


def rotate_symbols(symbols: ArrayLike, quarter_turns: int) -> ArrayLike:
    """Map symbol indices through a rotation by quarter_turns * pi/2 (n -> n + 2k mod 8)"""
    rotated = (np.asarray(symbols, dtype=np.int64) - 1 + 2 * quarter_turns) % 8 + 1
    if np.ndim(rotated) == 0:
        return int(rotated)
    return rotated


def baseband_components(theta_e: ArrayLike, n: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """Ideal low-pass filtered arm signals I = cos(theta_e + n pi/4), Q = sin(theta_e + n pi/4)"""
    psi = np.asarray(theta_e, dtype=float) + np.asarray(n, dtype=float) * QUARTER_PI
    return np.cos(psi), np.sin(psi)


def classical_combiner(i_val: ArrayLike, q_val: ArrayLike) -> ArrayLike:
    """Limiter combiner I*sign(Q) - Q*sign(I), unit amplitude"""
    return np.asarray(i_val) * sign(q_val) - np.asarray(q_val) * sign(i_val)


def fourth_power_combiner(i_val: ArrayLike, q_val: ArrayLike) -> ArrayLike:
    """Quadrature component of (I + jQ)^4 formed by two complex squarings"""
    i_val = np.asarray(i_val, dtype=float)
    q_val = np.asarray(q_val, dtype=float)
    re2 = i_val * i_val - q_val * q_val
    im2 = 2.0 * i_val * q_val
    return 2.0 * re2 * im2


def folding_chain_original(i_val: ArrayLike, q_val: ArrayLike) -> ArrayLike:
    """Folding detector behind the classical limiter cross-products, then |.|"""
    i_val = np.asarray(i_val, dtype=float)
    q_val = np.asarray(q_val, dtype=float)
    i_arm = np.abs(i_val * sign(q_val))
    q_arm = np.abs(q_val * sign(i_val))
    return np.abs((i_arm - INV_SQRT2) + 1j * (q_arm - INV_SQRT2)) - FOLDING_CENTER


def folding_chain_simplified(i_val: ArrayLike, q_val: ArrayLike) -> ArrayLike:
    """Folding detector with |.| applied directly to the arm signals"""
    i_val = np.asarray(i_val, dtype=float)
    q_val = np.asarray(q_val, dtype=float)
    return np.abs((np.abs(i_val) - INV_SQRT2) + 1j * (np.abs(q_val) - INV_SQRT2)) - FOLDING_CENTER


def classical_from_signals(theta_e: ArrayLike, n: ArrayLike) -> ArrayLike:
    """Classical characteristic rebuilt from the arm signals, scaled by K_pd"""
    i_val, q_val = baseband_components(theta_e, n)
    value = PD_GAINS[PdKind.CLASSICAL] * classical_combiner(i_val, q_val)
    return _as_output(value, theta_e)


def reference_for(kind: PdKind) -> Optional[PdKind]:
    """Reference shape a characteristic is compared against"""
    return {
        PdKind.CLASSICAL: PdKind.SAWTOOTH_REF,
        PdKind.FOURTH_POWER: PdKind.SINUSOIDAL_REF,
        PdKind.FOLDING: PdKind.TRIANGULAR_REF,
    }.get(PdKind(kind))
