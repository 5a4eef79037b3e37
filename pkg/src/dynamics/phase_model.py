#!/usr/bin/env python3
"""
Phase-Domain Loop Model
Nonlinear phase-space model of the 4QAM Costas loops with a proportional-integral
loop filter, fixed-step RK4 integration with cycle-slip and lock detection, the
2pi-periodic transformed coordinates, and linear analysis around the lock point.

Version: 1.0.0
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from ..core.config import PdKind, settings
from ..detectors.characteristics import (
    HALF_PI,
    find_stable_zero,
    k_pd as native_k_pd,
    scalar_characteristic,
    slope_at,
)

SETTLING_DECAYS = 12.0
STEP_FRACTION = 0.01


class LoopParameterError(Exception):
    """Custom exception for invalid loop parameters"""
    pass


class LoopIntegrationError(Exception):
    """Custom exception raised when the phase model blows up or cannot be stepped"""

    def __init__(self, message: str, t: Optional[float] = None, state: Optional[Tuple[float, float]] = None):
        super().__init__(message)
        self.t = t
        self.state = state


@dataclass(frozen=True)
class PiFilter:
    """
    Proportional-integral loop filter H(s) = (1 + tau2 s) / (tau1 s).

    State-space realization with a scalar state: A = 0, b = 1/tau1, c = 1, h = tau2/tau1.
    """
    tau1: float
    tau2: float

    def __post_init__(self):
        if not self.tau1 > 0:
            raise LoopParameterError(f"tau1 must be positive, got {self.tau1}")
        if not self.tau2 >= 0:
            raise LoopParameterError(f"tau2 must be non-negative, got {self.tau2}")

    @property
    def a(self) -> float:
        return 0.0

    @property
    def b(self) -> float:
        return 1.0 / self.tau1

    @property
    def c(self) -> float:
        return 1.0

    @property
    def h(self) -> float:
        return self.tau2 / self.tau1

    def transfer(self, omega: float) -> complex:
        """H(j omega) from the realization, -c (A - sI)^-1 b + h"""
        s = 1j * omega
        return -self.c * self.b / (self.a - s) + self.h


@dataclass(frozen=True)
class LoopParams:
    """Loop configuration: detector, VCO, reference and loop filter"""
    pd: PdKind
    k_vco: float
    filter: PiFilter
    omega_ref: float = 0.0
    omega_free: float = 0.0
    k_pd: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "pd", PdKind(self.pd))
        if self.k_pd is None:
            object.__setattr__(self, "k_pd", native_k_pd(self.pd))
        if not self.k_vco > 0:
            raise LoopParameterError(f"k_vco must be positive, got {self.k_vco}")
        if not self.k_pd > 0:
            raise LoopParameterError(f"k_pd must be positive, got {self.k_pd}")

    @property
    def offset(self) -> float:
        """Frequency offset omega_ref - omega_free"""
        return self.omega_ref - self.omega_free

    def with_offset(self, offset: float) -> "LoopParams":
        return replace(self, omega_ref=self.omega_free + offset)


@dataclass
class PhaseState:
    """Slow-model state; theta_e is kept unwrapped"""
    theta_e: float
    x: float
    t: float = 0.0


@dataclass
class TransformedState:
    """State in the 2pi-periodic coordinates theta~ = 4 theta_e"""
    theta_tilde: float
    x: float
    t: float
    omega_tilde: float


@dataclass
class Trajectory:
    """Fixed-step trajectory of the phase model"""
    times: np.ndarray
    theta_e: np.ndarray
    x: np.ndarray
    g: np.ndarray
    locked: bool
    slipped: bool
    lock_point: float
    final_rate: float

    @property
    def samples(self) -> List[PhaseState]:
        return [PhaseState(theta_e=float(th), x=float(xx), t=float(t))
                for t, th, xx in zip(self.times, self.theta_e, self.x)]

    @property
    def final_state(self) -> PhaseState:
        return PhaseState(theta_e=float(self.theta_e[-1]), x=float(self.x[-1]), t=float(self.times[-1]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "theta_e": self.theta_e, "x": self.x, "g": self.g})


@dataclass
class TransformedTrajectory:
    times: np.ndarray
    theta_tilde: np.ndarray
    x: np.ndarray


@dataclass
class LinearizedLoop:
    """Loop linearized at its stable lock point"""
    poles: np.ndarray
    regime: str
    natural_frequency: float
    damping: float
    slope: float

    @property
    def decay_rate(self) -> float:
        return float(np.min(np.abs(self.poles.real)))


@dataclass
class LoopTiming:
    dt: float
    t_end: float

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class _RunResult:
    theta_end: float
    x_end: float
    rate_end: float
    max_excursion: float
    steps: int
    arrays: Optional[Dict[str, np.ndarray]] = field(default=None)


def nearest_lock_point(params: LoopParams, theta_e: float) -> float:
    """Stable zero theta* + k pi/2 closest to theta_e"""
    theta_star = find_stable_zero(params.pd)
    k = round((theta_e - theta_star) / HALF_PI)
    return theta_star + k * HALF_PI


def equilibrium_state(params: LoopParams, offset: Optional[float] = None, t: float = 0.0) -> PhaseState:
    """Locked state for a frequency offset: theta_e at the stable zero, c x = offset / K_vco"""
    offset = params.offset if offset is None else offset
    f = params.filter
    return PhaseState(theta_e=find_stable_zero(params.pd), x=offset / (params.k_vco * f.c), t=t)


def phase_ode_rhs(params: LoopParams, state: PhaseState) -> Tuple[float, float]:
    """
    Right-hand side of the phase model.

        dx/dt       = A x - b K_pd phi(theta_e)
        dtheta_e/dt = (omega_ref - omega_free) - K_vco (c x - h K_pd phi(theta_e))
    """
    f = params.filter
    v = params.k_pd * scalar_characteristic(params.pd)(state.theta_e)
    d_x = f.a * state.x - f.b * v
    d_theta = params.offset - params.k_vco * (f.c * state.x - f.h * v)
    return d_theta, d_x


def transform_coordinates(state: PhaseState, params: LoopParams) -> TransformedState:
    """Map into theta~ = 4 theta_e with omega~ = (omega_ref - omega_free) / 4"""
    return TransformedState(
        theta_tilde=4.0 * state.theta_e,
        x=state.x,
        t=state.t,
        omega_tilde=params.offset / 4.0,
    )


def transformed_rhs(params: LoopParams, state: TransformedState) -> Tuple[float, float]:
    """
    Right-hand side in transformed coordinates, v~(theta~) = K_pd phi(theta~ / 4).

        dx/dt      = A x - b v~
        dtheta~/dt = 16 omega~ - 4 K_vco (c x - h v~)
    """
    f = params.filter
    v = params.k_pd * scalar_characteristic(params.pd)(state.theta_tilde / 4.0)
    d_x = f.a * state.x - f.b * v
    d_theta = 4.0 * (4.0 * state.omega_tilde) - 4.0 * params.k_vco * (f.c * state.x - f.h * v)
    return d_theta, d_x


def _validate_step(dt: float, t_end: float) -> int:
    if not (dt > 0 and math.isfinite(dt)):
        raise LoopIntegrationError(f"Integration step must be positive and finite, got {dt}")
    if not (t_end >= dt and math.isfinite(t_end)):
        raise LoopIntegrationError(f"t_end must be finite and at least one step, got {t_end}")
    return int(round(t_end / dt))


def _rk4_run(params: LoopParams, theta0: float, x0: float, t0: float, dt: float, n_steps: int,
             reference: float, stop_on_slip: bool = False, record: bool = True) -> _RunResult:
    phi = scalar_characteristic(params.pd)
    kpd = params.k_pd
    kv = params.k_vco
    f = params.filter
    a, b, c, h = f.a, f.b, f.c, f.h
    dw = params.offset

    def rhs(theta: float, x: float) -> Tuple[float, float]:
        v = kpd * phi(theta)
        return dw - kv * (c * x - h * v), a * x - b * v

    if record:
        thetas = np.empty(n_steps + 1)
        xs = np.empty(n_steps + 1)
        thetas[0], xs[0] = theta0, x0

    theta, x = theta0, x0
    max_excursion = abs(theta - reference)
    half_dt = 0.5 * dt
    sixth_dt = dt / 6.0
    step = 0
    for step in range(1, n_steps + 1):
        k1, l1 = rhs(theta, x)
        k2, l2 = rhs(theta + half_dt * k1, x + half_dt * l1)
        k3, l3 = rhs(theta + half_dt * k2, x + half_dt * l2)
        k4, l4 = rhs(theta + dt * k3, x + dt * l3)
        theta += sixth_dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x += sixth_dt * (l1 + 2.0 * l2 + 2.0 * l3 + l4)

        if not (math.isfinite(theta) and math.isfinite(x)):
            t_fail = t0 + step * dt
            raise LoopIntegrationError(
                f"Non-finite phase state at t={t_fail:.6g}s (theta_e={theta}, x={x})",
                t=t_fail, state=(theta, x),
            )

        excursion = abs(theta - reference)
        if excursion > max_excursion:
            max_excursion = excursion
        if record:
            thetas[step], xs[step] = theta, x
        if stop_on_slip and max_excursion >= HALF_PI:
            break

    rate_end = rhs(theta, x)[0]
    arrays = None
    if record:
        arrays = {"theta_e": thetas[: step + 1], "x": xs[: step + 1]}
    return _RunResult(theta_end=theta, x_end=x, rate_end=rate_end,
                      max_excursion=max_excursion, steps=step, arrays=arrays)


def _classify(params: LoopParams, run: _RunResult, reference: float) -> Tuple[bool, bool, float]:
    lock_point = nearest_lock_point(params, run.theta_end)
    slipped = run.max_excursion >= HALF_PI or abs(lock_point - reference) > 0.5 * HALF_PI
    locked = (abs(run.theta_end - lock_point) < settings.lock_phase_tolerance
              and abs(run.rate_end) < settings.lock_rate_tolerance * params.k_vco)
    return locked, slipped, lock_point


def integrate(params: LoopParams, initial: PhaseState, dt: float, t_end: float,
              stop_on_slip: bool = False) -> Trajectory:
    """
    Integrate the phase model with classical fixed-step RK4.

    A run slips when theta_e moves one PD period (pi/2) away from the lock point
    nearest to its start, or settles on another lock point. A run is locked when
    it ends within the phase tolerance of a stable zero with a residual rate below
    the rate tolerance times K_vco.
    """
    n_steps = _validate_step(dt, t_end)
    reference = nearest_lock_point(params, initial.theta_e)
    run = _rk4_run(params, initial.theta_e, initial.x, initial.t, dt, n_steps, reference,
                   stop_on_slip=stop_on_slip, record=True)
    locked, slipped, lock_point = _classify(params, run, reference)
    logger.debug(f"{params.pd.value} run: {run.steps} steps, locked={locked}, slipped={slipped}")

    thetas, xs = run.arrays["theta_e"], run.arrays["x"]
    times = initial.t + dt * np.arange(thetas.size)
    phi = np.array([scalar_characteristic(params.pd)(float(th)) for th in thetas])
    g = params.filter.c * xs - params.filter.h * params.k_pd * phi

    return Trajectory(times=times, theta_e=thetas, x=xs, g=g, locked=locked, slipped=slipped,
                      lock_point=lock_point, final_rate=run.rate_end)


def run_outcome(params: LoopParams, initial: PhaseState, dt: float, t_end: float,
                stop_on_slip: bool = True) -> Tuple[bool, bool]:
    """(locked, slipped) of one run without recording the trajectory"""
    n_steps = _validate_step(dt, t_end)
    reference = nearest_lock_point(params, initial.theta_e)
    run = _rk4_run(params, initial.theta_e, initial.x, initial.t, dt, n_steps, reference,
                   stop_on_slip=stop_on_slip, record=False)
    locked, slipped, _ = _classify(params, run, reference)
    return locked, slipped


def integrate_transformed(params: LoopParams, initial: TransformedState, dt: float,
                          t_end: float) -> TransformedTrajectory:
    """RK4 integration of the transformed model, same step schedule as integrate()"""
    n_steps = _validate_step(dt, t_end)
    thetas = np.empty(n_steps + 1)
    xs = np.empty(n_steps + 1)
    state = replace(initial)
    thetas[0], xs[0] = state.theta_tilde, state.x

    def rhs(theta: float, x: float) -> Tuple[float, float]:
        return transformed_rhs(params, TransformedState(theta, x, 0.0, initial.omega_tilde))

    theta, x = state.theta_tilde, state.x
    for step in range(1, n_steps + 1):
        k1, l1 = rhs(theta, x)
        k2, l2 = rhs(theta + 0.5 * dt * k1, x + 0.5 * dt * l1)
        k3, l3 = rhs(theta + 0.5 * dt * k2, x + 0.5 * dt * l2)
        k4, l4 = rhs(theta + dt * k3, x + dt * l3)
        theta += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x += dt / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
        if not (math.isfinite(theta) and math.isfinite(x)):
            raise LoopIntegrationError("Non-finite transformed state", t=initial.t + step * dt, state=(theta, x))
        thetas[step], xs[step] = theta, x

    times = initial.t + dt * np.arange(n_steps + 1)
    return TransformedTrajectory(times=times, theta_tilde=thetas, x=xs)


def linearized_poles(params: LoopParams) -> LinearizedLoop:
    """Eigenvalues of the loop linearized at the stable zero"""
    f = params.filter
    theta_star = find_stable_zero(params.pd)
    # slope of K_pd phi, negative at a stable zero
    s = params.k_pd * slope_at(params.pd, theta_star)
    jacobian = np.array([
        [params.k_vco * f.h * s, -params.k_vco * f.c],
        [-f.b * s, f.a],
    ])
    poles = np.linalg.eigvals(jacobian)

    natural_frequency = math.sqrt(max(-params.k_vco * f.c * f.b * s, 0.0))
    damping = (-params.k_vco * f.h * s) / (2.0 * natural_frequency) if natural_frequency > 0 else float("inf")
    if abs(damping - 1.0) < 1e-9:
        regime = "critical"
    elif damping > 1.0:
        regime = "node"
    else:
        regime = "focus"
    return LinearizedLoop(poles=poles, regime=regime, natural_frequency=natural_frequency,
                          damping=damping, slope=s)


def suggest_timing(params: LoopParams) -> LoopTiming:
    """
    Default step and horizon.

    dt = 0.01 * min(tau1, tau2 (or tau1 when tau2 = 0), 1/K_vco);
    t_end = 12 slowest linear decay times.
    """
    f = params.filter
    tau2 = f.tau2 if f.tau2 > 0 else f.tau1
    dt = STEP_FRACTION * min(f.tau1, tau2, 1.0 / params.k_vco)
    decay = linearized_poles(params).decay_rate
    if decay <= 0:
        raise LoopParameterError("Loop has no decaying mode at its lock point")
    return LoopTiming(dt=dt, t_end=SETTLING_DECAYS / decay)


def pull_in_time_estimate(params: LoopParams, offset: Optional[float] = None) -> float:
    """
    Averaged-beat estimate of the pull-in time, offset^2 tau1 / (K_vco^2 h A^2).

    A is the detector amplitude K_pd. Used to size acquisition runs, not as a bound.
    """
    offset = params.offset if offset is None else offset
    f = params.filter
    proportional = params.k_vco * f.h
    if proportional <= 0:
        return float("inf")
    return offset ** 2 * f.tau1 / (params.k_vco * proportional * params.k_pd ** 2)


def acquisition_horizon(params: LoopParams, offset: float, margin: float = 8.0) -> float:
    """Run length covering pull-in from the given offset plus settling"""
    timing = suggest_timing(params)
    return timing.t_end + margin * pull_in_time_estimate(params, offset)

