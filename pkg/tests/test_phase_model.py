"""
Tests for the phase-domain loop model
"""

import math

import numpy as np
import pytest

from src.core.config import PdKind
from src.detectors.characteristics import find_stable_zero, k_pd
from src.dynamics.lockin import lockin_sawtooth_exact, loop_for
from src.dynamics.phase_model import (
    LoopIntegrationError,
    LoopParameterError,
    LoopParams,
    PhaseState,
    PiFilter,
    acquisition_horizon,
    equilibrium_state,
    integrate,
    integrate_transformed,
    linearized_poles,
    phase_ode_rhs,
    pull_in_time_estimate,
    run_outcome,
    suggest_timing,
    transform_coordinates,
    transformed_rhs,
)


@pytest.fixture
def classical_loop() -> LoopParams:
    return loop_for(PdKind.CLASSICAL, 100.0, 0.05, 0.02)


class TestPiFilter:
    """Proportional-integral loop filter realization"""

    def test_realization(self):
        f = PiFilter(tau1=0.05, tau2=0.02)
        assert (f.a, f.b, f.c, f.h) == (0.0, pytest.approx(20.0), 1.0, pytest.approx(0.4))

    def test_transfer_function(self):
        f = PiFilter(tau1=0.05, tau2=0.02)
        for omega in (0.1, 3.0, 250.0):
            s = 1j * omega
            assert f.transfer(omega) == pytest.approx((1 + 0.02 * s) / (0.05 * s), rel=1e-12)

    def test_invalid_time_constants(self):
        with pytest.raises(LoopParameterError):
            PiFilter(tau1=0.0, tau2=0.02)
        with pytest.raises(LoopParameterError):
            PiFilter(tau1=0.05, tau2=-1.0)


class TestLoopParams:
    """Loop configuration"""

    def test_native_gain_default(self):
        for kind in (PdKind.CLASSICAL, PdKind.FOURTH_POWER, PdKind.FOLDING):
            assert loop_for(kind, 100.0, 0.05, 0.02).k_pd == k_pd(kind)

    def test_offset(self, classical_loop):
        stepped = classical_loop.with_offset(12.5)
        assert stepped.offset == pytest.approx(12.5)
        assert stepped.omega_free == classical_loop.omega_free

    def test_rejects_non_positive_gain(self):
        with pytest.raises(LoopParameterError):
            LoopParams(pd=PdKind.CLASSICAL, k_vco=0.0, filter=PiFilter(0.05, 0.02))
        with pytest.raises(LoopParameterError):
            LoopParams(pd=PdKind.CLASSICAL, k_vco=10.0, filter=PiFilter(0.05, 0.02), k_pd=-1.0)


class TestRightHandSide:
    """Phase model equations and the transformed coordinates"""

    def test_equilibrium_is_stationary(self, loop_variant):
        params = loop_for(loop_variant, 100.0, 0.05, 0.02).with_offset(7.0)
        state = equilibrium_state(params)
        assert state.x == pytest.approx(7.0 / 100.0)
        d_theta, d_x = phase_ode_rhs(params, state)
        assert abs(d_theta) < 1e-8
        assert abs(d_x) < 1e-8

    def test_transformed_rhs_identity(self, loop_variant):
        params = loop_for(loop_variant, 80.0, 0.1, 0.03).with_offset(-4.0)
        rng = np.random.default_rng(3)
        for theta, x in zip(rng.uniform(-3, 3, 50), rng.uniform(-1, 1, 50)):
            state = PhaseState(theta_e=float(theta), x=float(x))
            d_theta, d_x = phase_ode_rhs(params, state)
            t_theta, t_x = transformed_rhs(params, transform_coordinates(state, params))
            assert t_theta == pytest.approx(4.0 * d_theta, rel=1e-12, abs=1e-12)
            assert t_x == pytest.approx(d_x, rel=1e-12, abs=1e-12)

    def test_transformed_trajectory_matches(self):
        params = loop_for(PdKind.FOLDING, 100.0, 0.05, 0.02).with_offset(3.0)
        initial = PhaseState(theta_e=0.1, x=0.0)
        direct = integrate(params, initial, 1e-4, 0.2)
        transformed = integrate_transformed(params, transform_coordinates(initial, params), 1e-4, 0.2)
        assert np.max(np.abs(transformed.theta_tilde - 4.0 * direct.theta_e)) < 1e-9
        assert np.max(np.abs(transformed.x - direct.x)) < 1e-12


class TestIntegration:
    """Fixed-step RK4 with lock and slip detection"""

    def test_rk4_fourth_order(self):
        params = loop_for(PdKind.FOURTH_POWER, 100.0, 0.05, 0.02)
        initial = PhaseState(theta_e=0.3, x=0.0)
        ends = [integrate(params, initial, dt, 0.1).theta_e[-1] for dt in (1e-3, 5e-4, 2.5e-4)]
        ratio = abs(ends[0] - ends[1]) / abs(ends[1] - ends[2])
        assert ratio >= 12.0

    def test_relocks_from_phase_offset(self, loop_variant):
        params = loop_for(loop_variant, 100.0, 0.05, 0.02)
        timing = suggest_timing(params)
        theta_star = find_stable_zero(loop_variant)
        trajectory = integrate(params, PhaseState(theta_e=theta_star + 0.2, x=0.0), timing.dt, timing.t_end)
        assert trajectory.locked
        assert not trajectory.slipped
        assert trajectory.lock_point == pytest.approx(theta_star, abs=1e-9)
        assert trajectory.final_state.theta_e == pytest.approx(theta_star, abs=1e-3)

    def test_steady_state_control(self, loop_variant):
        params = loop_for(loop_variant, 100.0, 0.05, 0.02).with_offset(7.0)
        timing = suggest_timing(params)
        trajectory = integrate(params, equilibrium_state(params, offset=0.0), timing.dt, 2.0 * timing.t_end)
        assert trajectory.locked and not trajectory.slipped
        assert abs(trajectory.g[-1] - 7.0 / 100.0) < 1e-6

    def test_large_step_slips(self, classical_loop):
        offset = 10.0 * lockin_sawtooth_exact(100.0, 0.5, 0.05, 0.02)
        params = classical_loop.with_offset(offset)
        timing = suggest_timing(params)
        locked, slipped = run_outcome(params, equilibrium_state(params, offset=0.0), timing.dt, timing.t_end)
        assert slipped

    def test_trajectory_frame(self, classical_loop):
        trajectory = integrate(classical_loop, PhaseState(theta_e=0.1, x=0.0), 1e-4, 0.01)
        frame = trajectory.to_frame()
        assert list(frame.columns) == ["t", "theta_e", "x", "g"]
        assert len(frame) == 101
        assert frame["t"].iloc[-1] == pytest.approx(0.01)

    def test_invalid_step(self, classical_loop):
        with pytest.raises(LoopIntegrationError):
            integrate(classical_loop, PhaseState(0.0, 0.0), 0.0, 1.0)
        with pytest.raises(LoopIntegrationError):
            integrate(classical_loop, PhaseState(0.0, 0.0), 1e-3, 1e-4)


class TestLinearAnalysis:
    """Poles, regimes and default timing"""

    def test_classical_poles(self, classical_loop):
        linear = linearized_poles(classical_loop)
        assert linear.regime == "focus"
        assert linear.natural_frequency == pytest.approx(math.sqrt(100.0 * 20.0 / math.sqrt(2)), rel=1e-5)
        assert linear.decay_rate == pytest.approx(100.0 * 0.4 / (2.0 * math.sqrt(2)), rel=1e-5)
        assert np.all(linear.poles.real < 0)

    def test_overdamped_node(self):
        linear = linearized_poles(loop_for(PdKind.FOURTH_POWER, 1000.0, 0.05, 0.02))
        assert linear.regime == "node"

    def test_suggest_timing(self, classical_loop):
        timing = suggest_timing(classical_loop)
        assert timing.dt == pytest.approx(1e-4)
        assert timing.t_end == pytest.approx(12.0 / (100.0 * 0.4 / (2.0 * math.sqrt(2))), rel=1e-5)
        assert timing.n_steps == round(timing.t_end / timing.dt)

    def test_pull_in_estimate_scales_quadratically(self, classical_loop):
        assert pull_in_time_estimate(classical_loop, 40.0) == pytest.approx(
            4.0 * pull_in_time_estimate(classical_loop, 20.0))


@pytest.mark.slow
class TestPullIn:
    """PI loops acquire from offsets far beyond lock-in"""

    def test_acquires_from_ten_lockin_ranges(self, loop_variant, pull_in_parameter_sets):
        for k_vco, tau1, tau2 in pull_in_parameter_sets:
            params = loop_for(loop_variant, k_vco, tau1, tau2)
            offset = 10.0 * lockin_sawtooth_exact(k_vco, params.k_pd, tau1, tau2)
            stepped = params.with_offset(offset)
            horizon = acquisition_horizon(stepped, offset)
            start = PhaseState(theta_e=find_stable_zero(loop_variant), x=0.0)
            locked, _ = run_outcome(stepped, start, suggest_timing(stepped).dt, horizon, stop_on_slip=False)
            assert locked, f"{loop_variant.value} did not acquire at K={k_vco}, tau1={tau1}, tau2={tau2}"
