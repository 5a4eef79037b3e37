"""
Tests for the lock-in range formulas and the numeric estimator
"""

import math

import pytest

from src.core.config import PdKind
from src.detectors.characteristics import FOLDING_CENTER
from src.dynamics.lockin import (
    LockinError,
    LockinRegime,
    LockinSingularityError,
    closed_form,
    exact_boundary,
    lockin_classical,
    lockin_folding,
    lockin_numeric,
    lockin_params_classical,
    lockin_params_folding,
    lockin_sawtooth_exact,
    lockin_sweep,
    lockin_triangular_exact,
    loop_for,
    ratio_spread,
    stays_locked,
    upper_bracket,
)
from src.dynamics.phase_model import suggest_timing


def critical_gain(tau1: float, tau2: float) -> float:
    """K_vco putting the folding formula exactly on a^2 = 2 pi"""
    return 2.0 * math.pi * tau1 / (4.0 * FOLDING_CENTER * tau2 ** 2)


class TestClassicalFormula:
    """Closed-form classical lock-in"""

    def test_reference_value(self):
        params = lockin_params_classical(500.0, 0.05, 0.02)
        assert params.a == pytest.approx(4.0)
        assert params.d_minus == pytest.approx(4.0)
        assert params.d_plus == pytest.approx(math.sqrt(16.0 + 4.0 * math.pi))
        assert lockin_classical(500.0, 0.05, 0.02) == pytest.approx(1868.9503377493, rel=1e-9)

    def test_vanishing_gain(self):
        assert lockin_classical(1e-9, 0.1, 0.02) < 1e-3

    def test_grows_with_gain(self):
        values = [lockin_classical(k, 0.05, 0.02) for k in (20.0, 100.0, 500.0, 2000.0)]
        assert values == sorted(values)

    def test_scaling(self):
        for k in (0.5, 2.0, 10.0):
            assert lockin_classical(k * 200.0, k * 0.05, 0.02) == pytest.approx(
                lockin_classical(200.0, 0.05, 0.02), rel=1e-12)

    def test_rejects_non_positive(self):
        with pytest.raises(LockinError):
            lockin_classical(-1.0, 0.05, 0.02)
        with pytest.raises(LockinError):
            lockin_classical(100.0, 0.05, 0.0)


class TestFoldingFormula:
    """Three-case folding lock-in"""

    @pytest.mark.parametrize("k_vco,tau1,tau2,expected", [
        (50.0, 0.05, 0.02, 169.0931),
        (200.0, 0.05, 0.02, 431.1450),
        (100.0, 0.1, 0.01, 152.7894),
        (300.0, 0.2, 0.03, 252.2485),
        (30.0, 0.05, 0.03, 135.6050),
    ])
    def test_focus_values(self, k_vco, tau1, tau2, expected):
        omega, regime = lockin_folding(k_vco, FOLDING_CENTER, tau1, tau2)
        assert regime == LockinRegime.FOCUS
        assert omega == pytest.approx(expected, rel=1e-5)

    def test_critical_case(self):
        k_crit = critical_gain(0.05, 0.02)
        assert k_crit == pytest.approx(513.086076, rel=1e-8)
        params = lockin_params_folding(k_crit, 0.05, 0.02)
        assert params.regime == LockinRegime.CRITICAL
        assert params.omega_l == pytest.approx(2.0 * math.sqrt(2.0) * math.pi / 0.02 * math.e, rel=1e-9)

    def test_continuous_through_critical(self):
        k_crit = critical_gain(0.05, 0.02)
        center = lockin_params_folding(k_crit, 0.05, 0.02).omega_l
        below = lockin_params_folding(k_crit * (1 - 1e-8), 0.05, 0.02)
        above = lockin_params_folding(k_crit * (1 + 1e-8), 0.05, 0.02)
        assert below.regime == LockinRegime.FOCUS
        assert above.regime == LockinRegime.NODE
        assert below.omega_l == pytest.approx(center, rel=1e-4)
        assert above.omega_l == pytest.approx(center, rel=1e-4)
        wide_below = lockin_params_folding(k_crit * (1 - 1e-6), 0.05, 0.02).omega_l
        wide_above = lockin_params_folding(k_crit * (1 + 1e-6), 0.05, 0.02).omega_l
        assert abs(wide_above - wide_below) / center < 1e-3

    def test_node_case_admissible_region(self):
        k_crit = critical_gain(0.05, 0.02)
        assert lockin_params_folding(1.2 * k_crit, 0.05, 0.02).regime == LockinRegime.NODE
        with pytest.raises(LockinSingularityError):
            lockin_params_folding(2.0 * k_crit, 0.05, 0.02)


class TestSawtoothExact:
    """Exact boundary of the sawtooth-detector loop"""

    @pytest.mark.parametrize("k_vco,k_pd,expected", [
        (500.0, 1.0, 130.802),
        (100.0, 0.5, 22.211),
        (20.0, 1.0, 12.097),
    ])
    def test_values(self, k_vco, k_pd, expected):
        assert lockin_sawtooth_exact(k_vco, k_pd, 0.05, 0.02) == pytest.approx(expected, rel=1e-4)

    def test_closed_form_dispatch(self):
        saw = loop_for(PdKind.SAWTOOTH_REF, 100.0, 0.05, 0.02, k_pd=0.5)
        assert closed_form(saw).omega_l == pytest.approx(22.211, rel=1e-4)
        assert closed_form(loop_for(PdKind.FOURTH_POWER, 100.0, 0.05, 0.02)) is None


class TestTriangularExact:
    """Exact boundary of the triangular-detector loop"""

    def test_published_form_at_a_squared_pi(self):
        k_vco = math.pi * 0.05 / (4.0 * FOLDING_CENTER * 0.02 ** 2)
        exact = lockin_triangular_exact(k_vco, FOLDING_CENTER, 0.05, 0.02)
        published, regime = lockin_folding(k_vco, FOLDING_CENTER, 0.05, 0.02)
        assert regime == LockinRegime.FOCUS
        assert 16.0 * exact == pytest.approx(published, rel=1e-12)

    def test_continuous_through_critical(self):
        k_crit = critical_gain(0.05, 0.02)
        center = lockin_triangular_exact(k_crit, FOLDING_CENTER, 0.05, 0.02)
        a = math.sqrt(2.0 * math.pi)
        assert center == pytest.approx(a * math.sqrt(math.pi) / (8.0 * 0.02) * math.exp(1.0 / math.sqrt(2.0)), rel=1e-9)
        for factor in (1 - 1e-8, 1 + 1e-8):
            assert lockin_triangular_exact(k_crit * factor, FOLDING_CENTER, 0.05, 0.02) == pytest.approx(center, rel=1e-4)

    def test_weak_damping_limit(self):
        value = lockin_triangular_exact(100.0, 0.5, 0.05, 1e-6)
        assert value == pytest.approx(0.25 * math.sqrt(math.pi) * math.sqrt(100.0 * 0.5 / 0.05), rel=1e-3)

    def test_no_singular_case(self):
        # the published form fails above a^2 = 3pi, the exact one does not
        k_vco = 2000.0
        with pytest.raises(LockinSingularityError):
            lockin_params_folding(k_vco, 0.05, 0.02)
        assert lockin_triangular_exact(k_vco, FOLDING_CENTER, 0.05, 0.02) == pytest.approx(178.61, rel=1e-3)

    def test_dispatch(self):
        tri = loop_for(PdKind.TRIANGULAR_REF, 100.0, 0.05, 0.02, k_pd=0.5)
        assert closed_form(tri).omega_l == pytest.approx(20.569, rel=1e-4)
        assert exact_boundary(tri) == pytest.approx(20.569, rel=1e-4)
        folding = loop_for(PdKind.FOLDING, 100.0, 0.05, 0.02)
        assert exact_boundary(folding) == pytest.approx(17.19, rel=1e-3)
        classical = loop_for(PdKind.CLASSICAL, 100.0, 0.05, 0.02)
        assert exact_boundary(classical) == pytest.approx(22.211, rel=1e-4)
        assert exact_boundary(loop_for(PdKind.FOURTH_POWER, 100.0, 0.05, 0.02)) is None


class TestNumericEstimator:
    """Cycle-slip bisection"""

    def test_matches_sawtooth_boundary(self):
        params = loop_for(PdKind.SAWTOOTH_REF, 100.0, 0.05, 0.02, k_pd=0.5)
        numeric = lockin_numeric(params)
        assert numeric == pytest.approx(lockin_sawtooth_exact(100.0, 0.5, 0.05, 0.02), rel=0.03)

    def test_matches_triangular_boundary(self):
        params = loop_for(PdKind.TRIANGULAR_REF, 100.0, 0.05, 0.02, k_pd=0.5)
        numeric = lockin_numeric(params)
        assert numeric == pytest.approx(lockin_triangular_exact(100.0, 0.5, 0.05, 0.02), rel=0.03)

    def test_relative_tolerance_sets_resolution(self):
        params = loop_for(PdKind.SAWTOOTH_REF, 100.0, 0.05, 0.02, k_pd=0.5)
        coarse = lockin_numeric(params, rel_tolerance=0.05)
        fine = lockin_numeric(params, rel_tolerance=1e-4)
        assert coarse == pytest.approx(fine, rel=0.03)

    def test_step_predicate(self):
        params = loop_for(PdKind.SAWTOOTH_REF, 100.0, 0.05, 0.02, k_pd=0.5)
        timing = suggest_timing(params)
        assert stays_locked(params, 15.0, timing)
        assert not stays_locked(params, 30.0, timing)
        assert stays_locked(params, 0.0, timing)

    def test_upper_bracket_slips(self):
        params = loop_for(PdKind.CLASSICAL, 100.0, 0.1, 0.01)
        assert not stays_locked(params, upper_bracket(params), suggest_timing(params))

    def test_reproducible(self):
        params = loop_for(PdKind.FOLDING, 100.0, 0.1, 0.01)
        assert lockin_numeric(params) == lockin_numeric(params)

    def test_rejects_bad_tolerance(self):
        with pytest.raises(LockinError):
            lockin_numeric(loop_for(PdKind.CLASSICAL, 100.0, 0.1, 0.01), tolerance=0.0)
        for rel in (0.0, 1.0):
            with pytest.raises(LockinError):
                lockin_numeric(loop_for(PdKind.CLASSICAL, 100.0, 0.1, 0.01), rel_tolerance=rel)


class TestSweep:
    """Sweep frames and ratio checks"""

    def test_empty_grid(self):
        with pytest.raises(LockinError):
            lockin_sweep([])

    def test_sweep_columns(self):
        frame = lockin_sweep([loop_for(PdKind.FOLDING, 100.0, 0.1, 0.01)], max_workers=1)
        assert list(frame.columns) == [
            "pd", "k_vco", "k_pd", "tau1", "tau2",
            "omega_l_formula", "omega_l_exact", "omega_l_numeric", "ratio", "ratio_exact",
            "regime", "linear_regime",
        ]
        row = frame.iloc[0]
        assert row["regime"] in {"i", "ii", "iii"}
        assert row["omega_l_formula"] == pytest.approx(152.7894, rel=1e-5)
        assert row["ratio"] == pytest.approx(row["omega_l_numeric"] / row["omega_l_formula"])
        assert row["omega_l_exact"] == pytest.approx(9.79, rel=1e-3)
        assert row["ratio_exact"] == pytest.approx(row["omega_l_numeric"] / row["omega_l_exact"])

    def test_ratio_spread(self):
        assert ratio_spread([1.0, 1.1, float("nan")]) == pytest.approx(0.1)
        with pytest.raises(LockinError):
            ratio_spread([float("nan")])

    @pytest.mark.slow
    def test_classical_tracks_sawtooth_boundary(self, classical_lockin_sets):
        grid = [loop_for(PdKind.CLASSICAL, k, t1, t2) for k, t1, t2 in classical_lockin_sets]
        frame = lockin_sweep(grid, max_workers=1)
        assert (frame["ratio_exact"] - 1.0).abs().max() <= 0.05
        # the published form drifts against the simulation as a grows
        assert frame["ratio"].between(0.030, 0.048).all()
        assert 0.15 < ratio_spread(frame["ratio"]) < 0.40
        by_gain = frame[frame["tau1"] == 0.05].set_index("k_vco")["ratio"]
        assert by_gain[20.0] > by_gain[2000.0]

    @pytest.mark.slow
    def test_folding_tracks_triangular_boundary(self, folding_lockin_sets):
        grid = [loop_for(PdKind.FOLDING, k, t1, t2) for k, t1, t2 in folding_lockin_sets]
        frame = lockin_sweep(grid, max_workers=1)
        assert (frame["ratio_exact"] - 1.0).abs().max() <= 0.08
        singular = frame[frame["k_vco"] == 2000.0].iloc[0]
        assert math.isnan(singular["omega_l_formula"])
        assert singular["regime"] == LockinRegime.NODE.value
        finite = frame["ratio"].dropna()
        assert len(finite) == 3
        assert finite.between(0.035, 0.075).all()
        assert ratio_spread(finite) > 0.2

    @pytest.mark.slow
    def test_fourth_power_monotone(self):
        grid = [loop_for(PdKind.FOURTH_POWER, k, 0.05, 0.02) for k in (20.0, 100.0, 300.0)]
        frame = lockin_sweep(grid, max_workers=1)
        numeric = frame["omega_l_numeric"].tolist()
        assert numeric == sorted(numeric)
        assert frame["omega_l_formula"].isna().all()
