#!/usr/bin/env python3
"""
Lock-in Range Analysis
Published closed-form lock-in estimates for the classical and folding 4QAM Costas
loops, the exact no-slip boundaries of the loops with piecewise-linear sawtooth and
triangular detectors, and a simulation-based bisection estimator that covers every
detector including the fourth-power loop.

The published forms are kept verbatim. They carry a 16x larger amplitude than the
phase model, and their parameter dependence differs from it, so the
simulated-to-published ratio drifts with a (see `lockin_triangular_exact`). The
exact piecewise-linear boundaries are the absolute reference for the simulation.

Version: 1.0.0
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from ..core.config import PdKind, settings
from ..detectors.characteristics import FOLDING_CENTER, QUARTER_PI
from .phase_model import (
    LoopParams,
    LoopTiming,
    PiFilter,
    equilibrium_state,
    linearized_poles,
    run_outcome,
    suggest_timing,
)

CRITICAL_RELATIVE_GAP = 1e-12
BRACKET_SCALE = 100.0
MAX_BISECTIONS = 200


class LockinError(Exception):
    """Custom exception for lock-in computations"""
    pass


class LockinSingularityError(LockinError):
    """Raised when a closed form is evaluated outside its admissible region"""
    pass


class LockinBracketError(LockinError):
    """Raised when the upper bisection bracket never slips"""
    pass


class LockinRegime(str, Enum):
    """Case of the folding lock-in formula, by the sign of a^2 - 2pi"""
    NODE = "i"
    CRITICAL = "ii"
    FOCUS = "iii"


@dataclass
class LockinParams:
    """Intermediate quantities of a closed-form lock-in estimate"""
    a: float
    d_minus: float
    d_plus: float
    omega_l: float
    regime: Optional[LockinRegime] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "a": self.a,
            "d_minus": self.d_minus,
            "d_plus": self.d_plus,
            "omega_l": self.omega_l,
            "regime": self.regime.value if self.regime else "",
        }


def _require_positive(**values: float):
    for name, value in values.items():
        if not (value > 0 and math.isfinite(value)):
            raise LockinError(f"{name} must be positive and finite, got {value}")


def lockin_params_classical(k_vco: float, tau1: float, tau2: float) -> LockinParams:
    """
    Classical loop:
        omega_l = 2 (a sqrt(pi) / tau2) exp((a / 2d-) ln((d+ + d-) / (d+ - d-)))
        a = sqrt(4 K_vco tau2^2 / tau1), d- = |a|, d+ = sqrt(a^2 + 4 pi)

    The K_pd = 1/2 of the classical detector does not enter a. Its exponent, with
    d+^2 = a^2 + 4pi, belongs to a repelling linear branch (a sawtooth locked at its
    jump). The classical detector is continuous at lock and jumps at its unstable
    point; `lockin_sawtooth_exact` is the boundary of that loop.
    """
    _require_positive(k_vco=k_vco, tau1=tau1, tau2=tau2)
    a = math.sqrt(4.0 * k_vco * tau2 ** 2 / tau1)
    d_minus = abs(a)
    d_plus = math.sqrt(a * a + 4.0 * math.pi)
    exponent = (a / (2.0 * d_minus)) * math.log((d_plus + d_minus) / (d_plus - d_minus))
    omega_l = 2.0 * (a * math.sqrt(math.pi) / tau2) * math.exp(exponent)
    return LockinParams(a=a, d_minus=d_minus, d_plus=d_plus, omega_l=omega_l)


def lockin_classical(k_vco: float, tau1: float, tau2: float) -> float:
    return lockin_params_classical(k_vco, tau1, tau2).omega_l


def lockin_params_folding(k_vco: float, tau1: float, tau2: float,
                          k_pd: float = FOLDING_CENTER) -> LockinParams:
    """
    Folding loop, three cases on the sign of a^2 - 2pi with
    a = sqrt(4 K_vco K_pd tau2^2 / tau1), d- = sqrt|a^2 - 2pi|, d+ = sqrt|a^2 - 4pi|.

    Case (i) needs d+ > d-, which holds only for 2pi < a^2 < 3pi; elsewhere it
    raises LockinSingularityError.
    """
    _require_positive(k_vco=k_vco, tau1=tau1, tau2=tau2, k_pd=k_pd)
    a = math.sqrt(4.0 * k_vco * k_pd * tau2 ** 2 / tau1)
    a2 = a * a
    d_minus = math.sqrt(abs(a2 - 2.0 * math.pi))
    d_plus = math.sqrt(abs(a2 - 4.0 * math.pi))
    prefactor = 2.0 * (a * math.sqrt(math.pi) / tau2)

    if abs(a2 - 2.0 * math.pi) < CRITICAL_RELATIVE_GAP * a2:
        regime = LockinRegime.CRITICAL
        omega_l = prefactor * math.exp(a / d_plus)
    elif a2 > 2.0 * math.pi:
        regime = LockinRegime.NODE
        if not d_plus > d_minus:
            raise LockinSingularityError(
                f"Folding case (i) is singular for a^2 = {a2:.6g}: needs d+ > d- (2pi < a^2 < 3pi), "
                f"got d+ = {d_plus:.6g}, d- = {d_minus:.6g}"
            )
        exponent = (a / (2.0 * d_minus)) * math.log((d_plus + d_minus) / (d_plus - d_minus))
        omega_l = prefactor * math.exp(exponent)
    else:
        regime = LockinRegime.FOCUS
        omega_l = prefactor * math.exp((a / d_minus) * math.atan(d_minus / d_plus))

    return LockinParams(a=a, d_minus=d_minus, d_plus=d_plus, omega_l=omega_l, regime=regime)


def lockin_folding(k_vco: float, k_pd: float, tau1: float, tau2: float) -> Tuple[float, LockinRegime]:
    params = lockin_params_folding(k_vco, tau1, tau2, k_pd=k_pd)
    return params.omega_l, params.regime


def lockin_sawtooth_exact(k_vco: float, k_pd: float, tau1: float, tau2: float) -> float:
    """
    Exact lock-in frequency of the loop with the sawtooth detector K_pd * (-(4/pi) w).

    The boundary is the trajectory through the detector jump at pi/4; with
    mu = (pi/4) tau1 / (K_vco tau2^2 K_pd) it is a node for mu < 1/4 and a focus above.
    """
    _require_positive(k_vco=k_vco, k_pd=k_pd, tau1=tau1, tau2=tau2)
    mu = QUARTER_PI * tau1 / (k_vco * tau2 ** 2 * k_pd)
    if abs(mu - 0.25) < 1e-12:
        gain = math.e
    elif mu < 0.25:
        r = math.sqrt(1.0 - 4.0 * mu)
        gain = ((1.0 + r) / (2.0 * math.sqrt(mu))) * ((1.0 + r) / (1.0 - r)) ** ((1.0 - r) / (2.0 * r))
    else:
        w = math.sqrt(4.0 * mu - 1.0)
        gain = math.exp(math.atan(w) / w)
    return 0.5 * math.sqrt(k_vco * k_pd * QUARTER_PI / tau1) * gain


def lockin_triangular_exact(k_vco: float, k_pd: float, tau1: float, tau2: float) -> float:
    """
    Exact lock-in frequency of the loop with the triangular detector of amplitude K_pd.

    The boundary is the stable manifold of the saddle at the unstable zero, continued
    back through the descending branch to the lock point. With a and d- as in the
    folding formula and d+ = sqrt(a^2 + 2pi):

        omega_l = (a sqrt(pi) / (8 tau2)) exp(E)

    where E is the folding formula's exponent in each of its three cases. This is the
    published folding form with d+ = sqrt|a^2 - 4pi| replaced by sqrt(a^2 + 2pi) and
    the amplitude divided by 16; the two agree up to that factor at a^2 = pi.
    """
    _require_positive(k_vco=k_vco, k_pd=k_pd, tau1=tau1, tau2=tau2)
    a2 = 4.0 * k_vco * k_pd * tau2 ** 2 / tau1
    a = math.sqrt(a2)
    d_minus = math.sqrt(abs(a2 - 2.0 * math.pi))
    d_plus = math.sqrt(a2 + 2.0 * math.pi)

    if abs(a2 - 2.0 * math.pi) < CRITICAL_RELATIVE_GAP * a2:
        exponent = a / d_plus
    elif a2 > 2.0 * math.pi:
        exponent = (a / (2.0 * d_minus)) * math.log((d_plus + d_minus) / (d_plus - d_minus))
    else:
        exponent = (a / d_minus) * math.atan(d_minus / d_plus)
    return a * math.sqrt(math.pi) / (8.0 * tau2) * math.exp(exponent)


def closed_form(params: LoopParams) -> Optional[LockinParams]:
    """Closed form matching the loop's detector, None for the fourth-power loop"""
    f = params.filter
    if params.pd == PdKind.CLASSICAL:
        return lockin_params_classical(params.k_vco, f.tau1, f.tau2)
    if params.pd == PdKind.FOLDING:
        return lockin_params_folding(params.k_vco, f.tau1, f.tau2, k_pd=params.k_pd)
    if params.pd in EXACT_SHAPES:
        omega_l = exact_boundary(params)
        return LockinParams(a=float("nan"), d_minus=float("nan"), d_plus=float("nan"), omega_l=omega_l)
    return None


# piecewise-linear detector whose exact boundary serves each loop
EXACT_SHAPES = {
    PdKind.CLASSICAL: PdKind.SAWTOOTH_REF,
    PdKind.FOLDING: PdKind.TRIANGULAR_REF,
    PdKind.SAWTOOTH_REF: PdKind.SAWTOOTH_REF,
    PdKind.TRIANGULAR_REF: PdKind.TRIANGULAR_REF,
}


def exact_boundary(params: LoopParams) -> Optional[float]:
    """Exact lock-in of the sawtooth or triangular loop nearest to this one, at the same K_pd"""
    shape = EXACT_SHAPES.get(params.pd)
    if shape is None:
        return None
    f = params.filter
    exact = lockin_sawtooth_exact if shape == PdKind.SAWTOOTH_REF else lockin_triangular_exact
    return exact(params.k_vco, params.k_pd, f.tau1, f.tau2)


def upper_bracket(params: LoopParams) -> float:
    """Initial upper bisection bracket, 100 a / tau2"""
    f = params.filter
    if f.tau2 > 0:
        a = math.sqrt(4.0 * params.k_vco * params.k_pd * f.tau2 ** 2 / f.tau1)
        return BRACKET_SCALE * a / f.tau2
    return BRACKET_SCALE * math.sqrt(params.k_vco * params.k_pd / f.tau1)


def stays_locked(params: LoopParams, omega: float, timing: LoopTiming) -> bool:
    """
    Frequency-step test: start locked at offset -omega, switch the offset to +omega,
    and report whether the loop relocks without a cycle slip.
    """
    if omega == 0.0:
        return True
    start = equilibrium_state(params, offset=-omega)
    locked, slipped = run_outcome(params.with_offset(omega), start, timing.dt, timing.t_end, stop_on_slip=True)
    return locked and not slipped


def lockin_numeric(params: LoopParams, tolerance: Optional[float] = None,
                   timing: Optional[LoopTiming] = None, rel_tolerance: Optional[float] = None) -> float:
    """
    Lock-in frequency by bisection on the frequency-step test.

    Bisection stops once the bracket is narrower than `tolerance` rad/s or, when no
    absolute tolerance is set, narrower than `rel_tolerance` times its upper end.
    The pass/fail predicate is assumed monotone over the bracket. Fixed-step RK4
    and a fixed bisection schedule make the result bit-reproducible.
    """
    tolerance = settings.lockin_tolerance if tolerance is None else tolerance
    rel_tolerance = settings.lockin_rel_tolerance if rel_tolerance is None else rel_tolerance
    if tolerance is not None and not tolerance > 0:
        raise LockinError(f"tolerance must be positive, got {tolerance}")
    if not 0 < rel_tolerance < 1:
        raise LockinError(f"rel_tolerance must lie in (0, 1), got {rel_tolerance}")
    timing = timing or suggest_timing(params)

    lo, hi = 0.0, upper_bracket(params)
    logger.info(
        f"Lock-in bisection for {params.pd.value}: K_vco={params.k_vco}, K_pd={params.k_pd:.6g}, "
        f"tau1={params.filter.tau1}, tau2={params.filter.tau2}, bracket=[0, {hi:.6g}], "
        f"dt={timing.dt:.3g}, t_end={timing.t_end:.3g}"
    )
    if stays_locked(params, hi, timing):
        raise LockinBracketError(f"Upper bracket {hi:.6g} rad/s never slips; parameters look degenerate")

    for iteration in range(MAX_BISECTIONS):
        width = tolerance if tolerance is not None else rel_tolerance * hi
        if hi - lo <= width:
            break
        mid = 0.5 * (lo + hi)
        inside = stays_locked(params, mid, timing)
        logger.debug(f"bisection {iteration}: omega={mid:.6g} {'inside' if inside else 'outside'}")
        if inside:
            lo = mid
        else:
            hi = mid

    omega_l = 0.5 * (lo + hi)
    logger.info(f"Numeric lock-in for {params.pd.value}: {omega_l:.6g} rad/s")
    return omega_l


SWEEP_COLUMNS = [
    "pd", "k_vco", "k_pd", "tau1", "tau2",
    "omega_l_formula", "omega_l_exact", "omega_l_numeric", "ratio", "ratio_exact",
    "regime", "linear_regime",
]


def _sweep_row(job: Tuple[LoopParams, Optional[float], Optional[float]]) -> Dict[str, Any]:
    params, tolerance, rel_tolerance = job
    f = params.filter
    nan = float("nan")
    row: Dict[str, Any] = {
        "pd": params.pd.value,
        "k_vco": params.k_vco,
        "k_pd": params.k_pd,
        "tau1": f.tau1,
        "tau2": f.tau2,
        "omega_l_formula": nan,
        "omega_l_exact": nan,
        "omega_l_numeric": nan,
        "ratio": nan,
        "ratio_exact": nan,
        "regime": "",
        "linear_regime": linearized_poles(params).regime,
    }
    try:
        formula = closed_form(params)
        if formula is not None:
            row["omega_l_formula"] = formula.omega_l
            row["regime"] = formula.regime.value if formula.regime else ""
    except LockinSingularityError as e:
        logger.warning(f"Closed form skipped at K_vco={params.k_vco}: {e}")
        row["regime"] = LockinRegime.NODE.value
    except LockinError as e:
        logger.warning(f"Closed form skipped at K_vco={params.k_vco}: {e}")
    try:
        exact = exact_boundary(params)
        if exact is not None:
            row["omega_l_exact"] = exact
    except LockinError as e:
        logger.warning(f"Exact boundary skipped at K_vco={params.k_vco}: {e}")

    numeric = lockin_numeric(params, tolerance=tolerance, rel_tolerance=rel_tolerance)
    row["omega_l_numeric"] = numeric
    for column, reference in (("ratio", "omega_l_formula"), ("ratio_exact", "omega_l_exact")):
        if math.isfinite(row[reference]) and row[reference] > 0:
            row[column] = numeric / row[reference]
    return row


def lockin_sweep(grid: Sequence[LoopParams], tolerance: Optional[float] = None,
                 max_workers: Optional[int] = None, rel_tolerance: Optional[float] = None) -> pd.DataFrame:
    """
    Published, exact and numeric lock-in over a parameter grid.

    `ratio` compares the simulation with the published form, `ratio_exact` with
    the exact piecewise-linear boundary. Rows come back in grid order whether or
    not they are computed in parallel.
    """
    if not grid:
        raise LockinError("Lock-in sweep grid is empty")
    workers = settings.max_workers if max_workers is None else max_workers
    jobs = [(params, tolerance, rel_tolerance) for params in grid]

    logger.info(f"Lock-in sweep over {len(jobs)} parameter sets with {workers} worker(s)")
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as executor:
            rows = list(executor.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(job) for job in jobs]

    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def ratio_spread(ratios: Sequence[float]) -> float:
    """Relative spread max/min - 1 of numeric-to-formula ratios"""
    values = np.asarray([r for r in ratios if np.isfinite(r)], dtype=float)
    if values.size == 0:
        raise LockinError("No finite ratios to compare")
    return float(values.max() / values.min() - 1.0)


def loop_for(pd_kind: PdKind, k_vco: float, tau1: float, tau2: float,
             k_pd: Optional[float] = None) -> LoopParams:
    """Convenience constructor used by sweeps and the CLI"""
    return LoopParams(pd=pd_kind, k_vco=k_vco, filter=PiFilter(tau1=tau1, tau2=tau2), k_pd=k_pd)
