"""
Experiment Runner
The four lab commands: PD curves, loop simulations, lock-in sweeps and SER sweeps.
Each writes CSV results (and optionally a figure) and returns a CommandResult whose
exit code is part of the command-line contract.

Version: 1.0.0
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import pandas as pd
from loguru import logger

from ..core.config import PdKind, settings
from ..data.exporters import (
    companion_path,
    export_deviation,
    export_lockin,
    export_pd_curve,
    export_ser,
    export_trajectory,
    export_waveform,
)
from ..detectors.characteristics import find_stable_zero, max_deviation, reference_for, sample_curve
from ..dynamics.lockin import loop_for, lockin_sweep
from ..dynamics.phase_model import (
    LoopParams,
    PhaseState,
    acquisition_horizon,
    integrate,
    suggest_timing,
)
from ..modem.ser import LOCK_WINDOW, chain_loop, locked_points, run_chain, ser_frame, sweep_ser
from ..modem.waveform import ModemConfig
from ..visualization.chart_generator import chart_generator
from .config import ExperimentConfig, ExperimentConfigError

EXIT_OK = 0
EXIT_SLIP = 2
EXIT_NUMERIC = 3
EXIT_CONFIG = 4

DEVIATION_GRID = 100_000

DEFAULT_SER_MODEM = dict(
    carrier_freq=2.0 * math.pi * 8000.0,
    sample_rate=160000.0,
    symbol_rate=1000.0,
)


@dataclass
class CommandResult:
    """Outcome of one command"""
    exit_code: int
    outputs: List[Path] = field(default_factory=list)
    summary: Optional[pd.DataFrame] = None
    message: str = ""


def default_output(name: str) -> Path:
    return Path(settings.output_directory) / name


def _plot_path(out_path: Path, plot_format: str) -> Path:
    return companion_path(out_path, "plot", plot_format)


def build_loop(config: ExperimentConfig) -> LoopParams:
    loop = config.loop
    return loop_for(loop.variant, loop.k_vco, loop.tau1, loop.tau2, loop.k_pd)


def cmd_pd_curve(variant: PdKind, n_samples: int, out_path: Union[str, Path],
                 plot: bool = False, plot_format: str = ".html") -> CommandResult:
    """One period of K_pd * phi, plus a deviation report against the matching reference shape"""
    variant = PdKind(variant)
    out_path = Path(out_path)
    logger.info(f"PD curve: {variant.value}, {n_samples} samples -> {out_path}")

    curve = sample_curve(variant, n_samples)
    outputs = [export_pd_curve(curve.to_dict(), out_path)]

    reference = reference_for(variant)
    summary = None
    if reference is not None:
        deviation = max_deviation(variant, reference, DEVIATION_GRID)
        rows = [{
            "variant": variant.value,
            "reference": reference.value,
            "max_deviation": deviation,
            "grid_points": DEVIATION_GRID,
        }]
        outputs.append(export_deviation(rows, companion_path(out_path, "deviation")))
        summary = pd.DataFrame(rows)

    if plot:
        reference_curve = sample_curve(reference, n_samples) if reference is not None else None
        fig = chart_generator.pd_curve_chart(curve, reference_curve)
        outputs.append(chart_generator.save(fig, _plot_path(out_path, plot_format)))

    return CommandResult(exit_code=EXIT_OK, outputs=outputs, summary=summary)


def _modem_for(config: ExperimentConfig, default: Optional[dict] = None) -> ModemConfig:
    if config.modem is not None:
        return config.modem.model_copy(update={"seed": config.seed})
    if default is None:
        raise ExperimentConfigError("The signal model needs a modem section", key="modem")
    return ModemConfig(seed=config.seed, **default)


def _simulate_phase(config: ExperimentConfig, out_path: Path) -> CommandResult:
    params = build_loop(config).with_offset(config.step.offset)
    timing = suggest_timing(params)
    dt = config.step.dt or timing.dt
    t_end = config.step.t_end or acquisition_horizon(params, config.step.offset)
    theta0 = find_stable_zero(params.pd) if config.step.initial_phase is None else config.step.initial_phase

    logger.info(f"Phase model step {config.step.offset} rad/s on {params.pd.value}: dt={dt:.3g}, t_end={t_end:.4g}")
    trajectory = integrate(params, PhaseState(theta_e=theta0, x=0.0), dt, t_end)
    outputs = [export_trajectory(trajectory.to_frame(), out_path)]

    if config.output.plot:
        fig = chart_generator.trajectory_chart(trajectory.to_frame(), trajectory.lock_point)
        outputs.append(chart_generator.save(fig, _plot_path(out_path, config.output.plot_format)))

    ok = trajectory.locked and not trajectory.slipped
    message = "locked" if ok else ("cycle slip" if trajectory.slipped else "not locked at end of run")
    return CommandResult(exit_code=EXIT_OK if ok else EXIT_SLIP, outputs=outputs, message=message)


def _simulate_signal(config: ExperimentConfig, out_path: Path) -> CommandResult:
    modem = _modem_for(config)
    loop = config.loop
    params = chain_loop(loop.variant, modem, loop.k_vco, loop.tau1, loop.tau2,
                        offset=config.step.offset, k_pd=loop.k_pd)
    t_end = config.step.t_end or acquisition_horizon(params, config.step.offset)
    n_symbols = max(1, math.ceil(t_end * modem.symbol_rate))

    logger.info(f"Signal model step {config.step.offset} rad/s on {params.pd.value}: {n_symbols} symbols")
    record = run_chain(params, modem, n_symbols, initial_phase_error=config.step.initial_phase,
                       initial_control=0.0)
    frame = record.to_frame()
    outputs = [export_waveform(frame, out_path)]

    if config.output.plot:
        fig = chart_generator.waveform_chart(frame)
        outputs.append(chart_generator.save(fig, _plot_path(out_path, config.output.plot_format)))

    last = record.waveform.size - 1
    slipped = record.lock_index(0) != record.lock_index(last)
    locked = record.lock_offset(last) < LOCK_WINDOW
    ok = locked and not slipped
    message = "locked" if ok else ("cycle slip" if slipped else "not locked at end of run")
    return CommandResult(exit_code=EXIT_OK if ok else EXIT_SLIP, outputs=outputs, message=message)


def cmd_simulate(config: ExperimentConfig, out_path: Optional[Union[str, Path]] = None) -> CommandResult:
    """Frequency step on a loop locked at zero offset; exit 0 when it relocks without slipping"""
    out_path = Path(out_path or config.output.path or default_output(f"simulate_{config.loop.variant.value}.csv"))
    if config.step.model == "signal":
        return _simulate_signal(config, out_path)
    return _simulate_phase(config, out_path)


def cmd_lockin(config: ExperimentConfig, out_path: Optional[Union[str, Path]] = None) -> CommandResult:
    """Closed-form and numeric lock-in over the sweep grid"""
    out_path = Path(out_path or config.output.path or default_output(f"lockin_{config.loop.variant.value}.csv"))
    sweep = config.sweep
    k_pds = sweep.k_pd or [config.loop.k_pd]
    grid = [
        loop_for(config.loop.variant, k_vco, tau1, tau2, k_pd)
        for tau1 in sweep.tau1 for tau2 in sweep.tau2 for k_pd in k_pds for k_vco in sweep.k_vco
    ]
    frame = lockin_sweep(grid, tolerance=sweep.tolerance, max_workers=sweep.workers,
                         rel_tolerance=sweep.rel_tolerance)
    outputs = [export_lockin(frame, out_path)]

    if config.output.plot:
        fig = chart_generator.lockin_chart(frame)
        outputs.append(chart_generator.save(fig, _plot_path(out_path, config.output.plot_format)))
    return CommandResult(exit_code=EXIT_OK, outputs=outputs, summary=frame)


def cmd_ser(config: ExperimentConfig, out_path: Optional[Union[str, Path]] = None) -> CommandResult:
    """SER sweep of every requested variant over the SNR grid"""
    out_path = Path(out_path or config.output.path or default_output("ser.csv"))
    modem = _modem_for(config, DEFAULT_SER_MODEM)
    loop = config.loop
    template = chain_loop(loop.variant, modem, loop.k_vco, loop.tau1, loop.tau2, offset=config.step.offset)
    sweep = config.sweep

    # step.offset and step.initial_phase set the acquisition each SER run starts from
    points = sweep_ser(sweep.variants, modem, sweep.snr_db, sweep.symbols, loop=template,
                       warmup=sweep.warmup, max_workers=sweep.workers,
                       initial_phase_error=config.step.initial_phase)
    frame = ser_frame(points)
    outputs = [export_ser(frame, out_path)]

    if config.output.plot:
        fig = chart_generator.ser_chart(ser_frame(locked_points(points)))
        outputs.append(chart_generator.save(fig, _plot_path(out_path, config.output.plot_format)))

    unlocked = int((~frame["locked"]).sum())
    message = f"{unlocked} point(s) without lock" if unlocked else ""
    return CommandResult(exit_code=EXIT_OK, outputs=outputs, summary=frame, message=message)
