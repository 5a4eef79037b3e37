"""
Command-Line Runner for the Costas 4QAM Lab
Subcommands pd-curve, simulate, lockin and ser over the lab's analysis and
simulation packages, with stable exit codes:
0 ok/locked, 2 cycle slip, 3 numeric abort, 4 configuration error.

Version: 1.0.0
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

# Configure multiprocessing for Windows
if sys.platform.startswith('win'):
    import multiprocessing
    multiprocessing.set_start_method('spawn', force=True)

from loguru import logger
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from src.core.config import LOOP_VARIANTS, PdKind, settings
from src.data.exporters import ExportError
from src.detectors.characteristics import CharacteristicError
from src.dynamics.lockin import LockinBracketError, LockinError
from src.dynamics.phase_model import LoopIntegrationError, LoopParameterError
from src.experiments.config import ExperimentConfig, ExperimentConfigError, load_experiment
from src.experiments.runner import (
    EXIT_CONFIG,
    EXIT_NUMERIC,
    CommandResult,
    cmd_lockin,
    cmd_pd_curve,
    cmd_ser,
    cmd_simulate,
    default_output,
)
from src.modem.waveform import ModemError
from src.visualization.chart_generator import ChartError

console = Console()


def configure_logging():
    """Console sink plus an optional rotating file sink"""
    logger.remove()
    logger.add(
        sys.stderr,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>",
        level=settings.log_level.value
    )
    if settings.log_file:
        logger.add(
            settings.log_file,
            rotation="1 day",
            retention="30 days",
            format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {name}:{function}:{line} - {message}",
            level=settings.log_level.value
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description=f"{settings.app_name} {settings.app_version}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("pd-curve", "Sample a phase detector characteristic over one period"),
        ("simulate", "Frequency step on a locked loop (phase model or signal level)"),
        ("lockin", "Closed-form and simulated lock-in ranges over a parameter grid"),
        ("ser", "Symbol error rate sweep of the three Costas loops"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--variant", choices=[k.value for k in PdKind], help="Phase detector / loop variant")
        sub.add_argument("--config", type=Path, help="Experiment file (section.key = value)")
        sub.add_argument("--out", type=Path, help="Output CSV path")
        sub.add_argument("--seed", type=int, help="Random seed")
        sub.add_argument("--samples", type=int, help="PD curve samples / SER symbols per point")
        sub.add_argument("--plot", action="store_true", help="Render a figure next to the CSV")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_experiment(args.config) if args.config else ExperimentConfig()
    if config.command is not None and config.command != args.command:
        raise ExperimentConfigError(
            f"Experiment file is for '{config.command}', not '{args.command}'", key="command"
        )
    samples_key = "curve.samples" if args.command == "pd-curve" else "sweep.symbols"
    overrides = {
        "loop.variant": args.variant,
        "seed": args.seed,
        samples_key: args.samples if args.command in ("pd-curve", "ser") else None,
        "output.path": str(args.out) if args.out else None,
        "output.plot": True if args.plot else None,
    }
    if args.command == "ser" and args.variant:
        overrides["sweep.variants"] = [args.variant]
    return config.with_overrides(**overrides)


def dispatch(command: str, config: ExperimentConfig) -> CommandResult:
    if command == "pd-curve":
        out = config.output.path or default_output(f"pd_curve_{config.loop.variant.value}.csv")
        return cmd_pd_curve(config.loop.variant, config.curve.samples, out,
                            plot=config.output.plot, plot_format=config.output.plot_format)
    if command == "simulate":
        return cmd_simulate(config)
    if command == "lockin":
        return cmd_lockin(config)
    if command == "ser":
        return cmd_ser(config)
    raise ExperimentConfigError(f"Unknown command {command}", key="command")


def print_summary(command: str, result: CommandResult):
    """Rich table of the run's summary rows"""
    frame = result.summary
    if frame is None or frame.empty:
        return
    columns = {
        "pd-curve": ["variant", "reference", "max_deviation"],
        "lockin": ["pd", "k_vco", "tau1", "tau2", "omega_l_formula", "omega_l_exact",
                   "omega_l_numeric", "ratio", "ratio_exact", "regime"],
        "ser": ["variant", "snr_db", "errors", "ser", "ci_low", "ci_high", "locked"],
    }.get(command, list(frame.columns))

    table = Table(title=f"{command} results")
    for column in columns:
        table.add_column(column, justify="right")
    for _, row in frame[columns].iterrows():
        table.add_row(*[f"{v:.6g}" if isinstance(v, float) else str(v) for v in row])
    console.print(table)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    configure_logging()
    args = build_parser().parse_args(argv)

    try:
        config = load_config(args)
        if args.command == "simulate" and config.loop.variant not in LOOP_VARIANTS and config.step.model == "signal":
            raise ExperimentConfigError("Signal-level simulation needs a Costas loop variant", key="loop.variant")
        result = dispatch(args.command, config)
    except (ExperimentConfigError, ValidationError, ExportError, ChartError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (LoopIntegrationError, LockinBracketError) as e:
        logger.error(f"Numerical abort: {e}")
        return EXIT_NUMERIC
    except (LockinError, LoopParameterError, CharacteristicError, ModemError) as e:
        logger.error(f"Invalid parameters: {e}")
        return EXIT_CONFIG

    for path in result.outputs:
        console.print(f"wrote {path}")
    if result.message:
        console.print(result.message)
    print_summary(args.command, result)
    return result.exit_code


if __name__ == "__main__":
    # Ensure proper multiprocessing on Windows
    if sys.platform.startswith('win'):
        multiprocessing.freeze_support()

    sys.exit(main())
