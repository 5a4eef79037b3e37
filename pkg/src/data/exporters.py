"""
Result Exporters
CSV writers for PD curves, trajectories, waveform dumps, lock-in sweeps and SER sweeps.

Floats are written with Python's shortest round-trip repr, so re-reading a file
with pandas gives back the exact values.

Version: 1.0.0
"""

from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd
from loguru import logger

PathLike = Union[str, Path]

PD_CURVE_COLUMNS = ["theta_e", "value", "normalized_value"]
DEVIATION_COLUMNS = ["variant", "reference", "max_deviation", "grid_points"]
TRAJECTORY_COLUMNS = ["t", "theta_e", "x", "g"]
WAVEFORM_COLUMNS = ["t", "input", "I", "Q", "g", "vco_phase"]
SER_COLUMNS = ["variant", "snr_db", "symbols", "errors", "ser", "ci_low", "ci_high"]


class ExportError(Exception):
    """Custom exception for unwritable result paths"""
    pass


def _prepare_path(path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ExportError(f"Cannot create output directory {path.parent}: {e}") from e
    if path.exists() and path.is_dir():
        raise ExportError(f"Output path {path} is a directory")
    return path


def write_csv(frame: pd.DataFrame, path: PathLike, columns: Optional[List[str]] = None) -> Path:
    """Write a frame with a header row and a fixed column order"""
    path = _prepare_path(path)
    if columns is not None:
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise ExportError(f"Frame lacks columns {missing} for {path.name}")
        extra = [c for c in frame.columns if c not in columns]
        frame = frame[columns + extra]
    try:
        # float_format=None keeps repr formatting
        frame.to_csv(path, index=False, float_format=None, lineterminator="\n")
    except OSError as e:
        raise ExportError(f"Cannot write {path}: {e}") from e
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: PathLike) -> pd.DataFrame:
    # round_trip parsing matches the repr written above
    return pd.read_csv(path, float_precision="round_trip")


def companion_path(path: PathLike, suffix: str, extension: Optional[str] = None) -> Path:
    """Sibling file name: out.csv -> out_<suffix>.csv"""
    path = Path(path)
    ext = path.suffix if extension is None else extension
    return path.with_name(f"{path.stem}_{suffix}{ext}")


def export_pd_curve(curve_columns: Dict[str, List[float]], path: PathLike) -> Path:
    return write_csv(pd.DataFrame(curve_columns), path, PD_CURVE_COLUMNS)


def export_deviation(rows: List[Dict[str, object]], path: PathLike) -> Path:
    return write_csv(pd.DataFrame(rows, columns=DEVIATION_COLUMNS), path, DEVIATION_COLUMNS)


def export_trajectory(frame: pd.DataFrame, path: PathLike) -> Path:
    return write_csv(frame, path, TRAJECTORY_COLUMNS)


def export_waveform(frame: pd.DataFrame, path: PathLike) -> Path:
    return write_csv(frame, path, WAVEFORM_COLUMNS)


def export_lockin(frame: pd.DataFrame, path: PathLike) -> Path:
    return write_csv(frame, path)


def export_ser(frame: pd.DataFrame, path: PathLike) -> Path:
    return write_csv(frame, path, SER_COLUMNS)
