"""
Tests for CSV result exporters
"""

import pandas as pd
import pytest

from src.data.exporters import (
    ExportError,
    companion_path,
    export_deviation,
    export_trajectory,
    read_csv,
    write_csv,
)


def test_float_round_trip(tmp_path):
    frame = pd.DataFrame({"a": [0.1, 1.0 / 3.0, 1e-300, -2.5e17], "b": [1, 2, 3, 4]})
    path = write_csv(frame, tmp_path / "nested" / "values.csv")
    again = read_csv(path)
    assert again["a"].tolist() == frame["a"].tolist()
    assert again["b"].tolist() == frame["b"].tolist()


def test_fixed_column_order(tmp_path):
    frame = pd.DataFrame({"g": [0.0], "extra": [1], "x": [0.5], "theta_e": [0.1], "t": [0.0]})
    path = export_trajectory(frame, tmp_path / "trajectory.csv")
    assert path.read_text().splitlines()[0] == "t,theta_e,x,g,extra"


def test_missing_columns(tmp_path):
    with pytest.raises(ExportError):
        export_trajectory(pd.DataFrame({"t": [0.0]}), tmp_path / "trajectory.csv")


def test_directory_target(tmp_path):
    with pytest.raises(ExportError):
        write_csv(pd.DataFrame({"a": [1]}), tmp_path)


def test_deviation_rows(tmp_path):
    path = export_deviation([{"variant": "folding", "reference": "triangular_ref",
                              "max_deviation": 0.02, "grid_points": 100000}], tmp_path / "dev.csv")
    assert read_csv(path).iloc[0]["reference"] == "triangular_ref"


def test_companion_path(tmp_path):
    assert companion_path(tmp_path / "out.csv", "deviation") == tmp_path / "out_deviation.csv"
    assert companion_path(tmp_path / "out.csv", "plot", ".html") == tmp_path / "out_plot.html"
