"""
Shared fixtures for the Costas 4QAM Lab test suite
"""

import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.config import PdKind, settings
from src.modem.waveform import ModemConfig


@pytest.fixture
def averaging_modem() -> ModemConfig:
    """Carrier 100x the symbol rate, 20 samples per carrier cycle"""
    return ModemConfig(
        carrier_freq=2.0 * math.pi * 20000.0,
        sample_rate=400000.0,
        symbol_rate=200.0,
        seed=7,
    )


@pytest.fixture
def fast_modem() -> ModemConfig:
    """Short-symbol configuration for SER runs"""
    return ModemConfig(
        carrier_freq=2.0 * math.pi * 8000.0,
        sample_rate=160000.0,
        symbol_rate=1000.0,
        seed=11,
    )


@pytest.fixture
def classical_lockin_sets():
    """(K_vco, tau1, tau2) sets spanning a from 0.6 to 8 for the classical cross-check"""
    return [(20.0, 0.05, 0.02), (100.0, 0.05, 0.02), (500.0, 0.05, 0.02), (2000.0, 0.05, 0.02),
            (100.0, 0.1, 0.01), (1000.0, 0.2, 0.01)]


@pytest.fixture
def folding_lockin_sets():
    """(K_vco, tau1, tau2) sets from deep focus to beyond the published form's singular limit"""
    return [(20.0, 0.05, 0.02), (100.0, 0.05, 0.02), (500.0, 0.05, 0.02), (2000.0, 0.05, 0.02)]


@pytest.fixture
def pull_in_parameter_sets():
    return [(100.0, 0.05, 0.02), (50.0, 0.1, 0.03), (200.0, 0.05, 0.01), (30.0, 0.05, 0.03), (60.0, 0.08, 0.025)]


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    """Route default outputs into a temporary directory"""
    monkeypatch.setattr(settings, "output_directory", str(tmp_path))
    return tmp_path


@pytest.fixture(params=[PdKind.CLASSICAL, PdKind.FOURTH_POWER, PdKind.FOLDING], ids=lambda k: k.value)
def loop_variant(request) -> PdKind:
    return request.param
