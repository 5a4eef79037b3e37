#!/usr/bin/env python3
"""
Experiment Configuration
Strict key-value experiment files for the command-line runner.

    # lines starting with # are comments
    command = simulate
    loop.variant = folding
    loop.k_vco = 100
    step.offset = 12.5
    sweep.k_vco = 20, 100, 1000

Keys are `section.key` (a few are top level); comma-separated values become lists.
Unknown keys and unparsable lines are rejected with the key and line number.

Version: 1.0.0
"""

import io
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from dotenv import dotenv_values
from dotenv.parser import parse_stream
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ..core.config import PdKind, settings
from ..modem.waveform import ModemConfig

COMMANDS = ("pd-curve", "simulate", "lockin", "ser")


class ExperimentConfigError(Exception):
    """Custom exception for experiment file errors"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        where = []
        if key:
            where.append(f"key '{key}'")
        if line:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LoopSection(_Section):
    variant: PdKind = PdKind.CLASSICAL
    k_vco: float = Field(default=100.0, gt=0)
    tau1: float = Field(default=0.05, gt=0)
    tau2: float = Field(default=0.02, ge=0)
    k_pd: Optional[float] = Field(default=None, gt=0)


class StepSection(_Section):
    """Reference frequency step applied to a loop locked at zero offset"""
    offset: float = 0.0
    initial_phase: Optional[float] = None
    dt: Optional[float] = Field(default=None, gt=0)
    t_end: Optional[float] = Field(default=None, gt=0)
    model: Literal["phase", "signal"] = "phase"


class CurveSection(_Section):
    samples: int = Field(default=1000, ge=2)


class SweepSection(_Section):
    k_vco: List[float] = Field(default_factory=lambda: [20.0, 100.0, 1000.0])
    tau1: List[float] = Field(default_factory=lambda: [0.05])
    tau2: List[float] = Field(default_factory=lambda: [0.02])
    k_pd: List[float] = Field(default_factory=list)
    tolerance: Optional[float] = Field(default=None, gt=0)
    rel_tolerance: Optional[float] = Field(default=None, gt=0, lt=1)
    variants: List[PdKind] = Field(default_factory=lambda: [PdKind.CLASSICAL, PdKind.FOURTH_POWER, PdKind.FOLDING])
    snr_db: List[float] = Field(default_factory=lambda: [0.0, 3.0, 6.0, 9.0])
    symbols: int = Field(default=10000, ge=1000)
    warmup: Optional[int] = Field(default=None, ge=1)
    workers: Optional[int] = Field(default=None, ge=1)

    @field_validator("k_vco", "tau1", "tau2", "k_pd", "variants", "snr_db", mode="before")
    @classmethod
    def listify(cls, v):
        """A single value is a one-point grid"""
        if isinstance(v, (str, int, float)):
            return [v]
        return v


class OutputSection(_Section):
    path: Optional[str] = None
    plot: bool = False
    plot_format: str = ".html"

    @field_validator("plot_format")
    @classmethod
    def validate_plot_format(cls, v):
        v = v if v.startswith(".") else f".{v}"
        if v not in settings.plot_formats:
            raise ValueError(f"plot_format must be one of {settings.plot_formats}")
        return v


class ExperimentConfig(_Section):
    """One experiment: which command to run and every parameter it needs"""
    command: Optional[Literal["pd-curve", "simulate", "lockin", "ser"]] = None
    seed: int = Field(default_factory=lambda: settings.default_seed, ge=0)
    loop: LoopSection = Field(default_factory=LoopSection)
    step: StepSection = Field(default_factory=StepSection)
    curve: CurveSection = Field(default_factory=CurveSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    modem: Optional[ModemConfig] = None
    output: OutputSection = Field(default_factory=OutputSection)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Apply CLI flag values (None means not given)"""
        data = self.model_dump()
        for dotted, value in overrides.items():
            if value is None:
                continue
            section, _, key = dotted.rpartition(".")
            target = data[section] if section else data
            if target is None:
                raise ExperimentConfigError("Override targets an absent section", key=dotted)
            target[key] = value
        try:
            return ExperimentConfig.model_validate(data)
        except ValidationError as e:
            first = e.errors()[0]
            raise ExperimentConfigError(first["msg"], key=".".join(str(p) for p in first["loc"])) from e


SECTIONS = {
    "loop": LoopSection,
    "step": StepSection,
    "curve": CurveSection,
    "sweep": SweepSection,
    "modem": ModemConfig,
    "output": OutputSection,
}


def _nest(flat: Dict[str, str]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, raw in flat.items():
        value: Any = raw.strip()
        if value == "":
            continue
        if "," in value:
            value = [part.strip() for part in value.split(",") if part.strip()]
        section, _, name = key.rpartition(".")
        if section:
            nested.setdefault(section, {})
            if not isinstance(nested[section], dict):
                raise ExperimentConfigError("Key is both a value and a section", key=key)
            nested[section][name] = value
        else:
            nested[name] = value
    return nested


def _known_key(key: str) -> bool:
    section, _, name = key.rpartition(".")
    if not section:
        return name in ExperimentConfig.model_fields and name not in SECTIONS
    if section not in SECTIONS:
        return False
    return name in SECTIONS[section].model_fields


def _binding_line(binding) -> int:
    # a binding's text starts with any blank lines that precede it
    original = binding.original.string
    leading = original[:len(original) - len(original.lstrip())]
    return binding.original.line + leading.count("\n")


def parse_experiment_text(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse and validate experiment file contents"""
    lines: Dict[str, int] = {}
    for binding in parse_stream(io.StringIO(text)):
        line = _binding_line(binding)
        if binding.error:
            raise ExperimentConfigError(f"Cannot parse {source}: {binding.original.string.strip()!r}",
                                        line=line)
        if binding.key is None:
            continue
        if binding.key in lines:
            raise ExperimentConfigError(f"Duplicate key in {source}", key=binding.key, line=line)
        if binding.key.count(".") > 1:
            raise ExperimentConfigError(f"Keys nest one level deep in {source}", key=binding.key,
                                        line=line)
        if binding.value is None:
            raise ExperimentConfigError(f"Missing '=' in {source}", key=binding.key, line=line)
        if not _known_key(binding.key):
            raise ExperimentConfigError(f"Unknown key in {source}", key=binding.key, line=line)
        lines[binding.key] = line

    flat = {k: (v if v is not None else "") for k, v in dotenv_values(stream=io.StringIO(text), interpolate=False).items()}
    try:
        config = ExperimentConfig.model_validate(_nest(flat))
    except ValidationError as e:
        first = e.errors()[0]
        loc = [str(p) for p in first["loc"]]
        # list items report their index; the file key is the first two parts
        key = ".".join(loc[:2]) if len(loc) > 1 and loc[0] in ExperimentConfig.model_fields else ".".join(loc[:1])
        message = "Unknown key" if first["type"] == "extra_forbidden" else first["msg"]
        raise ExperimentConfigError(f"{message} in {source}", key=key, line=lines.get(key)) from e

    logger.debug(f"Parsed experiment {source}: command={config.command}, {len(flat)} keys")
    return config


def load_experiment(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ExperimentConfigError(f"Cannot read experiment file {path}: {e}") from e
    return parse_experiment_text(text, source=str(path))
