"""
Configuration Management for the Costas 4QAM Lab
Centralized settings with environment variable support, validation,
and the shared enumerations used across the detectors, dynamics and modem packages.

Version: 1.0.0
"""

import json
from enum import Enum
from typing import List, Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings


class Environment(str, Enum):
    """Application environment types"""
    DEVELOPMENT = "development"
    RESEARCH = "research"
    PRODUCTION = "production"


class LogLevel(str, Enum):
    """Logging levels"""
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


class PdKind(str, Enum):
    """Phase detector characteristics known to the lab"""
    CLASSICAL = "classical"
    FOURTH_POWER = "fourth_power"
    FOLDING = "folding"
    SINUSOIDAL_REF = "sinusoidal_ref"
    SAWTOOTH_REF = "sawtooth_ref"
    TRIANGULAR_REF = "triangular_ref"

    @property
    def is_loop_variant(self) -> bool:
        """True for the three detectors that exist as Costas circuits"""
        return self in LOOP_VARIANTS


LOOP_VARIANTS = (PdKind.CLASSICAL, PdKind.FOURTH_POWER, PdKind.FOLDING)
REFERENCE_SHAPES = (PdKind.SINUSOIDAL_REF, PdKind.SAWTOOTH_REF, PdKind.TRIANGULAR_REF)


class Settings(BaseSettings):
    """
    Lab settings with environment variable support
    and comprehensive validation
    """

    # Application Configuration
    app_name: str = Field(default="Costas 4QAM Lab", env="APP_NAME")
    app_version: str = Field(default="1.0.0", env="APP_VERSION")
    environment: Environment = Field(default=Environment.DEVELOPMENT, env="ENVIRONMENT")
    log_level: LogLevel = Field(default=LogLevel.INFO, env="LOG_LEVEL")
    log_file: Optional[str] = Field(default=None, env="LOG_FILE")

    # Output Configuration
    output_directory: str = Field(default="./results", env="OUTPUT_DIRECTORY")
    plot_formats: List[str] = Field(default=[".html", ".png", ".svg", ".pdf"], env="PLOT_FORMATS")

    # Execution Configuration
    max_workers: int = Field(default=4, env="MAX_WORKERS")
    use_numba: bool = Field(default=True, env="USE_NUMBA")
    default_seed: int = Field(default=20180901, env="DEFAULT_SEED")

    # Numerical Configuration
    lockin_tolerance: Optional[float] = Field(default=None, env="LOCKIN_TOLERANCE")  # rad/s, overrides the relative one
    lockin_rel_tolerance: float = Field(default=1e-3, env="LOCKIN_REL_TOLERANCE")  # of the bracket upper end
    lock_phase_tolerance: float = Field(default=1e-3, env="LOCK_PHASE_TOLERANCE")  # rad
    lock_rate_tolerance: float = Field(default=1e-3, env="LOCK_RATE_TOLERANCE")  # times K_vco
    warmup_symbols: int = Field(default=100, env="WARMUP_SYMBOLS")

    @field_validator("plot_formats", mode="before")
    @classmethod
    def parse_plot_formats(cls, v):
        """Parse plot formats from string or list"""
        if isinstance(v, str):
            try:
                return json.loads(v)
            except json.JSONDecodeError:
                return [fmt.strip() for fmt in v.split(",")]
        return v

    @field_validator("max_workers")
    @classmethod
    def validate_max_workers(cls, v):
        if v < 1:
            raise ValueError("max_workers must be at least 1")
        return v

    @field_validator("warmup_symbols")
    @classmethod
    def validate_warmup_symbols(cls, v):
        """Warm-up must be long enough to estimate the rotation ambiguity"""
        if v < 100:
            raise ValueError("warmup_symbols must be at least 100")
        return v

    @field_validator("lockin_tolerance", "lock_phase_tolerance", "lock_rate_tolerance")
    @classmethod
    def validate_positive(cls, v):
        if v is not None and v <= 0:
            raise ValueError("tolerances must be positive")
        return v

    @field_validator("lockin_rel_tolerance")
    @classmethod
    def validate_rel_tolerance(cls, v):
        if not 0 < v < 1:
            raise ValueError("lockin_rel_tolerance must lie in (0, 1)")
        return v

    model_config = {
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "case_sensitive": False,
        "extra": "ignore",
    }


# Global settings instance
settings = Settings()
