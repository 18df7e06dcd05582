"""
Runtime settings for the f-sketch library and CLI.

Values come from the process environment (and a local .env file, loaded
once at import). Every variable is prefixed with FSKETCH_.

Environment Variables:
    FSKETCH_SEED                      Default seed when a command gets no --seed (0)
    FSKETCH_FIXED_POINT_SCALE         Fixed-point scale for real-valued deltas (2^20)
    FSKETCH_KSET_CAPACITY_CONSTANT    C in K = C * eps^-2 * ln^2(n/delta) (8)
    FSKETCH_KSET_BUCKET_FACTOR        Buckets per K-Set row, as a multiple of K (1.5)
    FSKETCH_GAMMA_CONSTANT            Leading constant of the LogSum oversampling gamma (1.0)
    FSKETCH_GAMMA_EXPONENT            Exponent of ln(n/delta) in gamma (1.0)
    FSKETCH_POLYSUM_COPIES_CONSTANT   C in copies_k = ceil(C / eps^2) (16)
    FSKETCH_POLYSUM_WIDTH_CONSTANT    C' in the count-sketch width (4.0)
    FSKETCH_ORACLE_MAX_N              Largest dimension the dense oracle accepts (3000)
    FSKETCH_WORD_BYTES                Bytes per stored word in space accounting (8)
    FSKETCH_RECORD_TIMING             Write measured wall_ms into CSV rows (true)
    FSKETCH_LOG_LEVEL                 Default log level for the CLI (INFO)
"""

from __future__ import annotations

from typing import Optional

from dotenv import load_dotenv
from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.errors import ConfigError

# Load environment variables from .env
load_dotenv()


class Settings(BaseSettings):
    """Process-wide defaults. Per-run parameters live in the pipeline config models."""

    model_config = SettingsConfigDict(env_prefix="FSKETCH_", extra="ignore")

    seed: int = Field(default=0, ge=0)
    fixed_point_scale: int = Field(default=2 ** 20, gt=0)
    kset_capacity_constant: float = Field(default=8.0, gt=0)
    kset_bucket_factor: float = Field(default=1.5, ge=1.0)
    gamma_constant: float = Field(default=1.0, gt=0)
    gamma_exponent: float = Field(default=1.0, ge=0)
    polysum_copies_constant: float = Field(default=16.0, gt=0)
    polysum_width_constant: float = Field(default=4.0, gt=0)
    oracle_max_n: int = Field(default=3000, gt=0)
    word_bytes: int = Field(default=8, gt=0)
    record_timing: bool = True
    log_level: str = "INFO"


# =============================================================================
# Module-level singleton
# =============================================================================

_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get or create the settings singleton."""
    global _settings
    if _settings is None:
        try:
            _settings = Settings()
        except ValidationError as e:
            raise ConfigError(f"Invalid FSKETCH_ environment: {e}") from e
    return _settings


def reset_settings() -> None:
    """Drop the cached settings so the next get_settings() re-reads the environment."""
    global _settings
    _settings = None
