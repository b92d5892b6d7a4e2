import contextlib
import logging
import os
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import MalformedInputError

logger = logging.getLogger(__name__)


def find_env_file() -> str:
    """Find the .env file in potential locations."""
    # An explicit location wins even when the file is absent
    env_file = os.getenv("ENV_FILE")
    if env_file:
        return env_file

    possible_locations = [
        # Repository root (for local development)
        os.path.join(Path(__file__).parent.parent.parent.parent.parent, ".env"),
        # Current directory
        ".env",
    ]

    for location in possible_locations:
        if os.path.exists(location):
            return location

    # If we get here, return the default location
    return possible_locations[0]


class OutputFormat(str, Enum):
    """Output formats understood by the command line."""

    JSON = "json"
    CSV = "csv"
    HUMAN = "human"


class Tolerances(BaseModel):
    """Numerical tolerances used by invariant checks."""

    mass: float = Field(
        default=1e-9, gt=0, description="Absolute tolerance on total mass"
    )
    atom: float = Field(
        default=1e-12, gt=0, description="Absolute tolerance per atom weight"
    )
    graph: float = Field(
        default=1e-9,
        gt=0,
        description="Largest omega(0) still counted as a graph measure",
    )


DEFAULT_TOLERANCES = Tolerances()

_ACTIVE_TOLERANCES = DEFAULT_TOLERANCES


def active_tolerances() -> Tolerances:
    """Tolerances in force for the current run."""
    return _ACTIVE_TOLERANCES


@contextlib.contextmanager
def tolerance_scope(tolerances: Tolerances) -> Iterator[Tolerances]:
    """
    Make tolerances the active ones for the duration of the block.

    The previous tolerances are restored on exit, also on error. Worker
    threads started inside the block see the same values.
    """
    global _ACTIVE_TOLERANCES
    previous = _ACTIVE_TOLERANCES
    _ACTIVE_TOLERANCES = tolerances
    try:
        yield tolerances
    finally:
        _ACTIVE_TOLERANCES = previous


class Settings(BaseSettings):
    # Runtime
    LOG_LEVEL: str = Field(default="WARNING", description="Logging level")
    THREADS: int = Field(
        default=1, ge=1, description="Upper bound on worker threads"
    )

    # Computation defaults
    P: float = Field(default=1.0, ge=1.0, description="Wasserstein exponent")
    SEED: int = Field(default=0, ge=0, description="Seed for randomized checks")
    OUTPUT_FORMAT: OutputFormat = Field(
        default=OutputFormat.HUMAN, description="Default output format"
    )

    # Tolerance overrides
    MASS_TOL: float = Field(default=1e-9, gt=0)
    GRAPH_TOL: float = Field(default=1e-9, gt=0)

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        allowed_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in allowed_levels:
            raise ValueError(f"LOG_LEVEL must be one of {allowed_levels}")
        return v.upper()

    model_config = SettingsConfigDict(
        env_prefix="ADAPTED_OT_",
        env_file_encoding="utf-8",
        extra="ignore",
    )


@lru_cache()
def get_settings() -> Settings:
    """Create and return a cached Settings instance."""
    settings = Settings(_env_file=find_env_file())
    logger.debug(
        f"Settings loaded: p={settings.P}, threads={settings.THREADS}, "
        f"seed={settings.SEED}"
    )
    return settings


class RunConfig(BaseModel):
    """Configuration of a single command line run."""

    p: float = Field(default=1.0, ge=1.0, description="Wasserstein exponent")
    tolerances: Tolerances = Field(default_factory=Tolerances)
    output_format: OutputFormat = Field(default=OutputFormat.HUMAN)
    seed: int = Field(default=0, ge=0)
    threads: int = Field(default=1, ge=1)

    @classmethod
    def from_settings(
        cls,
        settings: Settings,
        p: Optional[float] = None,
        output_format: Optional[str] = None,
        seed: Optional[int] = None,
    ) -> "RunConfig":
        """Build a run config from settings, letting explicit flags win."""
        try:
            return cls(
                p=settings.P if p is None else p,
                tolerances=Tolerances(
                    mass=settings.MASS_TOL,
                    graph=settings.GRAPH_TOL,
                ),
                output_format=(
                    settings.OUTPUT_FORMAT
                    if output_format is None
                    else output_format
                ),
                seed=settings.SEED if seed is None else seed,
                threads=settings.THREADS,
            )
        except ValidationError as e:
            raise MalformedInputError(f"Invalid run configuration: {e}") from e
