import os
from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Runtime configuration, overridable through ``BUBBLE_CORRECTION_*`` variables."""

    model_config = SettingsConfigDict(
        env_prefix="BUBBLE_CORRECTION_",
        env_file=".env",
        extra="ignore",
    )

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    LOG_DIR: Optional[Path] = None

    # Sampling and parallelism
    THREADS: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    SEED: int = Field(default=20240611, ge=0, lt=2**64)
    SAMPLES: int = Field(default=1000, gt=0)
    MONTE_CARLO_SAMPLES: int = Field(default=1_000_000, gt=0)

    # Tolerance tiers: exact rational zero, mixed float, quadrature-backed
    TOL_EXACT: float = Field(default=0.0, ge=0.0)
    TOL_FLOAT: float = Field(default=1e-10, ge=0.0)
    TOL_QUAD: float = Field(default=1e-4, ge=0.0)
    TOL_ABS: float = Field(default=1e-6, ge=0.0)

    # Quadrature
    QUADRATURE_NODES: int = Field(default=256, gt=0)
    SPHERE_NODES: int = Field(default=12, gt=1)
    J_ORACLE_RTOL: float = Field(default=1e-8, gt=0.0)

    # Balance checks
    GRADIENT_FLOOR: float = Field(default=1e-6, gt=0.0)
    FALSIFIER_TOLERANCE: float = Field(default=1e-8, gt=0.0)


settings = Settings()
