"""
Run configuration.

Values come from, in increasing precedence: field defaults, ATWIST_* environment
variables (a .env file is loaded by the CLI first), and command-line flags.
"""
from __future__ import annotations

import logging
import os
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from atwist.algebra.symexpr import Sampler

logger = logging.getLogger(__name__)

ENV_PREFIX = "ATWIST_"


class RunSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    samples: int = Field(default=64, gt=0, description="Sample points per identity check")
    tol: float = Field(default=1e-9, gt=0, description="Relative tolerance of sampled checks")
    seed: int = Field(default=0, ge=0, description="Seed for every sampled check")
    grid: int | None = Field(default=None, gt=0, description="Quadrature points per axis; manifest value if unset")
    trials: int = Field(default=3, gt=0, description="Random instances per property check")
    workers: int = Field(default=1, ge=1, description="Threads running independent checks")
    timings: bool = Field(default=False, description="Record wall time per check")
    log_level: str = Field(default="INFO", description="Logging level name")

    @classmethod
    def from_env(cls, **overrides: Any) -> RunSettings:
        """Environment first, then non-None overrides on top."""
        values: dict[str, Any] = {}
        for name in cls.model_fields:
            raw = os.getenv(ENV_PREFIX + name.upper())
            if raw is not None and raw.strip():
                values[name] = raw.strip()
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except ValidationError as exc:
            logger.error(f"invalid run settings: {exc}")
            raise

    def sampler(self) -> Sampler:
        return Sampler(seed=self.seed, n_samples=self.samples, tol=self.tol)
