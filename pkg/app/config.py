"""Runtime settings for the sepstab toolkit."""
from __future__ import annotations

from functools import lru_cache
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Environment-driven settings, prefixed with ``SEPSTAB_``."""

    model_config = SettingsConfigDict(env_file=".env", env_prefix="SEPSTAB_", extra="ignore")

    dim_cap: int = Field(
        4096,
        ge=4,
        description="Largest total Hilbert-space dimension accepted for a target state.",
    )
    log_level: str = Field(
        "INFO",
        description="Root log level for the CLI.",
    )
    log_format: Literal["json", "console"] = Field(
        "json",
        description="Renderer for log lines written to stderr.",
    )
    default_epsilon: float = Field(
        0.05,
        gt=0.0,
        lt=1.0,
        description="Hoeffding accuracy used when a config does not set one.",
    )
    default_delta: float = Field(
        0.01,
        gt=0.0,
        lt=1.0,
        description="Failure probability used when a config does not set one.",
    )
    otel_console_export: bool = Field(
        False,
        description="Export OpenTelemetry spans and metrics to the console.",
    )


@lru_cache
def get_settings() -> Settings:
    """Return a cached Settings instance."""

    return Settings()
