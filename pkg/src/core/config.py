"""Configuration management using pydantic-settings."""

from typing import Optional
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="MCST_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Numerics
    check_finite: bool = Field(
        default=True, description="Fail fast when a tensor op produces NaN or Inf"
    )
    scan_workers: int = Field(
        default=4, ge=1, description="Worker threads used by the chunked parallel scan"
    )

    # Outputs
    output_root: str = Field(
        default="runs", description="Directory that relative run output paths resolve against"
    )

    # Logging
    log_level: str = Field(
        default="INFO", description="Logging level"
    )


# Global settings instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get or create the global settings instance."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reset_settings() -> None:
    """Reset the global settings instance (useful for testing)."""
    global _settings
    _settings = None
