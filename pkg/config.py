"""
Configuration module for the rg-lattice simulation toolkit
"""
from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings loaded from environment variables (prefix RG_LATTICE_)"""

    model_config = SettingsConfigDict(
        env_prefix="RG_LATTICE_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # Output
    output_dir: str = "runs"
    overwrite: bool = False

    # Application Settings
    log_level: str = "INFO"
    tool_version: str = "1.0.0"

    # Execution
    threads: int = 1
    preset: Literal["desk", "paper"] = "desk"
    seed: int = 20240917

    # Statistics
    bins: int = 128

    # Test suite
    slow_tests: bool = False


# Global settings instance
settings = Settings()
