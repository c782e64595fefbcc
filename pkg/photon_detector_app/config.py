from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process configuration loaded from environment variables."""

    model_config = SettingsConfigDict(env_prefix="PHOTON_DETECTOR_", case_sensitive=False)

    environment: str = "prod"
    log_level: str = "INFO"

    # Ensemble execution
    max_workers: int = 1
    # Trajectories per logical chunk (also the streaming unit for .npy writes)
    batch_chunk_size: int = 50

    output_root: str = "runs"

    # Numerical diagnostics
    truncation_tolerance: float = 1e-6
    state_tolerance: float = 1e-6
    validity_check_stride: int = 500


@lru_cache
def get_settings() -> Settings:
    return Settings()
