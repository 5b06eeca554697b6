"""
Runtime configuration for the stochastic Schrödinger laboratory
"""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from sselab import __version__


class Settings(BaseSettings):
    """Application settings"""

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")

    # Application
    APP_NAME: str = "sselab"
    VERSION: str = __version__

    # Logging
    LOG_LEVEL: str = Field(default="INFO")
    LOG_FORMAT: str = Field(default="json")

    # Output
    SSE_OUTPUT_DIR: str = Field(default="./results")

    # Ensemble execution
    N_JOBS: int = Field(default=1, ge=1)
    CHUNK_SIZE: int = Field(default=32, ge=1)  # independent of N_JOBS
    JOBLIB_BACKEND: str = Field(default="loky")

    # Implicit solvers
    FIXED_POINT_TOL: float = Field(default=1e-12, gt=0)
    FIXED_POINT_MAX_ITERS: int = Field(default=50, ge=1)

    # Failed-sample fraction above which a run exits with status 1
    NAN_FAILURE_THRESHOLD: float = Field(default=0.001, ge=0)


# Create settings instance
settings = Settings()
