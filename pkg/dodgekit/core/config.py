from typing import Optional

from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict
import logging

logger = logging.getLogger(__name__)


class ConfigurationError(Exception):
    """Raised when the environment holds an invalid setting."""

    pass


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="DODGEKIT_",
        case_sensitive=True,
        extra="ignore",
    )

    # DODGE
    EPSILON: float = Field(0.2, gt=0.0, le=1.0, description="Output-space cell width")
    N1: int = Field(15, ge=0, description="Random-branch phase evaluations")
    N2: int = Field(15, ge=0, description="Range-narrowing phase evaluations")

    # TPE
    TPE_GAMMA: float = Field(0.25, gt=0.0, lt=1.0, description="Fraction of trials in 'best'")
    TPE_CANDIDATES: int = Field(24, ge=1, description="Proposals drawn per TPE step")
    TPE_STARTUP: int = Field(5, ge=1, description="Random trials before TPE modelling")

    # Experiment protocol
    REPEATS: int = Field(25, ge=1, description="Repeats per dataset and optimizer")
    TRAIN_FRACTION: float = Field(0.8, gt=0.0, lt=1.0, description="RIG1 train share")
    TUNE_FRACTION: float = Field(0.7, gt=0.0, lt=1.0, description="Tune share inside train")
    N_JOBS: int = Field(1, description="joblib workers for study repeats (-1 = all cores)")
    SEED: int = Field(0, ge=0, description="Default base seed")

    # Statistics
    BOOTSTRAP_RESAMPLES: int = Field(1000, ge=100, description="Bootstrap resamples")
    CONFIDENCE: float = Field(0.95, gt=0.0, lt=1.0, description="Bootstrap confidence")
    SMALL_EFFECT: float = Field(0.56, ge=0.5, le=1.0, description="A12 small-effect cut")

    # Intrinsic dimensionality
    ID_STEPS: int = Field(20, ge=3, description="Log-spaced radii")
    ID_SUBSAMPLE_CAP: int = Field(1000, ge=2, description="Rows measured at most")
    ID_SMOOTHING_WINDOW: int = Field(3, ge=1, description="Moving-average window")
    ID_MIN_PAIRS: int = Field(100, ge=1, description="Pairs a radius needs to enter the slopes")
    ID_RELIABILITY_LIMIT: float = Field(20.0, gt=0.0, description="Estimates above are flagged")
    RECOMMEND_MAX_DIM: float = Field(4.0, gt=0.0, description="DODGE recommended at or below")
    NOT_RECOMMEND_MIN_DIM: float = Field(8.0, gt=0.0, description="DODGE discouraged above")

    # Logging
    LOG_LEVEL: str = Field("INFO", description="Root log level")
    LOG_FORMAT: str = Field("json", description="'json' or 'text'")
    LOG_FILE: Optional[str] = Field(None, description="Optional rotating log file")

    @property
    def dodge_budget(self) -> int:
        """Total DODGE evaluations (N1 + N2)."""
        return self.N1 + self.N2


try:
    settings = Settings()  # type: ignore
    logger.info("Configuration loaded successfully")
except ValidationError as e:
    logger.critical(f"Configuration validation failed: {e}")
    raise ConfigurationError(f"Invalid DODGEKIT_* environment variables: {e}")
