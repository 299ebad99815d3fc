import logging

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class PsoSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="ROF_PSO_",
    )

    # Algorithm defaults: m iterations, p particles, personal/global weights,
    # inertia and its per-iteration decay
    iterations: int = Field(default=100, ge=1)
    particles: int = Field(default=1000, ge=1)
    w_personal: float = 1.0
    w_global: float = 0.7
    inertia: float = 0.3
    inertia_decay: float = Field(default=0.7, gt=0.0, le=1.0)


class RofSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="ROF_",
    )

    log: str = "WARNING"
    workers: int = Field(default=1, ge=1)
    oversample: int = Field(default=4, ge=1)
    singular_condition: float = Field(default=1e12, gt=1.0)
    pso: PsoSettings = PsoSettings()

    @field_validator("log", mode="before")
    @classmethod
    def normalise_log_level(cls, value) -> str:
        level = str(value).strip().upper()
        if level not in logging.getLevelNamesMapping():
            raise ValueError(f"unknown log level '{value}'")
        return level

    @property
    def log_level(self) -> int:
        return logging.getLevelNamesMapping()[self.log]
