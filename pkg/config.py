# config.py
import logging
import os
from typing import Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from exceptions import ConfigurationError
from models import InitialKind, KernelFamily, WeightKind

logger = logging.getLogger(__name__)

APP_VERSION = "0.1.0"
DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config.yaml")

# --- Pydantic Models for Config Structure ---

class QuadratureSettings(BaseModel):
    rel_tol: float = 1e-8
    mixture_nodes: int = 32
    time_nodes: int = 12

class MonteCarloSettings(BaseModel):
    samples: int = 100_000
    n_steps: int = 256
    n_paths: int = 20_000
    n_time_samples: int = 2_000
    n_spectral_samples: int = 64
    exponent_cap_factor: float = 1e3

class Settings(BaseSettings):
    log_level: str = "INFO"
    workers: int = Field(default=1, ge=1)
    default_seed: int = 20240601
    c_star: float = Field(default=1.0, ge=1.0)
    beta_h_overrides: Dict[float, float] = {}
    schema_version: str = "1.0"
    quadrature: QuadratureSettings = Field(default_factory=QuadratureSettings)
    monte_carlo: MonteCarloSettings = Field(default_factory=MonteCarloSettings)

    model_config = SettingsConfigDict(
        env_prefix="SHE_MFC_",
        env_nested_delimiter="__",
        extra="ignore",
    )

    @classmethod
    def settings_customise_sources(cls, settings_cls, init_settings, env_settings, dotenv_settings, file_secret_settings):
        # Environment variables win over values read from config.yaml.
        return env_settings, init_settings, dotenv_settings, file_secret_settings


def load_config_from_yaml(path: str = DEFAULT_CONFIG_PATH) -> Settings:
    """Loads configuration from a YAML file and validates with Pydantic."""
    try:
        with open(path, 'r') as f:
            config_data = yaml.safe_load(f)
        if config_data is None:
            config_data = {}
        if not isinstance(config_data, dict):
            raise ConfigurationError(f"Config file {path} must contain a mapping.")
        return Settings(**config_data)
    except FileNotFoundError:
        logger.error(f"Configuration file not found at: {path}")
        raise ConfigurationError(f"Config file {path} not found.")
    except yaml.YAMLError as e:
        logger.error(f"Error parsing configuration file {path}: {e}")
        raise ConfigurationError(f"Invalid YAML in {path}.")
    except ValidationError as e:
        logger.error(f"Configuration validation error: {e}")
        raise ConfigurationError(f"Invalid configuration structure: {e}")


# --- Experiment records (one per CLI subcommand) ---

class ExperimentConfig(BaseModel):
    """Common fields of every experiment; unknown fields are rejected."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: Optional[int] = None
    output: Optional[str] = None
    format: Optional[Literal["json", "csv"]] = None


class KernelConfig(ExperimentConfig):
    kernel: KernelFamily
    alpha: float = Field(gt=0.0)
    d: int = Field(ge=1)


class ModelConfig(KernelConfig):
    H: float = Field(ge=0.5, lt=1.0)
    beta_h: Optional[float] = Field(default=None, gt=0.0)
    c_star: Optional[float] = Field(default=None, ge=1.0)


class KernelEvalConfig(KernelConfig):
    quantity: Literal["kernel", "density", "mollified"] = "kernel"
    points: List[List[float]]
    eps: Optional[float] = Field(default=None, gt=0.0)
    convention: Literal["consistent", "printed"] = "consistent"

    @model_validator(mode="after")
    def _check(self) -> "KernelEvalConfig":
        if self.quantity == "mollified" and self.eps is None:
            raise ValueError("quantity 'mollified' requires eps")
        for point in self.points:
            if len(point) != self.d:
                raise ValueError(f"point {point} does not have dimension d={self.d}")
        return self


class JfConfig(KernelConfig):
    u: float = Field(gt=0.0)
    v: float = Field(gt=0.0)
    y: List[float]
    z: List[float]
    method: Literal["closed", "mc", "quadrature"] = "closed"
    n_samples: Optional[int] = Field(default=None, ge=2)


class PsiConfig(ModelConfig):
    s: List[float]
    tvec: List[float]
    horizon: float = Field(gt=0.0)
    method: Literal["closed1", "mc", "mixture"] = "mc"
    n_samples: Optional[int] = Field(default=None, ge=2)
    eps: float = Field(default=0.0, ge=0.0)


class AlphaConfig(ModelConfig):
    n_list: List[int] = [1, 2]
    t: float = Field(gt=0.0)
    method: Literal["quadrature", "mc"] = "quadrature"
    n_time_samples: Optional[int] = Field(default=None, ge=2)
    n_spectral_samples: Optional[int] = Field(default=None, ge=1)
    eps: float = Field(default=0.0, ge=0.0)

    @field_validator("n_list")
    @classmethod
    def _orders(cls, value: List[int]) -> List[int]:
        if not value or any(n < 0 for n in value):
            raise ValueError("n_list must hold non-negative orders")
        return value


class SecondMomentConfig(ModelConfig):
    t_list: List[float]
    n_max: int = Field(default=12, ge=0)
    tail_tol: float = Field(default=1e-3, gt=0.0)
    n_time_samples: Optional[int] = Field(default=None, ge=2)
    n_spectral_samples: Optional[int] = Field(default=None, ge=1)


class PathExperimentConfig(ModelConfig):
    t: float = Field(gt=0.0)
    n_paths: Optional[int] = Field(default=None, ge=2)
    n_steps: Optional[int] = Field(default=None, ge=1)
    weight: Optional[WeightKind] = None
    delta: Optional[float] = Field(default=None, gt=0.0)


class LocalTimeConfig(PathExperimentConfig):
    eps: float = Field(gt=0.0)
    moments: List[int] = [1, 2]


class ExpMomentConfig(PathExperimentConfig):
    eps: float = Field(gt=0.0)
    lambdas: List[float] = [1.0]


class ConvergenceConfig(PathExperimentConfig):
    eps_list: List[float]


class FkMomentConfig(ModelConfig):
    k: int = Field(default=2, ge=2)
    t: float = Field(gt=0.0)
    x: Optional[List[float]] = None
    eps: float = Field(default=0.05, gt=0.0)
    n_steps: Optional[int] = Field(default=None, ge=1)
    n_samples: Optional[int] = Field(default=None, ge=2)
    initial: InitialKind = InitialKind.CONSTANT
    amplitude: float = 1.0
    frequency: Optional[List[float]] = None
    length_scale: Optional[float] = Field(default=None, gt=0.0)
    extrapolate: bool = False


class CompareConfig(ModelConfig):
    t: float = Field(gt=0.0)
    tail_tol: float = Field(default=1e-3, gt=0.0)
    eps: float = Field(default=0.05, gt=0.0)
    n_max: int = Field(default=12, ge=0)
    n_steps: Optional[int] = Field(default=None, ge=1)
    n_samples: Optional[int] = Field(default=None, ge=2)


class RegimeConfig(ModelConfig):
    K: int = Field(default=5, ge=2)


class SelftestConfig(ExperimentConfig):
    pass
