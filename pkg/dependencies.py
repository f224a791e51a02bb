# dependencies.py
# Providers that turn validated configuration into domain objects.
import functools
from typing import Dict, Optional

from pydantic import ValidationError

from config import (FkMomentConfig, KernelConfig, ModelConfig, PathExperimentConfig, Settings,
                    load_config_from_yaml)
from exceptions import InvalidSpec
from mc_engine import RngStream
from models import InitialCondition, KernelSpec, NoiseModel, WeightKind, WeightSpec
from solvers.kernels import bound_constants, make_kernel


@functools.lru_cache(maxsize=1)
def get_settings() -> Settings:
    return load_config_from_yaml()


def build_kernel(cfg: KernelConfig) -> KernelSpec:
    return make_kernel(cfg.kernel, cfg.alpha, cfg.d)


def build_noise_model(cfg: ModelConfig, settings: Settings) -> NoiseModel:
    kernel = build_kernel(cfg)
    beta = cfg.beta_h if cfg.beta_h is not None else settings.beta_h_overrides.get(cfg.H)
    c_star = cfg.c_star if cfg.c_star is not None else settings.c_star
    try:
        return NoiseModel(H=cfg.H, d=cfg.d, kernel=kernel, beta_H=beta, c_star=c_star)
    except ValidationError as e:
        raise InvalidSpec(str(e)) from e


def resolve_seed(cfg, settings: Settings) -> int:
    return cfg.seed if cfg.seed is not None else settings.default_seed


def root_stream(command: str, seed: int) -> RngStream:
    """Each subcommand draws from its own named stream under the run seed."""
    return RngStream(seed=seed).named(command)


def build_weight(cfg: PathExperimentConfig, model: NoiseModel) -> WeightSpec:
    kind = cfg.weight
    try:
        if kind is None:
            return WeightSpec.for_hurst(model.H)
        if kind is WeightKind.MOLLIFIED:
            return WeightSpec(kind=kind, H=model.H, delta=cfg.delta, horizon=cfg.t)
        return WeightSpec(kind=kind, H=model.H)
    except ValidationError as e:
        raise InvalidSpec(str(e)) from e


def build_initial(cfg: FkMomentConfig) -> InitialCondition:
    try:
        return InitialCondition(kind=cfg.initial, amplitude=cfg.amplitude, frequency=cfg.frequency,
                                length_scale=cfg.length_scale)
    except ValidationError as e:
        raise InvalidSpec(str(e)) from e


def constants_for(kernel: KernelSpec, model: Optional[NoiseModel] = None) -> Dict[str, Optional[float]]:
    """Constants echoed into every emitted file."""
    out: Dict[str, Optional[float]] = {}
    try:
        constants = bound_constants(kernel)
        out.update({"D_alpha_d": constants.D_alpha_d, "C_alpha_d": constants.C_alpha_d,
                    "bound_provenance": constants.provenance.value})
    except InvalidSpec:
        out.update({"D_alpha_d": None, "C_alpha_d": None})
    if model is not None:
        out.update({"beta_H": model.beta_H, "c_star": model.c_star, "alpha_H": model.alpha_H})
    return out
