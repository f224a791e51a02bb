# tests/test_config.py
import pytest
import yaml
from pydantic import ValidationError

from config import (DEFAULT_CONFIG_PATH, AlphaConfig, ConvergenceConfig, KernelEvalConfig, MonteCarloSettings,
                    QuadratureSettings, RegimeConfig, Settings, load_config_from_yaml)
from dependencies import build_noise_model, build_weight, get_settings
from exceptions import ConfigurationError, InvalidSpec
from models import KernelFamily, WeightKind


def test_default_config_loads():
    settings = load_config_from_yaml(DEFAULT_CONFIG_PATH)
    assert settings.default_seed == 20240601
    assert settings.quadrature.rel_tol == 1e-8
    assert settings.monte_carlo.n_paths == 20_000


def test_missing_and_malformed_yaml(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config_from_yaml(str(tmp_path / "absent.yaml"))
    bad = tmp_path / "bad.yaml"
    bad.write_text("workers: [1, 2\n")
    with pytest.raises(ConfigurationError):
        load_config_from_yaml(str(bad))
    invalid = tmp_path / "invalid.yaml"
    invalid.write_text("workers: 0\n")
    with pytest.raises(ConfigurationError):
        load_config_from_yaml(str(invalid))


def test_environment_overrides_yaml(tmp_path, monkeypatch):
    path = tmp_path / "config.yaml"
    path.write_text("workers: 2\nmonte_carlo:\n  n_steps: 64\n")
    monkeypatch.setenv("SHE_MFC_WORKERS", "8")
    monkeypatch.setenv("SHE_MFC_MONTE_CARLO__N_PATHS", "500")
    settings = load_config_from_yaml(str(path))
    assert settings.workers == 8
    assert settings.monte_carlo.n_paths == 500
    assert settings.monte_carlo.n_steps == 64


def test_get_settings_is_cached(fresh_settings):
    assert get_settings() is get_settings()


def test_experiment_configs_reject_unknown_fields():
    with pytest.raises(ValidationError):
        RegimeConfig(kernel="riesz", alpha=1.0, d=3, H=0.75, colour="red")
    with pytest.raises(ValidationError):
        AlphaConfig(kernel="riesz", alpha=1.0, d=2, H=0.5, t=1.0, n_list=[-1])


def test_kernel_eval_config_checks_points_and_eps():
    with pytest.raises(ValidationError):
        KernelEvalConfig(kernel="riesz", alpha=1.0, d=2, quantity="mollified", points=[[1.0, 0.0]])
    with pytest.raises(ValidationError):
        KernelEvalConfig(kernel="riesz", alpha=1.0, d=2, points=[[1.0]])
    cfg = KernelEvalConfig(kernel="riesz", alpha=1.0, d=2, points=[[1.0, 0.0]])
    assert cfg.kernel is KernelFamily.RIESZ


def test_beta_h_override_from_settings():
    settings = Settings(beta_h_overrides={0.75: 1.25})
    model = build_noise_model(RegimeConfig(kernel="riesz", alpha=1.0, d=3, H=0.75), settings)
    assert model.beta_H == 1.25
    explicit = build_noise_model(RegimeConfig(kernel="riesz", alpha=1.0, d=3, H=0.75, beta_h=1.1), settings)
    assert explicit.beta_H == 1.1
    with pytest.raises(InvalidSpec):
        build_noise_model(RegimeConfig(kernel="riesz", alpha=1.0, d=3, H=0.5, beta_h=1.1), settings)


def test_weight_selection():
    settings = Settings(beta_h_overrides={0.75: 1.3})
    cfg = ConvergenceConfig(kernel="heat", alpha=1.0, d=1, H=0.75, t=1.0, eps_list=[0.2, 0.1])
    model = build_noise_model(cfg, settings)
    assert build_weight(cfg, model).kind is WeightKind.FRACTIONAL
    mollified = cfg.model_copy(update={"weight": WeightKind.MOLLIFIED, "delta": 0.05})
    weight = build_weight(mollified, model)
    assert weight.horizon == 1.0 and weight.delta == 0.05
    with pytest.raises(InvalidSpec):
        build_weight(cfg.model_copy(update={"weight": WeightKind.MOLLIFIED}), model)


def test_shipped_yaml_only_sets_declared_settings():
    with open(DEFAULT_CONFIG_PATH) as f:
        raw = yaml.safe_load(f)
    assert set(raw) <= set(Settings.model_fields)
    assert set(raw["quadrature"]) <= set(QuadratureSettings.model_fields)
    assert set(raw["monte_carlo"]) <= set(MonteCarloSettings.model_fields)
    assert "chunk_size" not in Settings.model_fields
    assert "limit" not in QuadratureSettings.model_fields
