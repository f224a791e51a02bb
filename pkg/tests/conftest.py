# tests/conftest.py
import pytest

from dependencies import get_settings
from mc_engine import RngStream
from models import NoiseModel
from solvers.kernels import make_kernel

GOLDEN_SEED = 20240601


@pytest.fixture
def stream() -> RngStream:
    return RngStream(seed=GOLDEN_SEED)


@pytest.fixture
def riesz_model():
    """Riesz kernel model factory with beta_H pinned so tests skip the estimator."""
    def build(d: int = 2, alpha: float = 1.0, H: float = 0.5, beta_H: float = None) -> NoiseModel:
        if beta_H is None and H != 0.5:
            beta_H = 1.3
        return NoiseModel(H=H, d=d, kernel=make_kernel("riesz", alpha, d), beta_H=beta_H)
    return build


@pytest.fixture
def heat_model():
    def build(d: int = 1, alpha: float = 1.0, H: float = 0.75) -> NoiseModel:
        beta_H = None if H == 0.5 else 1.3
        return NoiseModel(H=H, d=d, kernel=make_kernel("heat", alpha, d), beta_H=beta_H)
    return build


@pytest.fixture
def fresh_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
