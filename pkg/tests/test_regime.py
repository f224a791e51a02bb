# tests/test_regime.py
import math

import pytest

from exceptions import ConditionViolated, DomainError, InvalidSpec, Unsupported
from models import NoiseModel, RegimeStatus
from solvers.kernels import make_kernel
from solvers.regime import critical_time_T0, critical_time_t0, existence_report, lambda0


@pytest.mark.parametrize("d, H, status", [
    (2, 0.5, RegimeStatus.EXISTS),
    (3, 0.5, RegimeStatus.NOT_EXISTS),
    (3, 0.75, RegimeStatus.EXISTS),
    (4, 0.8, RegimeStatus.UNKNOWN),
    (4, 0.75, RegimeStatus.NOT_EXISTS),
])
def test_riesz_truth_table(riesz_model, d, H, status):
    report = existence_report(riesz_model(d=d, alpha=1.0, H=H))
    assert report.status is status
    assert report.sufficient_ok == (status is RegimeStatus.EXISTS)


def test_boundary_report_has_finite_horizon(riesz_model):
    report = existence_report(riesz_model(d=3, alpha=1.0, H=0.75))
    assert math.isfinite(report.T0)
    assert sorted(report.t0) == [2, 3, 4, 5]
    assert report.lambda0_exponent == pytest.approx(-0.5)
    assert "lambda0_t0_ratio" in report.diagnostics


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5])
def test_smooth_kernels_always_exist(d):
    model = NoiseModel(H=0.75, d=d, kernel=make_kernel("heat", 1.0, d), beta_H=1.3)
    report = existence_report(model)
    assert report.status is RegimeStatus.EXISTS
    assert report.dalang_ok
    assert math.isinf(report.T0)


def test_t0_ratio_is_exact(riesz_model):
    model = riesz_model(d=3, alpha=1.0, H=0.75)
    ratio = critical_time_t0(model, 3) / critical_time_t0(model, 2)
    assert ratio == pytest.approx(1.0 / 9.0, abs=1e-12)
    values = [critical_time_t0(model, k) for k in range(2, 6)]
    assert values == sorted(values, reverse=True)


def test_t0_below_boundary_and_for_smooth_kernels(riesz_model, heat_model):
    assert math.isinf(critical_time_t0(riesz_model(d=2, alpha=1.0, H=0.75), 2))
    assert math.isinf(critical_time_T0(riesz_model(d=2, alpha=1.0, H=0.75)))
    assert math.isinf(critical_time_t0(heat_model(), 2))
    with pytest.raises(Unsupported):
        critical_time_t0(heat_model(), 2, strict=True)
    with pytest.raises(ConditionViolated):
        critical_time_t0(riesz_model(d=4, alpha=1.0, H=0.8), 2)
    with pytest.raises(DomainError):
        critical_time_t0(riesz_model(d=3, alpha=1.0, H=0.75), 1)


def test_lambda0_scaling(riesz_model):
    assert math.isinf(lambda0(riesz_model(d=2, alpha=1.0, H=0.75), 1.0, 0.375))
    model = riesz_model(d=3, alpha=1.0, H=0.75)
    base = lambda0(model, 1.0, 0.375)
    assert lambda0(model, 1.0, 0.75) == pytest.approx(base / 2.0, rel=1e-12)
    assert lambda0(model, 2.0, 0.375) == pytest.approx(base * 2.0 ** (1.0 - 1.5), rel=1e-12)
    with pytest.raises(Unsupported):
        lambda0(riesz_model(d=3, alpha=1.0, H=0.5), 1.0, 0.375)
    with pytest.raises(Unsupported):
        lambda0(riesz_model(d=4, alpha=1.0, H=0.8), 1.0, 0.48)


def test_t0_grows_with_hurst_index(riesz_model):
    values = [critical_time_t0(riesz_model(d=3, alpha=1.0, H=H, beta_H=1.0), 2) for H in (0.52, 0.55, 0.6)]
    assert values[0] < values[1] < values[2]


def test_report_rejects_bad_inputs(riesz_model):
    model = NoiseModel(H=0.5, d=2, kernel=make_kernel("bessel", 3.0, 2))
    with pytest.raises(InvalidSpec):
        existence_report(model)
    with pytest.raises(DomainError):
        existence_report(riesz_model(), K=1)
