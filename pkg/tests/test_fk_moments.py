# tests/test_fk_moments.py
import math

import pytest

from exceptions import DomainError, RegimeWarning
from models import InitialCondition, InitialKind, WeightKind, WeightSpec
from solvers.fk_moments import (compare_with_chaos, fk_moment, fk_moment_extrapolated, heat_semigroup,
                                monotonicity_study)
from solvers.kernels import bound_constants
from solvers.localtime import exp_moment

ONE = InitialCondition()


def test_heat_semigroup_constant_and_time_zero():
    assert heat_semigroup(InitialCondition(amplitude=2.5), 3.0, [0.4]) == 2.5
    bump = InitialCondition(kind=InitialKind.GAUSSIAN_BUMP, length_scale=0.5)
    assert heat_semigroup(bump, 0.0, [0.5]) == pytest.approx(math.exp(-0.5), rel=1e-12)
    with pytest.raises(DomainError):
        heat_semigroup(ONE, -1.0, [0.0])


@pytest.mark.parametrize("t, x", [(0.5, 0.0), (1.0, 0.3), (2.0, -1.2)])
def test_heat_semigroup_damps_cosines(t, x):
    cosine = InitialCondition(kind=InitialKind.COSINE, frequency=[1.0])
    assert heat_semigroup(cosine, t, [x]) == pytest.approx(math.exp(-t / 2.0) * math.cos(x), abs=1e-10)


def test_heat_semigroup_in_two_dimensions():
    cosine = InitialCondition(kind=InitialKind.COSINE, frequency=[1.0, 2.0])
    expected = math.exp(-0.3 * 5.0 / 2.0) * math.cos(0.1 + 2.0 * 0.2)
    assert heat_semigroup(cosine, 0.3, [0.1, 0.2]) == pytest.approx(expected, abs=1e-10)
    bump = InitialCondition(kind=InitialKind.GAUSSIAN_BUMP, length_scale=1.0)
    expected = (1.0 / 1.5) * math.exp(-0.25 / (2.0 * 1.5))
    assert heat_semigroup(bump, 0.5, [0.3, 0.4]) == pytest.approx(expected, rel=1e-8)


def test_second_moment_equals_exponential_local_time_moment(heat_model, stream):
    model = heat_model(d=1, H=0.75)
    weight = WeightSpec(kind=WeightKind.FRACTIONAL, H=0.75)
    moment = fk_moment(model, ONE, 2, 0.5, [0.0], 0.1, n_steps=16, n_samples=500, stream=stream,
                       exponent_cap_factor=None)
    direct = exp_moment(model, weight, 0.5, 0.1, 1.0, n_paths=500, n_steps=16, stream=stream)
    assert moment.value.mean == pytest.approx(direct.mean, rel=1e-12)
    assert moment.clip_count == 0
    assert moment.regime_note.startswith("inside proven regime")


def test_third_moment_smooth_kernel_bound(heat_model, stream):
    model = heat_model(d=1, H=0.75)
    t = 0.5
    moment = fk_moment(model, ONE, 3, t, [0.0], 0.1, n_steps=16, n_samples=400, stream=stream)
    c_t = bound_constants(model.kernel).C_alpha_d * t ** (2.0 * model.H)
    assert moment.value.mean >= 1.0
    assert moment.value.mean <= math.exp(3.0 * c_t) + 3.0 * moment.value.stderr


def test_fk_moment_validates_arguments(heat_model, stream):
    model = heat_model(d=1, H=0.75)
    with pytest.raises(DomainError):
        fk_moment(model, ONE, 1, 0.5, [0.0], 0.1, n_steps=8, n_samples=10, stream=stream)
    with pytest.raises(DomainError):
        fk_moment(model, ONE, 2, 0.5, [0.0, 0.0], 0.1, n_steps=8, n_samples=10, stream=stream)


def test_richardson_extrapolation_uses_common_paths(heat_model, stream):
    model = heat_model(d=1, H=0.75)
    result = fk_moment_extrapolated(model, ONE, 2, 0.5, [0.0], 0.2, n_steps=16, n_samples=300, stream=stream)
    assert result.eps_values == [0.2, 0.1, 0.05]
    v1, v2, v4 = (r.mean for r in result.raw)
    assert result.linear.mean == pytest.approx(2.0 * v2 - v1, rel=1e-10)
    assert result.quadratic.mean == pytest.approx((8.0 * v4 - 6.0 * v2 + v1) / 3.0, rel=1e-10)
    assert v1 <= v2 <= v4


@pytest.mark.slow
def test_feynman_kac_agrees_with_chaos_series(heat_model, stream):
    report = compare_with_chaos(heat_model(d=1, H=0.75), 0.25, 1e-3, 0.05, n_steps=64, n_samples=4_000,
                                stream=stream)
    assert report.agree, report.reason
    assert report.tail < 1e-3


def test_comparison_on_the_boundary_reports_divergence(riesz_model, stream):
    model = riesz_model(d=3, alpha=1.0, H=0.75)
    with pytest.warns(RegimeWarning):
        report = compare_with_chaos(model, 50.0, 1e-3, 0.5, n_steps=8, n_samples=40, stream=stream, n_max=2)
    assert not report.agree
    assert report.reason.startswith("chaos series")


def test_monotonicity_study_has_no_violations(heat_model, stream):
    report = monotonicity_study(heat_model(d=1, H=0.75), [0.25, 0.5, 1.0], [2, 3, 4], 0.1, n_steps=16,
                                n_samples=64, stream=stream)
    assert report.violations_k == 0
    assert report.violations_t == 0
    assert report.t_grid == pytest.approx([0.25, 0.5, 1.0])
    assert report.means["k=4,t=1"] >= report.means["k=2,t=0.25"]
    with pytest.raises(DomainError):
        monotonicity_study(heat_model(), [0.5], [1, 2], 0.1, n_steps=8, n_samples=4, stream=stream)
