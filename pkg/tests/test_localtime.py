# tests/test_localtime.py
import math

import numpy as np
import pytest
from scipy import integrate

from exceptions import GridMismatch, InvalidEpsList, SingularPoint, Unsupported
from mc_engine import PathBundle, sample_bundle
from models import NoiseModel, WeightKind, WeightSpec
from solvers.chaos import alpha_n
from solvers.kernels import heat_density, make_kernel, mollified_at_origin
from solvers.localtime import (cell_weights, check_eps_list, convergence_study, eval_weight, exp_moment,
                               exp_moment_bound, exp_moment_table, local_time_moment_estimates, local_time_moments,
                               local_time_on_paths, weight_norm)
from solvers.regime import lambda0

FRACTIONAL = WeightSpec(kind=WeightKind.FRACTIONAL, H=0.75)
DIAGONAL = WeightSpec(kind=WeightKind.DIAGONAL, H=0.5)


def _frozen(k: int, d: int, t: float, n_steps: int) -> PathBundle:
    return PathBundle(k=k, d=d, t=t, n_steps=n_steps, values=np.zeros((k, n_steps + 1, d)))


def test_eval_weight_fractional():
    assert eval_weight(FRACTIONAL, 0.0, 1.0) == pytest.approx(0.375, rel=1e-12)
    assert eval_weight(FRACTIONAL, 1.0, 0.0) == eval_weight(FRACTIONAL, 0.0, 1.0)
    with pytest.raises(SingularPoint):
        eval_weight(FRACTIONAL, 0.3, 0.3)
    with pytest.raises(Unsupported):
        eval_weight(DIAGONAL, 0.1, 0.2)


def test_eval_weight_mollified_brownian():
    w = WeightSpec(kind=WeightKind.MOLLIFIED, H=0.5, delta=0.1, horizon=1.0)
    assert eval_weight(w, 0.5, 0.5) == pytest.approx(10.0, rel=1e-12)
    assert eval_weight(w, 0.2, 0.6) == pytest.approx(0.0, abs=1e-12)


def test_weight_spec_validation():
    with pytest.raises(ValueError):
        WeightSpec(kind=WeightKind.MOLLIFIED, H=0.75, delta=0.1)
    with pytest.raises(ValueError):
        WeightSpec(kind=WeightKind.DIAGONAL, H=0.75)
    with pytest.raises(ValueError):
        WeightSpec(kind=WeightKind.FRACTIONAL, H=0.5)


def test_weight_norm():
    assert weight_norm(DIAGONAL, 3.0) == 1.0
    assert weight_norm(FRACTIONAL, 1.0) == pytest.approx(1.5 * math.sqrt(0.5), rel=1e-12)


def test_mollified_cell_weights_approach_the_fractional_total():
    w = WeightSpec(kind=WeightKind.MOLLIFIED, H=0.75, delta=0.01, horizon=1.0)
    assert cell_weights(w, 1.0, 1000).sum() == pytest.approx(1.0, rel=0.03)


def test_mollified_weights_integrate_polynomials_like_the_fractional_weight():
    t, delta = 1.0, 1e-3
    mollified = WeightSpec(kind=WeightKind.MOLLIFIED, H=0.75, delta=delta, horizon=t)

    def g(r: float, s: float) -> float:
        # vanishes at both ends, so the O(delta) edge terms of the window cancel
        return r * (1.0 - r) * s * (1.0 - s)

    def mollified_row(r: float) -> float:
        kinks = sorted(v for v in {r - delta, r, r + delta, t - delta} if 0.0 < v < t)
        value, _ = integrate.quad(lambda s: eval_weight(mollified, r, s) * g(r, s), 0.0, t, points=kinks, limit=200)
        return value

    def fractional_row(r: float) -> float:
        left, _ = integrate.quad(lambda s: g(r, s), 0.0, r, weight="alg", wvar=(0.0, -0.5))
        right, _ = integrate.quad(lambda s: g(r, s), r, t, weight="alg", wvar=(-0.5, 0.0))
        return FRACTIONAL.alpha_H * (left + right)

    smoothed, _ = integrate.quad(mollified_row, 0.0, t, points=[t - delta], limit=200)
    exact, _ = integrate.quad(fractional_row, 0.0, t, limit=200)
    assert exact > 0.0
    assert smoothed == pytest.approx(exact, rel=1e-3)


@pytest.mark.parametrize("weight", [DIAGONAL, FRACTIONAL])
def test_local_time_on_frozen_paths(heat_model, weight):
    model = heat_model(d=1, H=weight.H)
    value = local_time_on_paths(model, weight, _frozen(2, 1, 1.0, 16), eps=1.0)
    assert value == pytest.approx((4.0 * math.pi) ** -0.5, rel=1e-4)


def test_local_time_on_paths_rejects_bad_bundles(heat_model, stream):
    model = heat_model(d=1, H=0.5)
    with pytest.raises(GridMismatch):
        local_time_on_paths(model, DIAGONAL, sample_bundle(stream, 3, 1, 1.0, 8), eps=0.1)
    with pytest.raises(GridMismatch):
        local_time_on_paths(model, DIAGONAL, sample_bundle(stream, 2, 2, 1.0, 8), eps=0.1)


def test_local_time_converges_under_grid_refinement(heat_model, stream):
    model = heat_model(d=1, H=0.75)
    errors = {32: [], 128: []}
    for i in range(20):
        fine = sample_bundle(stream.child(i), 2, 1, 1.0, 512)
        reference = local_time_on_paths(model, FRACTIONAL, fine, eps=0.1)
        for n in errors:
            coarse = PathBundle(k=2, d=1, t=1.0, n_steps=n, values=fine.values[:, :: 512 // n])
            errors[n].append(abs(local_time_on_paths(model, FRACTIONAL, coarse, eps=0.1) - reference))
    assert np.mean(errors[128]) < np.mean(errors[32])


def test_first_moment_matches_discretised_expectation(heat_model, stream):
    model = heat_model(d=1, H=0.5)
    t, eps, n_steps = 1.0, 0.1, 32
    dt = t / n_steps
    left = np.arange(n_steps) * dt
    # midpoints of two independent paths differ by N(0, 2 t_i + dt / 2)
    oracle = float(np.sum(dt * heat_density(1.0 + eps + 2.0 * left + dt / 2.0, 0.0, 1)))
    estimate = local_time_moments(model, DIAGONAL, t, eps, 1, n_paths=20_000, n_steps=n_steps, stream=stream)
    assert estimate.within(oracle, 4.0)


@pytest.mark.parametrize("family, alpha, d", [("bessel", 1.0, 2), ("poisson", 1.0, 1)])
def test_first_moment_for_subordinated_kernels(stream, family, alpha, d):
    model = NoiseModel(H=0.5, d=d, kernel=make_kernel(family, alpha, d))
    t, eps, n_steps = 0.5, 0.1, 16
    dt = t / n_steps
    left = np.arange(n_steps) * dt
    oracle = float(np.sum(dt * mollified_at_origin(model.kernel, eps + 2.0 * left + dt / 2.0)))
    estimate = local_time_moments(model, DIAGONAL, t, eps, 1, n_paths=2_000, n_steps=n_steps, stream=stream)
    assert math.isfinite(estimate.mean)
    assert estimate.within(oracle, 4.0)


@pytest.mark.slow
@pytest.mark.parametrize("H", [0.5, 0.75])
@pytest.mark.parametrize("family", ["heat", "riesz"])
def test_local_time_moments_match_chaos_coefficients(heat_model, riesz_model, stream, family, H):
    model = heat_model(d=1, H=H) if family == "heat" else riesz_model(d=2, alpha=1.0, H=H)
    weight = WeightSpec.for_hurst(H)
    t, eps = 0.5, 0.2
    n_steps = 256 if weight.kind is WeightKind.DIAGONAL else 128
    estimates = local_time_moment_estimates(model, weight, t, eps, [1, 2], n_paths=10_000, n_steps=n_steps,
                                            stream=stream)
    for estimate in estimates:
        exact = alpha_n(model, estimate.moment, t, method="quadrature", eps=eps).value.mean
        # midpoint grid bias is O(t / n_steps)
        assert estimate.value.within(exact, 4.0, rel=5e-3)


def test_moment_estimates_share_paths(heat_model, stream):
    model = heat_model(d=1, H=0.75)
    first, second = local_time_moment_estimates(model, FRACTIONAL, 0.5, 0.2, [1, 2], n_paths=500, n_steps=16,
                                                stream=stream)
    assert second.value.mean >= first.value.mean ** 2
    assert first.moment == 1 and second.moment == 2


def test_small_lambda_exponential_moment_is_linear(heat_model, stream):
    model = heat_model(d=1, H=0.75)
    lam = 1e-3
    mean = local_time_moments(model, FRACTIONAL, 1.0, 0.1, 1, n_paths=2_000, n_steps=16, stream=stream).mean
    exp_mean = exp_moment(model, FRACTIONAL, 1.0, 0.1, lam, n_paths=2_000, n_steps=16, stream=stream).mean
    assert (exp_mean - 1.0) / lam == pytest.approx(mean, rel=1e-2)


def test_exponential_moment_respects_smooth_bound(heat_model, stream):
    model = heat_model(d=1, H=0.75)
    bound = exp_moment_bound(model, FRACTIONAL, 1.0, 1.0)
    assert bound == pytest.approx(math.exp((2.0 * math.pi) ** -0.5), rel=1e-12)
    estimate = exp_moment(model, FRACTIONAL, 1.0, 0.1, 1.0, n_paths=2_000, n_steps=16, stream=stream)
    assert estimate.mean <= bound + 3.0 * estimate.stderr


def test_exponential_moments_respect_rough_bound(riesz_model, stream):
    model = riesz_model(d=2, alpha=1.0, H=0.5)
    lambdas = [0.5, 1.0, 2.0]
    estimates = exp_moment_table(model, DIAGONAL, 1.0, 0.05, lambdas, n_paths=2_000, n_steps=32, stream=stream)
    for lam, estimate in zip(lambdas, estimates):
        bound = exp_moment_bound(model, DIAGONAL, 1.0, lam)
        assert math.isfinite(bound)
        assert estimate.mean <= bound + 3.0 * estimate.stderr
    assert estimates[0].mean <= estimates[1].mean <= estimates[2].mean


def test_fractional_exponential_moment_on_the_boundary(riesz_model, stream):
    model = riesz_model(d=3, alpha=1.0, H=0.75)
    t = 1.0
    limit = lambda0(model, t, FRACTIONAL.gamma)
    assert math.isfinite(limit)
    assert math.isinf(exp_moment_bound(model, FRACTIONAL, t, 1.01 * limit))
    lam = 0.5 * limit
    bound = exp_moment_bound(model, FRACTIONAL, t, lam)
    assert bound == pytest.approx(2.0 * model.c_star, rel=1e-9)
    estimate = exp_moment(model, FRACTIONAL, t, 0.1, lam, n_paths=2_000, n_steps=32, stream=stream)
    assert estimate.mean > 1.0
    assert estimate.mean <= bound + 3.0 * estimate.stderr


@pytest.mark.parametrize("eps_list", [(0.1, 0.1), (0.1,), (0.2, -0.1), (0.1, 0.2)])
def test_invalid_eps_lists(eps_list):
    with pytest.raises(InvalidEpsList):
        check_eps_list(eps_list)


def test_convergence_study_rows(riesz_model, stream):
    model = riesz_model(d=2, alpha=1.0, H=0.5)
    rows = convergence_study(model, DIAGONAL, 1.0, [0.4, 0.2, 0.1], n_paths=1_000, n_steps=32, stream=stream)
    assert [row.eps for row in rows] == [0.4, 0.2, 0.1]
    assert rows[0].diff_mean is None
    assert all(row.cauchy_l2 is not None and row.cauchy_l2 >= 0.0 for row in rows[1:])
    assert rows[0].moment1 < rows[1].moment1 < rows[2].moment1
    assert all(row.moment2 >= row.moment1 ** 2 for row in rows)
