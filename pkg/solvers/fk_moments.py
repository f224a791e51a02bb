# solvers/fk_moments.py
"""Feynman-Kac moments of the solution.

E[u_{t,x}^k] = E[prod_j u_0(x + B^j_t) exp(sum_{i<j} L_t^{B^i, B^j})], estimated with
the regularised local time L_{t,eps} on a uniform time grid.
"""
import logging
import math
import warnings
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from exceptions import ConditionViolated, DomainError, RegimeWarning
from mc_engine import Chunk, RngStream, concat_samples, sample_bundle
from models import (ComparisonReport, Estimate, ExtrapolatedMoment, InitialCondition, InitialKind, MomentEstimate,
                    MonotonicityReport, NoiseModel, WeightKind, WeightSpec)
from solvers.chaos import second_moment_series
from solvers.localtime import EXP_CLIP, midpoint_distances, cell_weights, profile_for
from solvers.regime import critical_time_t0

logger = logging.getLogger(__name__)

DEFAULT_CAP_FACTOR = 1e3
AGREEMENT_REL = 0.02


def heat_semigroup(u0: InitialCondition, t: float, x: Sequence[float], n_gauss: int = 20) -> float:
    """p_t u_0(x) by tensor Gauss-Hermite quadrature."""
    if t < 0:
        raise DomainError(f"t must be non-negative, got {t}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if u0.kind is InitialKind.CONSTANT:
        return u0.amplitude
    if t == 0:
        return float(u0.evaluate(x))
    d = x.shape[0]
    nodes, weights = hermegauss(n_gauss)
    weights = weights / math.sqrt(2.0 * math.pi)
    grid = np.stack(np.meshgrid(*([nodes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    grid_weights = np.prod(np.stack(np.meshgrid(*([weights] * d), indexing="ij"), axis=-1).reshape(-1, d), axis=1)
    return float(np.sum(grid_weights * u0.evaluate(x + math.sqrt(t) * grid)))


def regime_note(model: NoiseModel, k: int, t: float) -> str:
    try:
        limit = critical_time_t0(model, k)
    except ConditionViolated as e:
        warnings.warn(f"outside proven regime: {e}", RegimeWarning, stacklevel=3)
        return f"outside proven regime: {e}"
    if t >= limit:
        warnings.warn(f"t={t} >= t0({k})={limit:.4g}", RegimeWarning, stacklevel=3)
        return f"outside proven regime: t >= t0({k}) = {limit:.6g}"
    return "inside proven regime" if math.isinf(limit) else f"inside proven regime: t < t0({k}) = {limit:.6g}"


def fk_samples(model: NoiseModel, u0: InitialCondition, k: int, t: float, x: Sequence[float],
               eps_list: Sequence[float], n_steps: int, n_samples: int, stream: RngStream, workers: int = 1,
               weight: Optional[WeightSpec] = None, chunk_size: int = 32) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sample pairwise exponents and initial-condition products.

    Returns S of shape (n_samples, len(eps_list)) with S = sum_{i<j} L_{t,eps}^{B^i,B^j},
    and P of shape (n_samples,) with P = prod_j u_0(x + B^j_t).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.d,):
        raise DomainError(f"x must be a {model.d}-vector")
    weight = weight or WeightSpec.for_hurst(model.H)
    profiles = [profile_for(model, t, eps) for eps in eps_list]
    weights = cell_weights(weight, t, n_steps)
    pairs = list(combinations(range(k), 2))

    def evaluator(chunk: Chunk) -> np.ndarray:
        out = np.empty((chunk.size, len(profiles) + 1))
        for row, sub in enumerate(chunk.sample_streams()):
            bundle = sample_bundle(sub, k, model.d, t, n_steps)
            totals = np.zeros(len(profiles))
            for i, j in pairs:
                distances = midpoint_distances(bundle.pair(i, j), weight.kind is WeightKind.DIAGONAL)
                totals += [np.sum(weights * profile(distances)) for profile in profiles]
            out[row, :-1] = totals
            out[row, -1] = np.prod(u0.evaluate(x + bundle.values[:, -1, :]))
        return out

    values = concat_samples(n_samples, evaluator, stream, workers=workers, chunk_size=chunk_size)
    return values[:, :-1], values[:, -1]


def _cap(exponents: np.ndarray, factor: Optional[float]) -> Tuple[np.ndarray, int]:
    if factor is None:
        return np.minimum(exponents, EXP_CLIP), 0
    cap = min(math.log(factor) + float(exponents.mean()), EXP_CLIP)
    clipped = int(np.count_nonzero(exponents > cap))
    if clipped:
        logger.warning(f"Clipped {clipped} of {exponents.size} exponents at {cap:.4g}")
    return np.minimum(exponents, cap), clipped


def _estimate(values: np.ndarray) -> Estimate:
    count = values.shape[0]
    se = float(values.std(ddof=1) / math.sqrt(count)) if count > 1 else 0.0
    return Estimate.from_moments(float(values.mean()), se, count)


def fk_moment(model: NoiseModel, u0: InitialCondition, k: int, t: float, x: Sequence[float], eps: float,
              n_steps: int, n_samples: int, stream: RngStream, workers: int = 1,
              exponent_cap_factor: Optional[float] = DEFAULT_CAP_FACTOR) -> MomentEstimate:
    if k < 2:
        raise DomainError(f"k must be >= 2, got {k}")
    if not t > 0 or not eps > 0:
        raise DomainError(f"t and eps must be positive, got t={t}, eps={eps}")
    note = regime_note(model, k, t)
    exponents, products = fk_samples(model, u0, k, t, x, [eps], n_steps, n_samples, stream, workers)
    capped, clipped = _cap(exponents[:, 0], exponent_cap_factor)
    value = _estimate(products * np.exp(capped))
    logger.info(f"E[u^{k}]({t}) = {value.mean:.6g} +- {value.stderr:.2g} at eps={eps}, n_steps={n_steps}")
    return MomentEstimate(k=k, t=t, x=list(np.atleast_1d(x).astype(float)), eps=eps, n_steps=n_steps,
                          n_samples=n_samples, value=value, regime_note=note, clip_count=clipped)


def fk_moment_extrapolated(model: NoiseModel, u0: InitialCondition, k: int, t: float, x: Sequence[float],
                           eps: float, n_steps: int, n_samples: int, stream: RngStream, workers: int = 1,
                           exponent_cap_factor: Optional[float] = DEFAULT_CAP_FACTOR) -> ExtrapolatedMoment:
    """Moments at eps, eps/2, eps/4 on common paths with Richardson extrapolation in eps."""
    regime_note(model, k, t)
    eps_values = [eps, eps / 2.0, eps / 4.0]
    exponents, products = fk_samples(model, u0, k, t, x, eps_values, n_steps, n_samples, stream, workers)
    columns = []
    for col in range(len(eps_values)):
        capped, _ = _cap(exponents[:, col], exponent_cap_factor)
        columns.append(products * np.exp(capped))
    v1, v2, v4 = columns
    return ExtrapolatedMoment(eps_values=eps_values, raw=[_estimate(c) for c in columns],
                              linear=_estimate(2.0 * v2 - v1),
                              quadratic=_estimate((8.0 * v4 - 6.0 * v2 + v1) / 3.0))


def compare_with_chaos(model: NoiseModel, t: float, tail_tol: float, eps: float, n_steps: int, n_samples: int,
                       stream: RngStream, n_max: int = 12, workers: int = 1, n_time_samples: int = 2_000,
                       n_spectral_samples: int = 64) -> ComparisonReport:
    """E|u_{t,x}|^2 for u_0 = 1 by the Feynman-Kac route and by the chaos series."""
    series = second_moment_series(model, t, n_max=n_max, tail_tol=tail_tol, stream=stream.named("series"),
                                  workers=workers, n_time_samples=n_time_samples,
                                  n_spectral_samples=n_spectral_samples)
    extrapolated = fk_moment_extrapolated(model, InitialCondition(), 2, t, [0.0] * model.d, eps, n_steps,
                                          n_samples, stream.named("fk"), workers)
    fk = extrapolated.linear
    if not series.converged:
        return ComparisonReport(t=t, fk=fk, fk_raw=extrapolated.raw, series=series.value, tail=series.tail_bound,
                                truncation_order=series.truncation_order, agree=False,
                                reason=f"chaos series did not converge: {series.reason}")
    joint_se = math.sqrt(fk.stderr ** 2 + series.stderr ** 2)
    tolerance = max(3.0 * joint_se, AGREEMENT_REL * series.value) + series.tail_bound
    gap = abs(fk.mean - series.value)
    agree = gap <= tolerance
    reason = None if agree else f"|fk - series| = {gap:.4g} exceeds {tolerance:.4g}"
    logger.info(f"Second moment at t={t}: Feynman-Kac {fk.mean:.6g}, chaos {series.value:.6g}, agree={agree}")
    return ComparisonReport(t=t, fk=fk, fk_raw=extrapolated.raw, series=series.value, tail=series.tail_bound,
                            truncation_order=series.truncation_order, agree=agree, reason=reason)


def monotonicity_study(model: NoiseModel, t_grid: Sequence[float], k_list: Sequence[int], eps: float, n_steps: int,
                       n_samples: int, stream: RngStream, workers: int = 1) -> MonotonicityReport:
    """Per-sample checks that exp(sum of pairwise local times) grows with k and with t
    on common path bundles, for u_0 = 1.

    ``t_grid`` is snapped to the grid of the largest time with ``n_steps`` cells.
    """
    t_grid = sorted(float(v) for v in t_grid)
    k_list = sorted(int(k) for k in k_list)
    if k_list[0] < 2:
        raise DomainError("k values must be >= 2")
    t_max, k_max = t_grid[-1], k_list[-1]
    weight = WeightSpec.for_hurst(model.H)
    dt = t_max / n_steps
    steps = [max(1, int(round(v / dt))) for v in t_grid]
    profile = profile_for(model, t_max, eps)
    weights = cell_weights(weight, t_max, n_steps)
    diagonal = weight.kind is WeightKind.DIAGONAL

    def evaluator(chunk: Chunk) -> np.ndarray:
        out = np.empty((chunk.size, len(k_list), len(steps)))
        for row, sub in enumerate(chunk.sample_streams()):
            bundle = sample_bundle(sub, k_max, model.d, t_max, n_steps)
            pair_values = {}
            for i, j in combinations(range(k_max), 2):
                kernel_values = profile(midpoint_distances(bundle.pair(i, j), diagonal))
                # cell weights on [0, t'] coincide with the leading block of those on [0, t]
                pair_values[(i, j)] = [np.sum(weights[:m] * kernel_values[:m]) if diagonal
                                       else np.sum(weights[:m, :m] * kernel_values[:m, :m]) for m in steps]
            for a, k in enumerate(k_list):
                out[row, a] = np.sum([pair_values[pair] for pair in combinations(range(k), 2)], axis=0)
        return out.reshape(chunk.size, -1)

    flat = concat_samples(n_samples, evaluator, stream, workers=workers, chunk_size=32)
    exponents = flat.reshape(n_samples, len(k_list), len(steps))
    tolerance = 1e-12
    violations_k = int(np.count_nonzero(np.diff(exponents, axis=1) < -tolerance))
    violations_t = int(np.count_nonzero(np.diff(exponents, axis=2) < -tolerance))
    means = {f"k={k},t={steps[b] * dt:g}": float(np.mean(np.exp(np.minimum(exponents[:, a, b], EXP_CLIP))))
             for a, k in enumerate(k_list) for b in range(len(steps))}
    return MonotonicityReport(t_grid=[m * dt for m in steps], k_list=list(k_list), means=means,
                              violations_k=violations_k, violations_t=violations_t, n_samples=n_samples)
