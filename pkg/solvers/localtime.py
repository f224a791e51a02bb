# solvers/localtime.py
"""Regularised weighted intersection local time of two independent Brownian motions.

L_{t,eps}(eta) = int_0^t int_0^t eta(r, s) (p_eps * f)(B^1_r - B^2_s) dr ds, with the
diagonal weight eta = delta(r - s) when H = 1/2.
"""
import functools
import logging
import math
import warnings
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from exceptions import DomainError, GridMismatch, InvalidEpsList, RegimeWarning, SingularPoint, Unsupported
from mc_engine import Chunk, PathBundle, RngStream, concat_samples, sample_bundle
from models import ConvergenceRow, Estimate, LocalTimeEstimate, NoiseModel, WeightKind, WeightSpec
from solvers.analytic import fractional_cell_weights, phi_series
from solvers.chaos import bound_rate
from solvers.kernels import RadialProfile, bound_constants, mollified_radial

logger = logging.getLogger(__name__)

EXP_CLIP = 700.0
WEIGHT_NORM_GRID = 2001


# --- Weights ---

def _window(horizon: float, s: np.ndarray, delta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Edges of the increment window [t - s - delta, t - s], clamped at 0."""
    upper = np.maximum(horizon - s, 0.0)
    lower = np.maximum(horizon - s - delta, 0.0)
    return lower, upper


def mollified_weight(w: WeightSpec, s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    """delta^{-2} E[(beta_{t-s1} - beta_{t-s1-delta})(beta_{t-s2} - beta_{t-s2-delta})]
    for a fractional Brownian motion beta of index H, vectorised over s1 and s2."""
    s1, s2 = np.broadcast_arrays(np.asarray(s1, dtype=float), np.asarray(s2, dtype=float))
    a, b = _window(w.horizon, s1, w.delta)
    c, d = _window(w.horizon, s2, w.delta)
    p = 2.0 * w.H
    cov = 0.5 * (np.abs(b - c) ** p - np.abs(a - c) ** p - np.abs(b - d) ** p + np.abs(a - d) ** p)
    return cov / (w.delta * w.delta)


def eval_weight(w: WeightSpec, r: float, s: float) -> float:
    if w.kind is WeightKind.FRACTIONAL:
        if r == s:
            raise SingularPoint("the fractional weight is singular on the diagonal")
        return w.alpha_H * abs(r - s) ** (2.0 * w.H - 2.0)
    if w.kind is WeightKind.DIAGONAL:
        raise Unsupported("the diagonal weight is a measure on r = s and has no pointwise value")
    return float(mollified_weight(w, np.asarray(r), np.asarray(s)))


def weight_norm(w: WeightSpec, t: float) -> float:
    """||eta||_{1,t} = sup_{s in [0,t]} int_0^t eta(r, s) dr."""
    if w.kind is WeightKind.DIAGONAL:
        return 1.0
    if w.kind is WeightKind.FRACTIONAL:
        # the sup is attained at s = t/2
        return 2.0 * w.H * (t / 2.0) ** (2.0 * w.H - 1.0)
    grid = np.linspace(0.0, t, WEIGHT_NORM_GRID)
    values = mollified_weight(w, grid[:, None], grid[None, :])
    return float(np.max(np.abs(integrate.trapezoid(values, grid, axis=0))))


@functools.lru_cache(maxsize=32)
def _cell_weights(w: WeightSpec, t: float, n_steps: int) -> np.ndarray:
    edges = np.linspace(0.0, t, n_steps + 1)
    if w.kind is WeightKind.DIAGONAL:
        weights = np.full(n_steps, t / n_steps)
    elif w.kind is WeightKind.FRACTIONAL:
        weights = fractional_cell_weights(edges, edges, w.H)
    else:
        mid = 0.5 * (edges[:-1] + edges[1:])
        weights = mollified_weight(w, mid[:, None], mid[None, :]) * (t / n_steps) ** 2
    weights.setflags(write=False)
    return weights


def cell_weights(w: WeightSpec, t: float, n_steps: int) -> np.ndarray:
    """Weights of the grid cells: exact integrals of the fractional weight, a midpoint
    rule for the mollified weight and the cell lengths for the diagonal weight."""
    return _cell_weights(w, float(t), int(n_steps))


# --- Path functional ---

def midpoint_distances(paths: PathBundle, diagonal: bool) -> np.ndarray:
    mid = 0.5 * (paths.values[:, 1:, :] + paths.values[:, :-1, :])
    if diagonal:
        return np.linalg.norm(mid[0] - mid[1], axis=-1)
    return np.linalg.norm(mid[0][:, None, :] - mid[1][None, :, :], axis=-1)


def profile_for(model: NoiseModel, t: float, eps: float) -> RadialProfile:
    return mollified_radial(model.kernel, float(eps), round(8.0 * math.sqrt(2.0 * t * model.d), 6))


def local_time_on_paths(model: NoiseModel, w: WeightSpec, paths: PathBundle, eps: float,
                        profile: Optional[RadialProfile] = None) -> float:
    if paths.k != 2:
        raise GridMismatch(f"expected a bundle of two paths, got {paths.k}")
    if paths.d != model.d:
        raise GridMismatch(f"paths live in dimension {paths.d}, the model in {model.d}")
    if w.kind is WeightKind.MOLLIFIED and not math.isclose(w.horizon, paths.t):
        raise GridMismatch(f"mollified weight horizon {w.horizon} differs from the path horizon {paths.t}")
    profile = profile or profile_for(model, paths.t, eps)
    weights = cell_weights(w, paths.t, paths.n_steps)
    distances = midpoint_distances(paths, w.kind is WeightKind.DIAGONAL)
    return float(np.sum(weights * profile(distances)))


def local_time_samples(model: NoiseModel, w: WeightSpec, t: float, eps_list: Sequence[float], n_paths: int,
                       n_steps: int, stream: RngStream, workers: int = 1, chunk_size: int = 64) -> np.ndarray:
    """L_{t,eps} for every eps on the same path pairs; shape (n_paths, len(eps_list)).

    Pair i is drawn from substream i, so a sample does not depend on chunking or workers.
    """
    profiles = [profile_for(model, t, eps) for eps in eps_list]
    weights = cell_weights(w, t, n_steps)
    diagonal = w.kind is WeightKind.DIAGONAL

    def evaluator(chunk: Chunk) -> np.ndarray:
        out = np.empty((chunk.size, len(profiles)))
        for row, sub in enumerate(chunk.sample_streams()):
            distances = midpoint_distances(sample_bundle(sub, 2, model.d, t, n_steps), diagonal)
            for col, profile in enumerate(profiles):
                out[row, col] = np.sum(weights * profile(distances))
        return out

    return concat_samples(n_paths, evaluator, stream, workers=workers, chunk_size=chunk_size)


def _estimate(values: np.ndarray) -> Estimate:
    count = values.shape[0]
    se = float(values.std(ddof=1) / math.sqrt(count)) if count > 1 else 0.0
    return Estimate.from_moments(float(values.mean()), se, count)


def local_time_moment_estimates(model: NoiseModel, w: WeightSpec, t: float, eps: float, orders: Sequence[int],
                                n_paths: int, n_steps: int, stream: RngStream, workers: int = 1) -> List[LocalTimeEstimate]:
    samples = local_time_samples(model, w, t, [eps], n_paths, n_steps, stream, workers)[:, 0]
    results = []
    for n in orders:
        if n < 1:
            raise DomainError(f"moment order must be >= 1, got {n}")
        results.append(LocalTimeEstimate(eps=eps, t=t, moment=n, value=_estimate(samples ** n),
                                         n_steps=n_steps, weight=w))
    return results


def local_time_moments(model: NoiseModel, w: WeightSpec, t: float, eps: float, n: int, n_paths: int,
                       n_steps: int, stream: RngStream, workers: int = 1) -> Estimate:
    """Monte Carlo estimate of E[L_{t,eps}^n]."""
    return local_time_moment_estimates(model, w, t, eps, [n], n_paths, n_steps, stream, workers)[0].value


# --- Exponential moments ---

def exp_moment_bound(model: NoiseModel, w: WeightSpec, t: float, lam: float) -> float:
    """Upper bound of E exp(lam L_t).

    Weights dominated by gamma |r - s|^{2H-2} use the coefficient bounds scaled by
    gamma/alpha_H; the diagonal and mollified weights use the ||eta||_{1,t} bound.
    """
    kernel = model.kernel
    constants = bound_constants(kernel)
    p = kernel.codim
    if w.kind is WeightKind.FRACTIONAL:
        scale = w.gamma / w.alpha_H
        if not kernel.is_rough:
            return math.exp(min(lam * constants.C_alpha_d * w.gamma * t ** (2.0 * w.H) / w.alpha_H, EXP_CLIP))
        rate = bound_rate(model, t) * scale
        return model.c_star * phi_series(lam * rate, 1.0 - 0.5 * p)
    norm = weight_norm(w, t)
    if not kernel.is_rough:
        return math.exp(min(lam * constants.C_alpha_d * norm * t, EXP_CLIP))
    if not p < 2.0:
        return math.inf
    a = 1.0 - 0.5 * p
    rate = constants.D_alpha_d * 2.0 ** (-0.5 * p) * norm * math.gamma(a) * a ** (-a) * t ** a
    return model.c_star * phi_series(lam * rate, a)


def _warn_outside_lambda0(model: NoiseModel, w: WeightSpec, t: float, lambdas: Sequence[float]) -> None:
    if w.kind is not WeightKind.FRACTIONAL or not model.kernel.is_rough:
        return
    from solvers.regime import lambda0

    try:
        limit = lambda0(model, t, w.gamma)
    except Unsupported:
        return
    for lam in lambdas:
        if lam >= limit:
            warnings.warn(f"lambda={lam} >= lambda0(t)={limit:.4g}: the exponential moment may be infinite",
                          RegimeWarning, stacklevel=3)


def exp_moment_table(model: NoiseModel, w: WeightSpec, t: float, eps: float, lambdas: Sequence[float],
                     n_paths: int, n_steps: int, stream: RngStream, workers: int = 1) -> List[Estimate]:
    """E[exp(lam L_{t,eps})] for several lam on the same path pairs."""
    _warn_outside_lambda0(model, w, t, lambdas)
    samples = local_time_samples(model, w, t, [eps], n_paths, n_steps, stream, workers)[:, 0]
    return [_estimate(np.exp(np.minimum(lam * samples, EXP_CLIP))) for lam in lambdas]


def exp_moment(model: NoiseModel, w: WeightSpec, t: float, eps: float, lam: float, n_paths: int, n_steps: int,
               stream: RngStream, workers: int = 1) -> Estimate:
    return exp_moment_table(model, w, t, eps, [lam], n_paths, n_steps, stream, workers)[0]


# --- eps -> 0 ---

def check_eps_list(eps_list: Sequence[float]) -> None:
    if len(eps_list) < 2:
        raise InvalidEpsList("eps_list needs at least two entries")
    if any(not e > 0 for e in eps_list):
        raise InvalidEpsList("eps values must be positive")
    if any(not b < a for a, b in zip(eps_list, eps_list[1:])):
        raise InvalidEpsList(f"eps_list must be strictly decreasing, got {list(eps_list)}")


def convergence_study(model: NoiseModel, w: WeightSpec, t: float, eps_list: Sequence[float], n_paths: int,
                      n_steps: int, stream: RngStream, workers: int = 1) -> List[ConvergenceRow]:
    """First and second moments per eps on common path pairs, with the successive
    differences L_{eps_i} - L_{eps_{i-1}} as an L^2 Cauchy diagnostic."""
    check_eps_list(eps_list)
    samples = local_time_samples(model, w, t, eps_list, n_paths, n_steps, stream, workers)
    rows = []
    for col, eps in enumerate(eps_list):
        first, second = _estimate(samples[:, col]), _estimate(samples[:, col] ** 2)
        row = ConvergenceRow(eps=eps, moment1=first.mean, se1=first.stderr, moment2=second.mean, se2=second.stderr)
        if col > 0:
            diff = samples[:, col] - samples[:, col - 1]
            diff_estimate = _estimate(diff)
            row = row.model_copy(update={"diff_mean": diff_estimate.mean, "diff_se": diff_estimate.stderr,
                                         "diff_min": float(diff.min()),
                                         "cauchy_l2": float(math.sqrt(np.mean(diff * diff)))})
        rows.append(row)
        logger.debug(f"eps={eps}: E L={first.mean:.6g} +- {first.stderr:.2g}")
    return rows
