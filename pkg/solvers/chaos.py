# solvers/chaos.py
"""Chaos-expansion building blocks.

psi^{(n)}(s, t) = (2 pi)^{-nd} int exp(-1/2 sum_jk sigma_jk xi_j.xi_k) prod g(xi_j) d xi_j
with sigma_jk = s_j ^ s_k + t_j ^ t_k, the coefficients alpha_n(t) obtained by
integrating psi^{(n)} against the fractional time weight, their upper bounds and
the second-moment series E|u_{t,x}|^2 = sum_n alpha_n(t) / n! for u_0 = 1.
"""
import itertools
import logging
import math
import warnings
from enum import Enum
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import integrate, special

from exceptions import (ConditionViolated, DomainError, NumericalFailure, Unsupported,
                        VarianceWarning)
from mc_engine import DEFAULT_CHUNK_SIZE, Chunk, RngStream, parallel_reduce
from models import (ChaosCoefficient, CoefficientMode, Estimate, KernelFamily, KernelSpec, NoiseModel,
                    SeriesResult, SigmaMatrix, TimePair)
from solvers.analytic import check_quad
from solvers.kernels import bound_constants, density_radial, mixture_rule, mollified_at_origin

logger = logging.getLogger(__name__)

MAX_MIXTURE_POINTS = 1 << 20
MIXTURE_BLOCK = 1 << 15
MAX_REJECTION_ROUNDS = 10_000
MAX_TAIL_TERMS = 4_000
MIN_ESS_FRACTION = 0.01
EXP_CLIP = 700.0


class PsiMethod(str, Enum):
    CLOSED1 = "closed1"
    MC = "mc"
    MIXTURE = "mixture"


class AlphaMethod(str, Enum):
    QUADRATURE = "quadrature"
    MC = "mc"


class BoundForm(str, Enum):
    ASYMPTOTIC = "asymptotic"
    SIMPLEX = "simplex"


# --- Covariance of the time pairs ---

def _check_psd(sigma: np.ndarray) -> None:
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DomainError(f"sigma must be a square matrix, got shape {sigma.shape}")
    if not np.allclose(sigma, sigma.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(sigma).max()))):
        raise DomainError("sigma must be symmetric")
    floor = -1e-12 * max(float(np.trace(sigma)), 1e-300)
    if float(np.linalg.eigvalsh(sigma).min()) < floor:
        raise DomainError("sigma is not positive semidefinite")


def _sigma_from_times(s: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Batched sigma for time arrays of shape (..., n)."""
    return (np.minimum(s[..., :, None], s[..., None, :])
            + np.minimum(u[..., :, None], u[..., None, :]))


def sigma_matrix(tp: TimePair) -> SigmaMatrix:
    sigma = _sigma_from_times(np.asarray(tp.s, dtype=float), np.asarray(tp.tvec, dtype=float))
    _check_psd(sigma)
    return SigmaMatrix(entries=sigma.tolist())


# --- Spectral sampling ---

def _directions(rng: np.random.Generator, size: int, d: int) -> np.ndarray:
    g = rng.standard_normal((size, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sample_spectral(kernel: KernelSpec, a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw of xi per entry of ``a`` from the density proportional to
    exp(-a |xi|^2 / 2) g(xi); returns shape ``a.shape + (d,)``."""
    a = np.asarray(a, dtype=float)
    flat = a.reshape(-1)
    size, d = flat.shape[0], kernel.d
    if kernel.family is KernelFamily.HEAT:
        xi = rng.standard_normal((size, d)) / np.sqrt(flat + kernel.alpha)[:, None]
    elif kernel.family is KernelFamily.RIESZ:
        radius = np.sqrt(2.0 * rng.standard_gamma(0.5 * (d - kernel.alpha), size) / flat)
        xi = _directions(rng, size, d) * radius[:, None]
    else:
        # g <= 1 for Bessel and Poisson, so a Gaussian envelope with acceptance g(|xi|) is exact
        xi = np.empty((size, d))
        pending = np.arange(size)
        for _ in range(MAX_REJECTION_ROUNDS):
            if pending.size == 0:
                break
            candidate = rng.standard_normal((pending.size, d)) / np.sqrt(flat[pending])[:, None]
            accept = rng.random(pending.size) < density_radial(kernel, np.linalg.norm(candidate, axis=1))
            xi[pending[accept]] = candidate[accept]
            pending = pending[~accept]
        else:
            raise NumericalFailure(f"rejection sampler for {kernel.label()} left {pending.size} draws pending")
    return xi.reshape(a.shape + (d,))


def _cross_weights(sigma: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """exp(-1/2 sum_{j != k} sigma_jk xi_j.xi_k) for sigma (B, n, n) and xi (B, S, n, d)."""
    off = sigma - np.einsum("bjj->bj", sigma)[..., None] * np.eye(sigma.shape[-1])
    gram = np.einsum("bsjd,bskd->bsjk", xi, xi)
    exponent = -0.5 * np.einsum("bjk,bsjk->bs", off, gram)
    return np.exp(np.minimum(exponent, EXP_CLIP))


# --- psi^{(n)} ---

def _psi_heat(kernel: KernelSpec, sigma: np.ndarray, eps: float) -> np.ndarray:
    n, d = sigma.shape[-1], kernel.d
    _, logdet = np.linalg.slogdet(sigma + (kernel.alpha + eps) * np.eye(n))
    return np.exp(-0.5 * n * d * math.log(2.0 * math.pi) - 0.5 * d * logdet)


def _mixture_size(n: int, m: int) -> int:
    if m ** n <= MAX_MIXTURE_POINTS:
        return m
    reduced = max(4, int(MAX_MIXTURE_POINTS ** (1.0 / n)))
    logger.warning(f"Mixture rule with {m}^{n} nodes is too large; using {reduced} nodes per coordinate")
    return reduced


def _psi_mixture(kernel: KernelSpec, sigma: np.ndarray, eps: float, m: int) -> float:
    n, d = sigma.shape[0], kernel.d
    if kernel.family is KernelFamily.HEAT:
        return float(_psi_heat(kernel, sigma, eps))
    nodes, weights = mixture_rule(kernel, _mixture_size(n, m))
    m_eff = nodes.shape[0]
    base = sigma + eps * np.eye(n)
    grid = np.indices((m_eff,) * n).reshape(n, -1).T
    total = 0.0
    for start in range(0, grid.shape[0], MIXTURE_BLOCK):
        idx = grid[start:start + MIXTURE_BLOCK]
        w = nodes[idx]
        mats = base[None, :, :] + 2.0 * w[:, :, None] * np.eye(n)[None, :, :]
        _, logdet = np.linalg.slogdet(mats)
        total += float(np.sum(np.prod(weights[idx], axis=1) * np.exp(-0.5 * d * logdet)))
    return (2.0 * math.pi) ** (-0.5 * n * d) * total


def _psi_mixture_batch(kernel: KernelSpec, sigma: np.ndarray, eps: float, m: int) -> np.ndarray:
    """psi for a batch of matrices (B, n, n) by looping over the node grid."""
    n, d = sigma.shape[-1], kernel.d
    if kernel.family is KernelFamily.HEAT:
        return _psi_heat(kernel, sigma, eps)
    nodes, weights = mixture_rule(kernel, _mixture_size(n, m))
    eye = np.eye(n)
    base = sigma + eps * eye
    total = np.zeros(sigma.shape[0])
    for combo in itertools.product(range(nodes.shape[0]), repeat=n):
        combo = list(combo)
        _, logdet = np.linalg.slogdet(base + 2.0 * np.diag(nodes[combo]))
        total += float(np.prod(weights[combo])) * np.exp(-0.5 * d * logdet)
    return (2.0 * math.pi) ** (-0.5 * n * d) * total


def _psi_mc(kernel: KernelSpec, sigma: np.ndarray, eps: float, n_samples: int, stream: RngStream,
            workers: int, chunk_size: int) -> Estimate:
    n = sigma.shape[0]
    a = np.diag(sigma) + eps
    prefactor = float(np.prod(mollified_at_origin(kernel, a)))

    def evaluator(chunk: Chunk) -> np.ndarray:
        rng = chunk.generator()
        xi = sample_spectral(kernel, np.broadcast_to(a, (chunk.size, n)), rng)
        return _cross_weights(sigma[None], xi[None])[0]

    stats = parallel_reduce(n_samples, evaluator, stream, workers=workers, chunk_size=chunk_size)
    mean, variance = float(stats.mean), float(stats.variance)
    if n > 1 and mean > 0 and not math.isnan(variance):
        ess_fraction = mean * mean / (mean * mean + variance)
        if ess_fraction < MIN_ESS_FRACTION:
            warnings.warn(f"psi importance weights have effective sample fraction {ess_fraction:.3g}",
                          VarianceWarning, stacklevel=3)
    se = float(stats.stderr)
    return Estimate.from_moments(prefactor * mean, prefactor * (0.0 if math.isnan(se) else se), stats.count)


def psi_from_sigma(kernel: KernelSpec, sigma: Union[np.ndarray, SigmaMatrix],
                   method: Union[str, PsiMethod] = PsiMethod.MIXTURE, eps: float = 0.0,
                   n_samples: int = 100_000, stream: Optional[RngStream] = None, workers: int = 1,
                   mixture_nodes: int = 32, chunk_size: int = DEFAULT_CHUNK_SIZE) -> Estimate:
    """psi for an arbitrary positive semidefinite sigma; ``eps`` adds the e^{-eps|xi|^2/2} damping."""
    sigma = sigma.array if isinstance(sigma, SigmaMatrix) else np.asarray(sigma, dtype=float)
    _check_psd(sigma)
    if eps < 0:
        raise DomainError(f"eps must be non-negative, got {eps}")
    method = PsiMethod(method)
    n = sigma.shape[0]
    if method is PsiMethod.CLOSED1:
        if n != 1:
            raise Unsupported(f"the closed form covers n = 1 only, got n = {n}")
        return Estimate.exact(float(mollified_at_origin(kernel, sigma[0, 0] + eps)))
    if method is PsiMethod.MIXTURE:
        return Estimate.exact(_psi_mixture(kernel, sigma, eps, mixture_nodes))
    if stream is None:
        raise DomainError("the Monte Carlo method requires an RNG stream")
    return _psi_mc(kernel, sigma, eps, n_samples, stream, workers, chunk_size)


def psi_n(model: NoiseModel, tp: TimePair, method: Union[str, PsiMethod] = PsiMethod.CLOSED1,
          eps: float = 0.0, **kwargs) -> Estimate:
    return psi_from_sigma(model.kernel, sigma_matrix(tp), method=method, eps=eps, **kwargs)


def psi_pointwise_bound(model: NoiseModel, tp: TimePair) -> float:
    """Upper bound of psi^{(n)}(s, t) uniform in the kernel's spatial variable.

    Rough kernels: (D 2^{-p/2})^n [beta(s) beta(t)]^{-p/4} with beta(s) the product
    of consecutive gaps of the sorted times, the first gap taken from 0.
    Smooth kernels: C^n.
    """
    kernel = model.kernel
    constants = bound_constants(kernel)
    n = tp.n
    if not kernel.is_rough:
        return constants.C_alpha_d ** n
    p = kernel.codim

    def log_beta(times: List[float]) -> float:
        ordered = np.sort(np.asarray(times, dtype=float))
        gaps = np.diff(np.concatenate([[0.0], ordered]))
        if np.any(gaps <= 0):
            return -math.inf
        return float(np.sum(np.log(gaps)))

    exponent = log_beta(tp.s) + log_beta(tp.tvec)
    if math.isinf(exponent):
        return math.inf
    return math.exp(n * (math.log(constants.D_alpha_d) - 0.5 * p * math.log(2.0)) - 0.25 * p * exponent)


# --- alpha_n(t) ---

def _sample_times(rng: np.random.Generator, size: int, n: int, t: float, H: float) -> Tuple[np.ndarray, np.ndarray]:
    """Time pairs with density proportional to |s - u|^{2H-2} on [0, t]^2 (diagonal when H = 1/2)."""
    if H == 0.5:
        s = rng.random((size, n)) * t
        return s, s.copy()
    delta = t * rng.beta(2.0 * H - 1.0, 2.0, (size, n))
    lower = rng.random((size, n)) * (t - delta)
    upper = lower + delta
    flip = rng.random((size, n)) < 0.5
    return np.where(flip, upper, lower), np.where(flip, lower, upper)


def _psi_batch(kernel: KernelSpec, sigma: np.ndarray, eps: float, rng: np.random.Generator,
               n_spectral: int) -> np.ndarray:
    n = sigma.shape[-1]
    a = np.einsum("bjj->bj", sigma) + eps
    if n == 1:
        return mollified_at_origin(kernel, a[:, 0])
    if kernel.family is KernelFamily.HEAT:
        return _psi_heat(kernel, sigma, eps)
    prefactor = np.prod(mollified_at_origin(kernel, a), axis=1)
    xi = sample_spectral(kernel, np.repeat(a[:, None, :], n_spectral, axis=1), rng)
    return prefactor * _cross_weights(sigma, xi).mean(axis=1)


def _alpha_mc(model: NoiseModel, n: int, t: float, eps: float, n_time_samples: int, n_spectral_samples: int,
              stream: RngStream, workers: int, chunk_size: int) -> Estimate:
    kernel, H = model.kernel, model.H
    scale = t ** (2.0 * H * n)

    def evaluator(chunk: Chunk) -> np.ndarray:
        rng = chunk.generator()
        s, u = _sample_times(rng, chunk.size, n, t, H)
        return scale * _psi_batch(kernel, _sigma_from_times(s, u), eps, rng, n_spectral_samples)

    stats = parallel_reduce(n_time_samples, evaluator, stream, workers=workers, chunk_size=chunk_size)
    return stats.to_estimate()


def _alpha1_quad(model: NoiseModel, t: float, eps: float, rel_tol: float) -> float:
    kernel, H = model.kernel, model.H

    def psi1(total: float) -> float:
        return float(mollified_at_origin(kernel, total + eps))

    if H == 0.5:
        value, abserr = integrate.quad(lambda s: psi1(2.0 * s), 0.0, t, epsabs=0.0, epsrel=rel_tol, limit=200)
        return check_quad(value, abserr, max(rel_tol, 1e-7), "alpha_1 (Brownian time)")

    def inner(delta: float) -> float:
        value, _ = integrate.quad(lambda lower: psi1(2.0 * lower + delta), 0.0, t - delta,
                                  epsabs=0.0, epsrel=rel_tol, limit=200)
        return value

    outer, abserr = integrate.quad(inner, 0.0, t, weight="alg", wvar=(2.0 * H - 2.0, 0.0),
                                   epsabs=0.0, epsrel=rel_tol, limit=200)
    check_quad(outer, abserr, max(rel_tol, 1e-7), "alpha_1 (fractional time)")
    return 2.0 * model.alpha_H * outer


def _legendre01(q: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = special.roots_legendre(q)
    return 0.5 * (x + 1.0), 0.5 * w


def _alpha2_quad(model: NoiseModel, t: float, eps: float, q: int, mixture_nodes: int) -> float:
    """alpha_2 by tensor Gauss rules: Gauss-Jacobi in the gap |s_j - u_j| carrying the
    |.|^{2H-2} weight and Gauss-Legendre in the lower endpoint."""
    kernel, H = model.kernel, model.H
    v, wv = _legendre01(q)
    if H == 0.5:
        # s = t v^2 clusters nodes near the origin where rough kernels blow up
        times = t * v * v
        weights = 2.0 * t * v * wv
        s1, s2 = np.meshgrid(times, times, indexing="ij")
        w12 = np.outer(weights, weights).reshape(-1)
        s = np.stack([s1.reshape(-1), s2.reshape(-1)], axis=1)
        psi = _psi_mixture_batch(kernel, _sigma_from_times(s, s), eps, mixture_nodes)
        return float(np.sum(w12 * psi))

    x, wx = special.roots_jacobi(q, 0.0, 2.0 * H - 2.0)
    delta = 0.5 * t * (1.0 + x)
    delta_weights = wx * (0.5 * t) ** (2.0 * H - 1.0)
    # one coordinate: (gap, lower-endpoint) nodes with combined weight
    gap = np.repeat(delta, q)
    lower = (t - gap) * np.tile(v, q)
    node_weights = np.repeat(delta_weights, q) * (t - gap) * np.tile(wv, q)
    i, j = np.meshgrid(np.arange(gap.size), np.arange(gap.size), indexing="ij")
    i, j = i.reshape(-1), j.reshape(-1)
    weights = node_weights[i] * node_weights[j]
    total = 0.0
    # psi is invariant under swapping s and u, so orientations (+,+) and (+,-) cover all four
    for sign in (1.0, -1.0):
        s = np.stack([lower[i] + gap[i], lower[j] + (gap[j] if sign > 0 else 0.0)], axis=1)
        u = np.stack([lower[i], lower[j] + (0.0 if sign > 0 else gap[j])], axis=1)
        psi = _psi_mixture_batch(kernel, _sigma_from_times(s, u), eps, mixture_nodes)
        total += 2.0 * float(np.sum(weights * psi))
    return model.alpha_H ** 2 * total


def alpha_n(model: NoiseModel, n: int, t: float, method: Union[str, AlphaMethod] = AlphaMethod.MC,
            eps: float = 0.0, n_time_samples: int = 2_000, n_spectral_samples: int = 64,
            stream: Optional[RngStream] = None, workers: int = 1, time_nodes: int = 12,
            mixture_nodes: int = 16, rel_tol: float = 1e-8, chunk_size: int = 64) -> ChaosCoefficient:
    """alpha_n(t) = alpha_H^n int_{[0,t]^{2n}} prod |s_j - u_j|^{2H-2} psi^{(n)}(s, u) ds du
    (the diagonal n-dimensional integral when H = 1/2)."""
    if n < 0:
        raise DomainError(f"n must be non-negative, got {n}")
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    if n == 0:
        return ChaosCoefficient(n=0, value=Estimate.exact(1.0), upper_bound=1.0, mode=CoefficientMode.EXACT)
    method = AlphaMethod(method)
    try:
        upper = alpha_n_bound(model, n, t)
    except ConditionViolated:
        upper = None

    if method is AlphaMethod.QUADRATURE:
        if n > 2:
            raise Unsupported(f"quadrature covers n <= 2, got n = {n}")
        if n == 1:
            value = _alpha1_quad(model, t, eps, rel_tol)
        else:
            value = _alpha2_quad(model, t, eps, time_nodes, mixture_nodes)
        return ChaosCoefficient(n=n, value=Estimate.exact(value), upper_bound=upper, mode=CoefficientMode.EXACT)

    if stream is None:
        raise DomainError("the Monte Carlo method requires an RNG stream")
    estimate = _alpha_mc(model, n, t, eps, n_time_samples, n_spectral_samples, stream, workers, chunk_size)
    logger.debug(f"alpha_{n}({t}) = {estimate.mean:.6g} +- {estimate.stderr:.2g} for {model.kernel.label()}, H={model.H}")
    return ChaosCoefficient(n=n, value=estimate, upper_bound=upper, mode=CoefficientMode.MC)


# --- Upper bounds ---

def bound_rate(model: NoiseModel, t: float) -> float:
    """Per-order growth factor of the coefficient bound.

    Rough: D 2^{-p/2} beta_H^2 Gamma(1 - p/(4H))^{2H} (1 - p/(4H))^{-(2H - p/2)} t^{2H - p/2}.
    Smooth: C t^{2H}.
    """
    kernel, H = model.kernel, model.H
    constants = bound_constants(kernel)
    if not kernel.is_rough:
        return constants.C_alpha_d * t ** (2.0 * H)
    p = kernel.codim
    if not H > p / 4.0:
        raise ConditionViolated(f"the bound requires H > (d - alpha)/4 = {p / 4.0:g}, got H = {H}")
    a = 1.0 - p / (4.0 * H)
    return (constants.D_alpha_d * 2.0 ** (-0.5 * p) * model.beta_H ** 2 * math.gamma(a) ** (2.0 * H)
            * a ** (-(2.0 * H - 0.5 * p)) * t ** (2.0 * H - 0.5 * p))


def _log_bound(model: NoiseModel, n: int, t: float, form: BoundForm) -> float:
    kernel, H = model.kernel, model.H
    if not kernel.is_rough:
        return n * math.log(bound_rate(model, t))
    p = kernel.codim
    if form is BoundForm.ASYMPTOTIC:
        return math.log(model.c_star) + n * math.log(bound_rate(model, t)) + 0.5 * p * special.gammaln(n + 1.0)
    if not H > p / 4.0:
        raise ConditionViolated(f"the bound requires H > (d - alpha)/4 = {p / 4.0:g}, got H = {H}")
    a = 1.0 - p / (4.0 * H)
    log_simplex = n * special.gammaln(a) - special.gammaln(n * a + 1.0) + n * a * math.log(t)
    base = math.log(bound_constants(kernel).D_alpha_d) - 0.5 * p * math.log(2.0) + 2.0 * math.log(model.beta_H)
    return n * base + 2.0 * H * special.gammaln(n + 1.0) + 2.0 * H * log_simplex


def alpha_n_bound(model: NoiseModel, n: int, t: float, form: Union[str, BoundForm] = BoundForm.ASYMPTOTIC) -> float:
    if n < 0:
        raise DomainError(f"n must be non-negative, got {n}")
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    if n == 0:
        return 1.0
    return math.exp(_log_bound(model, n, t, BoundForm(form)))


def _series_tail(model: NoiseModel, t: float, order: int) -> float:
    """sum_{n > order} bound(n) / n!, the bound being the smaller of the two forms."""
    log_total = -math.inf
    previous = None
    for n in range(order + 1, order + 1 + MAX_TAIL_TERMS):
        log_term = min(_log_bound(model, n, t, BoundForm.ASYMPTOTIC),
                       _log_bound(model, n, t, BoundForm.SIMPLEX)) - special.gammaln(n + 1.0)
        log_total = float(np.logaddexp(log_total, log_term))
        if previous is not None:
            ratio = math.exp(min(log_term - previous, 0.0))
            if ratio < 1.0 and log_term + math.log(ratio / (1.0 - ratio) + 1e-300) < math.log(1e-14) + log_total:
                break
        previous = log_term
    else:
        return math.inf
    try:
        return math.exp(log_total)
    except OverflowError:
        return math.inf


def second_moment_series(model: NoiseModel, t: float, n_max: int = 12, tail_tol: float = 1e-3,
                         stream: Optional[RngStream] = None, workers: int = 1, eps: float = 0.0,
                         n_time_samples: int = 2_000, n_spectral_samples: int = 64, time_nodes: int = 12,
                         mixture_nodes: int = 16, rel_tol: float = 1e-8) -> SeriesResult:
    """E|u_{t,x}|^2 for u_0 = 1 as sum_{n <= N} alpha_n(t)/n! plus an analytic tail bound.

    N is the smallest order whose tail bound is below ``tail_tol``. When no order up to
    ``n_max`` qualifies the result is returned with ``converged=False``.
    """
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")
    if n_max < 0 or not tail_tol > 0:
        raise DomainError(f"invalid truncation settings n_max={n_max}, tail_tol={tail_tol}")

    converged, reason = True, None
    try:
        order, tail = 0, _series_tail(model, t, 0)
        while tail >= tail_tol and order < n_max:
            order += 1
            tail = _series_tail(model, t, order)
        if tail >= tail_tol:
            converged = False
            reason = f"tail bound {tail:.3g} >= {tail_tol:g} at n_max={n_max}"
    except ConditionViolated as e:
        order, tail = n_max, math.inf
        converged, reason = False, str(e)
    if not converged:
        logger.warning(f"Second-moment series at t={t} not converged: {reason}")

    coefficients: List[ChaosCoefficient] = []
    value, variance = 0.0, 0.0
    for n in range(order + 1):
        if n <= 2:
            coefficient = alpha_n(model, n, t, method=AlphaMethod.QUADRATURE, eps=eps, time_nodes=time_nodes,
                                  mixture_nodes=mixture_nodes, rel_tol=rel_tol)
        else:
            if stream is None:
                raise DomainError(f"order {n} needs Monte Carlo; supply an RNG stream")
            coefficient = alpha_n(model, n, t, method=AlphaMethod.MC, eps=eps, n_time_samples=n_time_samples,
                                  n_spectral_samples=n_spectral_samples, stream=stream.named(f"alpha-{n}"),
                                  workers=workers)
        coefficients.append(coefficient)
        factorial = math.factorial(n)
        value += coefficient.value.mean / factorial
        variance += (coefficient.value.stderr / factorial) ** 2
    logger.info(f"Second-moment series at t={t}: {value:.6g} with N={order}, tail <= {tail:.3g}")
    return SeriesResult(value=value, truncation_order=order, tail_bound=tail, converged=converged, reason=reason,
                        stderr=math.sqrt(variance), coefficients=coefficients)


def additive_noise_variance(model: NoiseModel, t: float, rel_tol: float = 1e-8) -> float:
    """E|v_{t,x}|^2 for the additive equation, which equals alpha_1(t); infinite iff
    H <= (d - alpha)/4 for rough kernels."""
    kernel = model.kernel
    if kernel.is_rough and not model.H > kernel.codim / 4.0:
        return math.inf
    return _alpha1_quad(model, t, 0.0, rel_tol)
