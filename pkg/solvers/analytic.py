# solvers/analytic.py
"""Special-function primitives and the closed-form integrals behind the moment bounds."""
import logging
import math
import threading
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import integrate, special

from exceptions import DomainError, QuadratureFailure

logger = logging.getLogger(__name__)

DIVERGENT = math.inf

BETA_H_PIECES = 64
BETA_H_SAFETY = 1.05

_beta_cache: Dict[Tuple[float, int], float] = {}
_beta_lock = threading.Lock()


def log_gamma(x: float) -> float:
    if not x > 0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    return float(special.gammaln(x))


def alpha_h(H: float) -> float:
    return H * (2.0 * H - 1.0)


def simplex_integral(n: int, t: float, h: float) -> float:
    """I_n(t, h): integral over 0 < s_1 < ... < s_n < t of
    (t - s_n)^h (s_n - s_{n-1})^h ... (s_2 - s_1)^h.

    Equals Gamma(1+h)^n t^{n(1+h)} / Gamma(n(1+h) + 1) when 1 + h > 0 and is
    ``DIVERGENT`` (infinity) otherwise.
    """
    if n < 0:
        raise DomainError(f"simplex_integral requires n >= 0, got {n}")
    if t < 0:
        raise DomainError(f"simplex_integral requires t >= 0, got {t}")
    if n == 0:
        return 1.0
    a = 1.0 + h
    if a <= 0:
        return DIVERGENT
    if t == 0:
        return 0.0
    log_value = n * special.gammaln(a) - special.gammaln(n * a + 1.0) + n * a * math.log(t)
    return math.exp(log_value)


def simplex_integral_quadrature(n: int, t: float, h: float, rel_tol: float = 1e-11) -> float:
    """I_n(t, h) by nested adaptive quadrature, J_k(s) = int_0^s (s-r)^h J_{k-1}(r) dr."""
    if 1.0 + h <= 0:
        return DIVERGENT

    def nested(k: int, s: float) -> float:
        if k == 0:
            return 1.0
        if s <= 0:
            return 0.0
        value, abserr = integrate.quad(lambda r: nested(k - 1, r), 0.0, s, weight="alg", wvar=(0.0, h),
                                       epsabs=0.0, epsrel=rel_tol, limit=200)
        return value

    return nested(n, t)


def phi_series(x: float, a: float, tol: float = 1e-12, max_terms: int = 1_000_000) -> float:
    """Phi(x, a) = sum_n x^n / (n!)^a; ``DIVERGENT`` iff a = 0 and x >= 1."""
    if x < 0 or a < 0:
        raise DomainError(f"phi_series requires x >= 0 and a >= 0, got x={x}, a={a}")
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    if x == 0:
        return 1.0
    if a == 0:
        return DIVERGENT if x >= 1 else 1.0 / (1.0 - x)
    log_x = math.log(x)
    log_tol = math.log(tol)
    log_sum = -math.inf
    for n in range(max_terms):
        log_term = n * log_x - a * special.gammaln(n + 1.0)
        log_sum = float(np.logaddexp(log_sum, log_term))
        # ratio of the next term to this one; decreasing in n
        log_ratio = log_x - a * math.log(n + 1.0)
        if n > 0 and log_ratio < -math.log(2.0) and log_term < log_tol + max(0.0, log_sum):
            break
    else:
        logger.warning(f"phi_series(x={x}, a={a}) did not settle within {max_terms} terms; treated as divergent")
        return DIVERGENT
    try:
        return math.exp(log_sum)
    except OverflowError:
        return DIVERGENT


# --- Fractional time weights ---

def fractional_cell_weights(r_edges: np.ndarray, s_edges: np.ndarray, H: float) -> np.ndarray:
    """alpha_H * int_{cell_i} int_{cell_j} |r - s|^{2H-2} ds dr for all cell pairs.

    Uses the antiderivative |x|^{2H}/2 of alpha_H |x|^{2H-2}; for H = 1/2 the same
    expression is the overlap length of the two cells.
    """
    r_edges = np.asarray(r_edges, dtype=float)
    s_edges = np.asarray(s_edges, dtype=float)
    a, b = r_edges[:-1, None], r_edges[1:, None]
    c, d = s_edges[None, :-1], s_edges[None, 1:]
    p = 2.0 * H
    return 0.5 * (np.abs(b - c) ** p - np.abs(a - c) ** p - np.abs(b - d) ** p + np.abs(a - d) ** p)


def beta_h_ratio(phi: np.ndarray, H: float) -> float:
    """alpha_H <phi, |.|^{2H-2} phi> / (int |phi|^{1/H})^{2H} for a step function on [0, 1]."""
    phi = np.abs(np.asarray(phi, dtype=float))
    m = phi.shape[0]
    edges = np.linspace(0.0, 1.0, m + 1)
    weights = fractional_cell_weights(edges, edges, H)
    return _ratio(phi, weights, H)


def _ratio(phi: np.ndarray, weights: np.ndarray, H: float) -> float:
    h = 1.0 / phi.shape[0]
    denominator = (h * np.sum(phi ** (1.0 / H))) ** (2.0 * H)
    if denominator == 0:
        return 0.0
    return float(phi @ weights @ phi) / denominator


def _estimate_beta_h(H: float, pieces: int) -> float:
    edges = np.linspace(0.0, 1.0, pieces + 1)
    weights = fractional_cell_weights(edges, edges, H)
    exponent = H / (1.0 - H)
    phi = np.ones(pieces)
    best = _ratio(phi, weights, H)

    # nonlinear power iteration on the stationarity condition phi^{1/H - 1} ~ W phi
    for _ in range(2000):
        candidate = (weights @ phi) ** exponent
        candidate /= candidate.max()
        value = _ratio(candidate, weights, H)
        if value < best:
            break
        converged = value - best <= 1e-13 * best
        phi, best = candidate, value
        if converged:
            break

    # coordinate ascent polish
    factors = (0.5, 0.8, 0.95, 1.05, 1.25, 2.0)
    for _ in range(50):
        improved = False
        for i in range(pieces):
            original = phi[i]
            for factor in factors:
                phi[i] = original * factor
                value = _ratio(phi, weights, H)
                if value > best * (1.0 + 1e-12):
                    best, original, improved = value, phi[i], True
            phi[i] = original
        if not improved:
            break
    return math.sqrt(best)


def beta_h_constant(H: float, override: Optional[float] = None, pieces: int = BETA_H_PIECES) -> float:
    """Admissible constant of the L^{1/H} domination of the fractional inner product.

    Exactly 1 at H = 1/2. Otherwise the override, or a numerical estimate over
    step functions inflated by 5%, cached per (H, pieces).
    """
    if not 0.5 <= H < 1.0:
        raise DomainError(f"beta_h_constant requires H in [1/2, 1), got {H}")
    if H == 0.5:
        return 1.0
    if override is not None:
        if not override > 0:
            raise DomainError(f"beta_H override must be positive, got {override}")
        return float(override)
    key = (float(H), int(pieces))
    with _beta_lock:
        cached = _beta_cache.get(key)
        if cached is None:
            cached = BETA_H_SAFETY * _estimate_beta_h(H, pieces)
            _beta_cache[key] = cached
            logger.info(f"Estimated beta_H={cached:.6f} for H={H} over {pieces}-piece step functions")
    return cached


def check_quad(value: float, abserr: float, rel_tol: float, what: str, floor: float = 1e-300) -> float:
    """Raise QuadratureFailure when the reported error misses the tolerance by a wide margin."""
    if not math.isfinite(value) or abserr > max(100.0 * rel_tol * abs(value), floor):
        raise QuadratureFailure(f"{what}: value={value}, estimated error={abserr}, rel_tol={rel_tol}",
                                partial=value)
    return value
