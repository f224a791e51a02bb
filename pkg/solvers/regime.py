# solvers/regime.py
"""Existence regime and critical times.

All finite critical times depend on the configured beta_H, D_alpha_d and C*, so
absolute values are parametric; ratios and monotonicity are exact.
"""
import logging
import math
from typing import Dict, Optional

from exceptions import ConditionViolated, DomainError, InvalidSpec, SheMfcError, Unsupported
from models import KernelFamily, NoiseModel, RegimeReport, RegimeStatus
from solvers.chaos import additive_noise_variance, bound_rate
from solvers.kernels import bound_constants, dalang_integral

logger = logging.getLogger(__name__)


def _on_boundary(model: NoiseModel) -> bool:
    """d = 2 + alpha."""
    return math.isclose(model.d, 2.0 + model.kernel.alpha, rel_tol=0.0, abs_tol=1e-12)


def _below_boundary(model: NoiseModel) -> bool:
    return model.d < 2.0 + model.kernel.alpha and not _on_boundary(model)


def _gamma_factor(H: float) -> float:
    """Gamma(1 - 1/(2H))^{2H}."""
    return math.gamma(1.0 - 1.0 / (2.0 * H)) ** (2.0 * H)


def _boundary_constant(model: NoiseModel) -> float:
    """D 2^{-2H} beta_H^2 Gamma(1 - 1/(2H))^{2H}, shared by t0(k)."""
    D = bound_constants(model.kernel).D_alpha_d
    return D * 2.0 ** (-2.0 * model.H) * model.beta_H ** 2 * _gamma_factor(model.H)


def critical_time_T0(model: NoiseModel) -> float:
    """Existence horizon on the boundary d = 2 + alpha with H > 1/2; infinite otherwise."""
    if not model.kernel.is_rough or not _on_boundary(model) or model.is_brownian:
        return math.inf
    H = model.H
    D = bound_constants(model.kernel).D_alpha_d
    bracket = (1.0 - 1.0 / (2.0 * H)) * D * 0.5 * model.beta_H ** 2 * _gamma_factor(H)
    return bracket ** (-1.0 / (2.0 * H - 1.0))


def critical_time_t0(model: NoiseModel, k: int, strict: bool = False) -> float:
    """Horizon below which the k-th moment of the Feynman-Kac representation is controlled."""
    if k < 2:
        raise DomainError(f"k must be >= 2, got {k}")
    if not model.kernel.is_rough:
        if strict:
            raise Unsupported("t0(k) is defined for rough kernels; smooth kernels have no finite critical time")
        return math.inf
    if _below_boundary(model):
        return math.inf
    if not _on_boundary(model) or model.is_brownian:
        raise ConditionViolated(f"no proven existence regime for d={model.d}, alpha={model.kernel.alpha}, H={model.H}")
    H = model.H
    return (k * (k - 1) * _boundary_constant(model)) ** (-1.0 / (2.0 * H - 1.0))


def _lambda0_coefficient(model: NoiseModel, gamma: float) -> float:
    """1 / D(t) at t = 1, D(t) being the growth factor of the exponential-moment series.

    D(t) carries gamma / alpha_H, so the alpha_H factor is kept here as well.
    """
    H = model.H
    D = bound_constants(model.kernel).D_alpha_d
    return ((1.0 - 1.0 / (2.0 * H)) ** (2.0 * H - 1.0) / D * 2.0 * model.alpha_H / gamma
            / model.beta_H ** 2 / _gamma_factor(H))


def lambda0(model: NoiseModel, t: float, gamma: float) -> float:
    """Largest lambda with a finite exponential moment bound at time t, for a weight
    dominated by gamma |r - s|^{2H-2}."""
    if not t > 0 or not gamma > 0:
        raise DomainError(f"t and gamma must be positive, got t={t}, gamma={gamma}")
    if not model.kernel.is_rough or model.is_brownian:
        raise Unsupported("lambda0 is defined for rough kernels with H > 1/2")
    if _below_boundary(model):
        return math.inf
    if not _on_boundary(model):
        raise Unsupported(f"lambda0 is not available for d > 2 + alpha")
    return _lambda0_coefficient(model, gamma) * t ** (1.0 - 2.0 * model.H)


def _sufficient(model: NoiseModel) -> Optional[str]:
    if not model.kernel.is_rough:
        return "smooth kernel"
    if model.H > 0.5 and (_below_boundary(model) or _on_boundary(model)):
        return "H > 1/2 and d <= 2 + alpha"
    if model.is_brownian and _below_boundary(model):
        return "H = 1/2 and d < 2 + alpha"
    return None


def _necessary(model: NoiseModel) -> bool:
    if not model.kernel.is_rough:
        return True
    return model.d < 4.0 * model.H + model.kernel.alpha


def existence_report(model: NoiseModel, K: int = 5) -> RegimeReport:
    kernel = model.kernel
    if K < 2:
        raise DomainError(f"K must be >= 2, got {K}")
    if kernel.family is KernelFamily.BESSEL and not kernel.alpha < kernel.d:
        raise InvalidSpec(f"{kernel.label()}: the regime analysis covers Bessel kernels with alpha < d")

    condition = _sufficient(model)
    necessary_ok = _necessary(model)
    if condition is not None:
        status = RegimeStatus.EXISTS
    elif not necessary_ok:
        status = RegimeStatus.NOT_EXISTS
    else:
        status = RegimeStatus.UNKNOWN

    constants = bound_constants(kernel)
    report_constants: Dict[str, Optional[float]] = {
        "beta_H": model.beta_H, "c_star": model.c_star,
        "D_alpha_d": constants.D_alpha_d, "C_alpha_d": constants.C_alpha_d,
    }

    T0: Optional[float] = None
    t0: Dict[int, float] = {}
    coefficient: Optional[float] = None
    exponent: Optional[float] = None
    diagnostics: Dict[str, float] = {}
    if status is RegimeStatus.EXISTS:
        T0 = critical_time_T0(model)
        t0 = {k: critical_time_t0(model, k) for k in range(2, K + 1)}
        if kernel.is_rough and not model.is_brownian:
            exponent = 1.0 - 2.0 * model.H
            coefficient = math.inf if _below_boundary(model) else _lambda0_coefficient(model, model.alpha_H)
        if math.isfinite(t0.get(2, math.inf)) and coefficient is not None:
            # equals 1 when lambda0(t0(2)) = k(k-1)/2 at k = 2
            diagnostics["lambda0_t0_ratio"] = coefficient * t0[2] ** exponent
    if kernel.is_rough and model.H > kernel.codim / 4.0:
        growth = 2.0 * model.H - 0.5 * kernel.codim
        rate = bound_rate(model, 1.0)
        diagnostics["series_radius_time"] = rate ** (-1.0 / growth) if growth > 0 else math.inf

    chaos_bound_ok = (not kernel.is_rough) or model.H > kernel.codim / 4.0
    if chaos_bound_ok:
        try:
            diagnostics["additive_variance_t1"] = additive_noise_variance(model, 1.0)
        except SheMfcError as e:
            logger.warning(f"Additive-noise variance unavailable for {kernel.label()}: {e}")

    integral = dalang_integral(kernel)
    report = RegimeReport(model=model, status=status, sufficient_ok=condition is not None,
                          sufficient_condition=condition, necessary_ok=necessary_ok, T0=T0, t0=t0,
                          lambda0_coefficient=coefficient, lambda0_exponent=exponent,
                          dalang_ok=math.isfinite(integral), dalang_integral=integral,
                          chaos_bound_ok=chaos_bound_ok, constants=report_constants, diagnostics=diagnostics)
    if status is RegimeStatus.UNKNOWN:
        logger.info(f"{kernel.label()} with H={model.H} lies in the open region 2 + alpha < d < 4H + alpha")
    return report
