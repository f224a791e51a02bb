# solvers/kernels.py
"""Spatial covariance kernels f, their spectral densities g and derived objects.

Fourier convention: f(x) = (2 pi)^{-d} int e^{-i xi.x} g(xi) d xi. Every family
is a Gaussian scale mixture in Fourier space, g(xi) = int e^{-w |xi|^2} nu(dw),
so (p_eps * f)(x) = int p_{eps + 2w}(x) nu(dw).
"""
import functools
import logging
import math
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from exceptions import DomainError, InvalidSpec, NoClosedForm, SingularPoint
from mc_engine import DEFAULT_CHUNK_SIZE, Chunk, RngStream, parallel_reduce
from models import BoundProvenance, Estimate, KernelBoundConstants, KernelFamily, KernelSpec
from solvers.analytic import check_quad

logger = logging.getLogger(__name__)

DEFAULT_REL_TOL = 1e-8
DEFAULT_MC_SAMPLES = 100_000

Vector = Union[float, Sequence[float], np.ndarray]


def make_kernel(family: Union[str, KernelFamily], alpha: float, d: int) -> KernelSpec:
    try:
        return KernelSpec(family=KernelFamily(family), alpha=alpha, d=d)
    except ValueError as e:
        raise InvalidSpec(str(e)) from e


# --- Normalising constants ---

def riesz_constant(alpha: float, d: int) -> float:
    """gamma_{alpha,d} with f(x) = gamma_{alpha,d} |x|^{alpha-d}."""
    return math.exp(special.gammaln((d - alpha) / 2.0) - alpha * math.log(2.0)
                    - 0.5 * d * math.log(math.pi) - special.gammaln(alpha / 2.0))


def bessel_constant(alpha: float, d: int) -> float:
    """gamma'_alpha, normalised so that g(xi) = (1 + |xi|^2)^{-alpha/2}."""
    return (4.0 * math.pi) ** (-0.5 * d) / math.gamma(alpha / 2.0)


def poisson_constant(d: int) -> float:
    """C_d = pi^{-(d+1)/2} Gamma((d+1)/2)."""
    return math.exp(special.gammaln((d + 1) / 2.0) - 0.5 * (d + 1) * math.log(math.pi))


def sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (0.5 * d) / math.gamma(0.5 * d)


def riesz_sharp_constant(alpha: float, d: int) -> float:
    """E f(sqrt(s) Z) * s^{(d-alpha)/2} for the Riesz kernel (chi-moment identity)."""
    p = d - alpha
    return riesz_constant(alpha, d) * 2.0 ** (-0.5 * p) * math.exp(special.gammaln(alpha / 2.0) - special.gammaln(d / 2.0))


def heat_density(variance: Union[float, np.ndarray], r: Union[float, np.ndarray], d: int) -> np.ndarray:
    """Gaussian density p_variance evaluated at radius r in dimension d."""
    variance = np.asarray(variance, dtype=float)
    r = np.asarray(r, dtype=float)
    return (2.0 * math.pi * variance) ** (-0.5 * d) * np.exp(-(r * r) / (2.0 * variance))


def _radius(x: Vector, d: int) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise DomainError(f"expected a {d}-vector, got shape {x.shape}")
    return float(np.linalg.norm(x))


# --- Kernels and densities (vectorised radial forms) ---

def kernel_radial(spec: KernelSpec, r: Union[float, np.ndarray]) -> np.ndarray:
    """f at radius r, closed forms; the Bessel kernel uses the K_nu representation."""
    r = np.asarray(r, dtype=float)
    alpha, d = spec.alpha, spec.d
    if spec.family is KernelFamily.RIESZ:
        with np.errstate(divide="ignore"):
            return riesz_constant(alpha, d) * r ** (alpha - d)
    if spec.family is KernelFamily.BESSEL:
        nu = 0.5 * (alpha - d)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = bessel_constant(alpha, d) * 2.0 * (r / 2.0) ** nu * special.kv(nu, r)
        if alpha > d:
            at_zero = (4.0 * math.pi) ** (-0.5 * d) * math.gamma(nu) / math.gamma(alpha / 2.0)
            out = np.where(r == 0, at_zero, out)
        return out
    if spec.family is KernelFamily.HEAT:
        return heat_density(alpha, r, d)
    return poisson_constant(d) * alpha * (r * r + alpha * alpha) ** (-0.5 * (d + 1))


def density_radial(spec: KernelSpec, rho: Union[float, np.ndarray]) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    alpha = spec.alpha
    if spec.family is KernelFamily.RIESZ:
        with np.errstate(divide="ignore"):
            return rho ** (-alpha)
    if spec.family is KernelFamily.BESSEL:
        return (1.0 + rho * rho) ** (-0.5 * alpha)
    if spec.family is KernelFamily.HEAT:
        return np.exp(-0.5 * alpha * rho * rho)
    return np.exp(-alpha * rho)


def _bessel_kernel_quad(spec: KernelSpec, r: float, rel_tol: float) -> float:
    exponent = 0.5 * (spec.alpha - spec.d) - 1.0
    r2 = r * r / 4.0
    points = [r2] if 0.0 < r2 < 1.0 else None

    def integrand(w: float) -> float:
        # log space: w ** exponent overflows long before exp(-w) reaches zero
        return math.exp(exponent * math.log(w) - w - r2 / w)

    head, head_err = integrate.quad(integrand, 0.0, 1.0, points=points, epsabs=0.0, epsrel=rel_tol, limit=200)
    tail, tail_err = integrate.quad(integrand, 1.0, math.inf, epsabs=0.0, epsrel=rel_tol, limit=200)
    total = check_quad(head + tail, head_err + tail_err, rel_tol, f"Bessel kernel at r={r}")
    return bessel_constant(spec.alpha, spec.d) * total


def eval_kernel(spec: KernelSpec, x: Vector, rel_tol: float = DEFAULT_REL_TOL) -> float:
    r = _radius(x, spec.d)
    if spec.family is KernelFamily.RIESZ and r == 0:
        raise SingularPoint("the Riesz kernel is singular at the origin")
    if spec.family is KernelFamily.BESSEL:
        if r == 0 and spec.alpha <= spec.d:
            raise SingularPoint("the Bessel kernel with alpha <= d is singular at the origin")
        return _bessel_kernel_quad(spec, r, rel_tol)
    return float(kernel_radial(spec, r))


def eval_spectral_density(spec: KernelSpec, xi: Vector, convention: str = "consistent") -> float:
    """g(xi). ``convention="printed"`` returns the heat/Poisson forms with the 2 pi factors
    of the 2 pi-frequency convention instead of the pairs consistent with eval_kernel."""
    rho = _radius(xi, spec.d)
    if spec.family is KernelFamily.RIESZ and rho == 0:
        raise SingularPoint("the Riesz spectral density is singular at the origin")
    if convention == "printed":
        if spec.family is KernelFamily.HEAT:
            return math.exp(-math.pi ** 2 * spec.alpha * rho * rho / 2.0)
        if spec.family is KernelFamily.POISSON:
            return math.exp(-4.0 * math.pi ** 2 * spec.alpha * rho)
    elif convention != "consistent":
        raise DomainError(f"unknown convention {convention!r}")
    return float(density_radial(spec, rho))


# --- Gaussian-mixture representation ---

def mixing_density(spec: KernelSpec, w: Union[float, np.ndarray]) -> np.ndarray:
    """Density of nu(dw) for the non-heat families."""
    w = np.asarray(w, dtype=float)
    alpha = spec.alpha
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if spec.family is KernelFamily.RIESZ:
            return w ** (0.5 * alpha - 1.0) / math.gamma(0.5 * alpha)
        if spec.family is KernelFamily.BESSEL:
            return w ** (0.5 * alpha - 1.0) * np.exp(-w) / math.gamma(0.5 * alpha)
        if spec.family is KernelFamily.POISSON:
            return alpha / (2.0 * math.sqrt(math.pi)) * w ** -1.5 * np.exp(-alpha * alpha / (4.0 * w))
    raise NoClosedForm("the heat kernel mixes a single Gaussian; use mixture_rule")


@functools.lru_cache(maxsize=128)
def mixture_rule(spec: KernelSpec, m: int = 32) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with sum_k weights_k h(nodes_k) ~ int h(w) nu(dw).

    The Riesz rule assumes h(w) decays like w^{-d/2} per coordinate, which holds
    for Gaussian densities p_{eps + 2w} and for the psi integrands.
    """
    alpha, d = spec.alpha, spec.d
    if spec.family is KernelFamily.HEAT:
        nodes, weights = np.array([alpha / 2.0]), np.array([1.0])
    elif spec.family is KernelFamily.BESSEL:
        x, lam = special.roots_genlaguerre(m, 0.5 * alpha - 1.0)
        nodes, weights = x, lam / math.gamma(0.5 * alpha)
    elif spec.family is KernelFamily.POISSON:
        v, lam = special.roots_genlaguerre(m, -0.5)
        nodes, weights = alpha * alpha / (4.0 * v), lam / math.sqrt(math.pi)
    else:
        a, b = 0.5 * alpha - 1.0, 0.5 * (d - alpha) - 1.0
        x, lam = special.roots_jacobi(m, b, a)
        u = 0.5 * (1.0 + x)
        nodes = u / (1.0 - u)
        weights = 2.0 ** (-a - b - 1.0) * lam * (1.0 - u) ** (-0.5 * d) / math.gamma(0.5 * alpha)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


# --- Mollified kernel p_eps * f ---

def _riesz_mollified(spec: KernelSpec, eps: float, r: Union[float, np.ndarray]) -> np.ndarray:
    p = spec.codim
    r = np.asarray(r, dtype=float)
    return (riesz_sharp_constant(spec.alpha, spec.d) * eps ** (-0.5 * p)
            * special.hyp1f1(0.5 * p, 0.5 * spec.d, -(r * r) / (2.0 * eps)))


def _subordinated(spec: KernelSpec, eps: float, r: float, rel_tol: float) -> float:
    if spec.family is KernelFamily.HEAT:
        return float(heat_density(spec.alpha + eps, r, spec.d))

    def integrand(w: float) -> float:
        return float(mixing_density(spec, w) * heat_density(eps + 2.0 * w, r, spec.d))

    first, first_err = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=rel_tol, limit=200)
    second, second_err = integrate.quad(integrand, 1.0, math.inf, epsabs=0.0, epsrel=rel_tol, limit=200)
    return check_quad(first + second, first_err + second_err, rel_tol, f"mixture integral of {spec.label()}")


def _spectral_radial(spec: KernelSpec, eps: float, r: float, rel_tol: float) -> float:
    d = spec.d
    cutoff = math.sqrt(120.0 / eps)
    if spec.family is KernelFamily.POISSON:
        cutoff = min(cutoff, 80.0 / spec.alpha)
    if r == 0:
        def radial(rho: float) -> float:
            return rho ** (d - 1) * math.exp(-0.5 * eps * rho * rho) * float(density_radial(spec, rho))
        first, first_err = integrate.quad(radial, 0.0, min(1.0, cutoff), epsabs=0.0, epsrel=rel_tol, limit=200)
        second, second_err = (0.0, 0.0)
        if cutoff > 1.0:
            second, second_err = integrate.quad(radial, 1.0, cutoff, epsabs=0.0, epsrel=rel_tol, limit=200)
        total = check_quad(first + second, first_err + second_err, rel_tol, "radial spectral integral")
        return (2.0 * math.pi) ** (-d) * sphere_area(d) * total

    order = 0.5 * d - 1.0

    def hankel(rho: float) -> float:
        return (float(density_radial(spec, rho)) * math.exp(-0.5 * eps * rho * rho)
                * special.jv(order, rho * r) * rho ** (0.5 * d))

    n_pieces = min(4000, max(1, int(math.ceil(cutoff * r / math.pi))))
    edges = np.linspace(0.0, cutoff, n_pieces + 1)
    total, total_err, magnitude = 0.0, 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        piece, piece_err = integrate.quad(hankel, lo, hi, epsabs=0.0, epsrel=rel_tol, limit=200)
        total += piece
        total_err += piece_err
        magnitude += abs(piece)
    if total_err > 100.0 * rel_tol * magnitude + 1e-14:
        check_quad(total, total_err, rel_tol, f"Hankel transform at r={r}")
    value = (2.0 * math.pi) ** (-0.5 * d) * r ** (1.0 - 0.5 * d) * total
    return max(value, 0.0)


class MollifyMethod(str, Enum):
    AUTO = "auto"
    CLOSED = "closed"
    SUBORDINATION = "subordination"
    SPECTRAL = "spectral"


_AUTO_METHOD = {
    KernelFamily.HEAT: MollifyMethod.CLOSED,
    KernelFamily.RIESZ: MollifyMethod.CLOSED,
    KernelFamily.BESSEL: MollifyMethod.SUBORDINATION,
    KernelFamily.POISSON: MollifyMethod.SPECTRAL,
}


def mollified_kernel(spec: KernelSpec, eps: float, x: Vector, method: Union[str, MollifyMethod] = MollifyMethod.AUTO,
                     rel_tol: float = DEFAULT_REL_TOL) -> float:
    """(p_eps * f)(x)."""
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    r = _radius(x, spec.d)
    method = MollifyMethod(method)
    if method is MollifyMethod.AUTO:
        method = _AUTO_METHOD[spec.family]
    if method is MollifyMethod.CLOSED:
        if spec.family is KernelFamily.HEAT:
            return float(heat_density(spec.alpha + eps, r, spec.d))
        if spec.family is KernelFamily.RIESZ:
            return float(_riesz_mollified(spec, eps, r))
        raise NoClosedForm(f"no closed form for the mollified {spec.family.value} kernel")
    if method is MollifyMethod.SUBORDINATION:
        return _subordinated(spec, eps, r, rel_tol)
    return _spectral_radial(spec, eps, r, rel_tol)


@functools.lru_cache(maxsize=4096)
def _poisson_origin(spec: KernelSpec, s: float, rel_tol: float) -> float:
    return _spectral_radial(spec, s, 0.0, rel_tol)


def mollified_at_origin(spec: KernelSpec, s: Union[float, np.ndarray], rel_tol: float = DEFAULT_REL_TOL) -> np.ndarray:
    """(p_s * f)(0) for an array of positive s; also psi^{(1)} at sigma_11 = s."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise DomainError("mollified_at_origin requires s > 0")
    alpha, d = spec.alpha, spec.d
    if spec.family is KernelFamily.HEAT:
        return (2.0 * math.pi * (alpha + s)) ** (-0.5 * d)
    if spec.family is KernelFamily.RIESZ:
        return riesz_sharp_constant(alpha, d) * s ** (-0.5 * spec.codim)
    if spec.family is KernelFamily.BESSEL:
        z = 0.5 * s
        return (4.0 * math.pi) ** (-0.5 * d) * z ** (0.5 * (alpha - d)) * special.hyperu(0.5 * alpha, 1.0 + 0.5 * (alpha - d), z)
    flat = [_poisson_origin(spec, float(v), rel_tol) for v in s.reshape(-1)]
    return np.asarray(flat).reshape(s.shape)


class RadialProfile:
    """Vectorised r -> (p_eps * f)(r) on [0, r_max] from a cubic spline through exact values."""

    def __init__(self, spec: KernelSpec, eps: float, r_max: float, rel_tol: float = DEFAULT_REL_TOL):
        self.spec = spec
        self.eps = eps
        self.r_max = r_max
        self.rel_tol = rel_tol
        self._spline: Optional[CubicSpline] = None
        if spec.family is KernelFamily.HEAT:
            return
        n_nodes = int(min(20_000, max(256, math.ceil(40.0 * r_max / math.sqrt(eps)))))
        nodes = np.linspace(0.0, r_max, n_nodes)
        if spec.family is KernelFamily.RIESZ:
            values = _riesz_mollified(spec, eps, nodes)
        else:
            values = np.array([_subordinated(spec, eps, float(r), rel_tol) for r in nodes])
        self._spline = CubicSpline(nodes, values, bc_type=((1, 0.0), "not-a-knot"))
        logger.debug(f"Built radial profile of {spec.label()} at eps={eps} with {n_nodes} nodes up to r={r_max}")

    def exact(self, r: np.ndarray) -> np.ndarray:
        if self.spec.family is KernelFamily.HEAT:
            return heat_density(self.spec.alpha + self.eps, r, self.spec.d)
        if self.spec.family is KernelFamily.RIESZ:
            return _riesz_mollified(self.spec, self.eps, r)
        flat = [_subordinated(self.spec, self.eps, float(v), self.rel_tol) for v in np.reshape(r, -1)]
        return np.asarray(flat).reshape(np.shape(r))

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self._spline is None:
            return self.exact(r)
        out = self._spline(np.minimum(r, self.r_max))
        outside = r > self.r_max
        if np.any(outside):
            out[outside] = self.exact(r[outside])
        return np.maximum(out, 0.0)


@functools.lru_cache(maxsize=64)
def mollified_radial(spec: KernelSpec, eps: float, r_max: float) -> RadialProfile:
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    return RadialProfile(spec, eps, r_max)


# --- J_f and the kernel bound ---

class JfMethod(str, Enum):
    CLOSED = "closed"
    MC = "mc"
    QUADRATURE = "quadrature"


def bound_constants(spec: KernelSpec) -> KernelBoundConstants:
    alpha, d = spec.alpha, spec.d
    if spec.is_rough:
        if not alpha < d:
            raise InvalidSpec(f"bound constants of {spec.label()} require alpha < d")
        if spec.family is KernelFamily.RIESZ:
            return KernelBoundConstants(D_alpha_d=riesz_sharp_constant(alpha, d), provenance=BoundProvenance.DERIVED_SHARP)
        k_alpha_d = 2.0 * d / (alpha * (d - alpha))
        D = bessel_constant(alpha, d) * k_alpha_d * 2.0 ** (0.5 * (d - alpha))
        return KernelBoundConstants(D_alpha_d=D, provenance=BoundProvenance.PROOF_CHAIN)
    if spec.family is KernelFamily.HEAT:
        return KernelBoundConstants(C_alpha_d=(2.0 * math.pi * alpha) ** (-0.5 * d), provenance=BoundProvenance.PROOF_CHAIN)
    return KernelBoundConstants(C_alpha_d=poisson_constant(d) * alpha ** (-d), provenance=BoundProvenance.PROOF_CHAIN)


def kernel_bound(spec: KernelSpec, u: float, v: float) -> float:
    """Upper bound of J_f(u, v, y, z) uniform in (y, z)."""
    constants = bound_constants(spec)
    if spec.is_rough:
        return constants.D_alpha_d * (u + v) ** (-0.5 * spec.codim)
    return constants.C_alpha_d


def j_f(spec: KernelSpec, u: float, v: float, y: Vector, z: Vector,
        method: Union[str, JfMethod] = JfMethod.CLOSED, n_samples: Optional[int] = None,
        stream: Optional[RngStream] = None, workers: int = 1, rel_tol: float = DEFAULT_REL_TOL) -> Estimate:
    """J_f(u, v, y, z) = E f(y - z + sqrt(u) Y - sqrt(v) Z)."""
    if not (u > 0 and v > 0):
        raise DomainError(f"u and v must be positive, got u={u}, v={v}")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if y.shape != (spec.d,) or z.shape != (spec.d,):
        raise DomainError(f"y and z must be {spec.d}-vectors")
    diff = y - z
    r = float(np.linalg.norm(diff))
    method = JfMethod(method)

    if method is JfMethod.CLOSED:
        if spec.family is KernelFamily.HEAT:
            return Estimate.exact(float(heat_density(spec.alpha + u + v, r, spec.d)))
        if spec.family is KernelFamily.RIESZ and r == 0:
            return Estimate.exact(riesz_sharp_constant(spec.alpha, spec.d) * (u + v) ** (-0.5 * spec.codim))
        raise NoClosedForm(f"J_f has no closed form for {spec.label()} at |y - z| = {r}")
    if method is JfMethod.QUADRATURE:
        return Estimate.exact(mollified_kernel(spec, u + v, diff, rel_tol=rel_tol))

    if stream is None:
        raise DomainError("the Monte Carlo method requires an RNG stream")
    n_samples = n_samples or DEFAULT_MC_SAMPLES
    su, sv = math.sqrt(u), math.sqrt(v)

    def evaluator(chunk: Chunk) -> np.ndarray:
        rng = chunk.generator()
        points = diff + su * rng.standard_normal((chunk.size, spec.d)) - sv * rng.standard_normal((chunk.size, spec.d))
        return kernel_radial(spec, np.linalg.norm(points, axis=1))

    stats = parallel_reduce(n_samples, evaluator, stream, workers=workers, chunk_size=DEFAULT_CHUNK_SIZE)
    return stats.to_estimate()


def dalang_integral(spec: KernelSpec, rel_tol: float = DEFAULT_REL_TOL) -> float:
    """(2 pi)^{-d} int g(xi) / (1 + |xi|^2) d xi, infinite when it diverges."""
    d = spec.d
    if spec.is_rough and not d < spec.alpha + 2:
        return math.inf

    def radial(rho: float) -> float:
        return rho ** (d - 1) * float(density_radial(spec, rho)) / (1.0 + rho * rho)

    first, first_err = integrate.quad(radial, 0.0, 1.0, epsabs=0.0, epsrel=rel_tol, limit=200)
    second, second_err = integrate.quad(radial, 1.0, math.inf, epsabs=0.0, epsrel=rel_tol, limit=400)
    total = check_quad(first + second, first_err + second_err, max(rel_tol, 1e-6), "Dalang integral")
    return (2.0 * math.pi) ** (-d) * sphere_area(d) * total
