# models.py
import math
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

# --- Kernels ---

class KernelFamily(str, Enum):
    RIESZ = "riesz"
    BESSEL = "bessel"
    HEAT = "heat"
    POISSON = "poisson"


ROUGH_FAMILIES = frozenset({KernelFamily.RIESZ, KernelFamily.BESSEL})


class KernelSpec(BaseModel):
    """One of the four spatial covariance kernels, with its order and dimension."""
    model_config = ConfigDict(frozen=True)

    family: KernelFamily
    alpha: float = Field(gt=0.0)
    d: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_family_domain(self) -> "KernelSpec":
        if self.family is KernelFamily.RIESZ and not self.alpha < self.d:
            raise ValueError(f"Riesz kernel requires 0 < alpha < d, got alpha={self.alpha}, d={self.d}")
        return self

    @property
    def is_rough(self) -> bool:
        return self.family in ROUGH_FAMILIES

    @property
    def codim(self) -> float:
        """d - alpha, the exponent governing the singularity of rough kernels."""
        return self.d - self.alpha

    def label(self) -> str:
        return f"{self.family.value}(alpha={self.alpha:g}, d={self.d})"


class BoundProvenance(str, Enum):
    DERIVED_SHARP = "derived_sharp"
    PROOF_CHAIN = "proof_chain"


class KernelBoundConstants(BaseModel):
    model_config = ConfigDict(frozen=True)

    D_alpha_d: Optional[float] = Field(default=None, gt=0.0)
    C_alpha_d: Optional[float] = Field(default=None, gt=0.0)
    provenance: BoundProvenance

    @model_validator(mode="after")
    def _exactly_one(self) -> "KernelBoundConstants":
        if (self.D_alpha_d is None) == (self.C_alpha_d is None):
            raise ValueError("exactly one of D_alpha_d / C_alpha_d must be populated")
        return self

    @property
    def value(self) -> float:
        return self.D_alpha_d if self.D_alpha_d is not None else self.C_alpha_d


# --- Noise model ---

class NoiseModel(BaseModel):
    """Hurst index, spatial kernel and the constants the bounds depend on.

    When ``beta_H`` is omitted it is resolved through
    ``solvers.analytic.beta_h_constant`` (exactly 1 at H = 1/2).
    """
    model_config = ConfigDict(frozen=True)

    H: float = Field(ge=0.5, lt=1.0)
    d: int = Field(ge=1)
    kernel: KernelSpec
    beta_H: Optional[float] = Field(default=None, gt=0.0)
    c_star: float = Field(default=1.0, ge=1.0)

    @model_validator(mode="after")
    def _resolve(self) -> "NoiseModel":
        if self.kernel.d != self.d:
            raise ValueError(f"kernel dimension {self.kernel.d} differs from model dimension {self.d}")
        if self.H == 0.5 and self.beta_H is not None and self.beta_H != 1.0:
            raise ValueError("beta_H must equal 1 when H = 1/2")
        if self.beta_H is None:
            from solvers.analytic import beta_h_constant  # avoid circular import at module load
            object.__setattr__(self, "beta_H", beta_h_constant(self.H))
        return self

    @computed_field
    @property
    def alpha_H(self) -> float:
        return self.H * (2.0 * self.H - 1.0)

    @property
    def is_brownian(self) -> bool:
        return self.H == 0.5


# --- Monte Carlo results ---

class Estimate(BaseModel):
    """Scalar result with standard error and a normal confidence interval."""
    model_config = ConfigDict(frozen=True)

    mean: float
    stderr: float = 0.0
    count: int = 0
    ci_low: float
    ci_high: float

    @classmethod
    def exact(cls, value: float) -> "Estimate":
        return cls(mean=value, stderr=0.0, count=0, ci_low=value, ci_high=value)

    @classmethod
    def from_moments(cls, mean: float, stderr: float, count: int, z: float = 1.959963984540054) -> "Estimate":
        return cls(mean=mean, stderr=stderr, count=count, ci_low=mean - z * stderr, ci_high=mean + z * stderr)

    @property
    def is_exact(self) -> bool:
        return self.stderr == 0.0

    def within(self, target: float, n_se: float = 3.0, rel: float = 0.0) -> bool:
        return abs(self.mean - target) <= n_se * self.stderr + rel * abs(target)


# --- Chaos ---

class TimePair(BaseModel):
    model_config = ConfigDict(frozen=True)

    s: List[float]
    tvec: List[float]
    horizon: float = Field(gt=0.0)

    @model_validator(mode="after")
    def _check(self) -> "TimePair":
        if len(self.s) == 0 or len(self.s) != len(self.tvec):
            raise ValueError("s and tvec must be non-empty and of equal length")
        for value in (*self.s, *self.tvec):
            if not 0.0 < value < self.horizon:
                raise ValueError(f"time {value} outside the open interval (0, {self.horizon})")
        return self

    @property
    def n(self) -> int:
        return len(self.s)

    def swapped(self) -> "TimePair":
        return TimePair(s=self.tvec, tvec=self.s, horizon=self.horizon)

    def reversed(self) -> "TimePair":
        """Time reversal s -> horizon - s used by the starred covariance."""
        return TimePair(s=[self.horizon - v for v in self.s], tvec=[self.horizon - v for v in self.tvec],
                        horizon=self.horizon)


class SigmaMatrix(BaseModel):
    model_config = ConfigDict(frozen=True)

    entries: List[List[float]]

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=float)

    @property
    def n(self) -> int:
        return len(self.entries)


class CoefficientMode(str, Enum):
    EXACT = "exact"
    MC = "mc"
    BOUND_ONLY = "bound_only"


class ChaosCoefficient(BaseModel):
    n: int = Field(ge=0)
    value: Optional[Estimate] = None
    upper_bound: Optional[float] = None
    mode: CoefficientMode

    @model_validator(mode="after")
    def _check(self) -> "ChaosCoefficient":
        if self.mode is not CoefficientMode.BOUND_ONLY and self.value is None:
            raise ValueError("value required unless mode is bound_only")
        return self


class SeriesResult(BaseModel):
    value: float
    truncation_order: int
    tail_bound: float
    converged: bool = True
    reason: Optional[str] = None
    stderr: float = 0.0
    coefficients: List[ChaosCoefficient] = Field(default_factory=list)


# --- Local time ---

class WeightKind(str, Enum):
    FRACTIONAL = "fractional"
    DIAGONAL = "diagonal"
    MOLLIFIED = "mollified"


class WeightSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: WeightKind
    H: float = Field(ge=0.5, lt=1.0)
    delta: Optional[float] = Field(default=None, gt=0.0)
    horizon: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _check(self) -> "WeightSpec":
        if self.kind is WeightKind.FRACTIONAL and not self.H > 0.5:
            raise ValueError("fractional weight requires H > 1/2")
        if self.kind is WeightKind.DIAGONAL and self.H != 0.5:
            raise ValueError("diagonal weight requires H = 1/2")
        if self.kind is WeightKind.MOLLIFIED and (self.delta is None or self.horizon is None):
            raise ValueError("mollified weight requires delta and horizon")
        return self

    @classmethod
    def for_hurst(cls, H: float) -> "WeightSpec":
        if H == 0.5:
            return cls(kind=WeightKind.DIAGONAL, H=0.5)
        return cls(kind=WeightKind.FRACTIONAL, H=H)

    @property
    def alpha_H(self) -> float:
        return self.H * (2.0 * self.H - 1.0)

    @property
    def gamma(self) -> float:
        """Constant of the kernel-domination condition; alpha_H for the fractional weight."""
        if self.kind is WeightKind.DIAGONAL:
            raise ValueError("the diagonal weight has no power-law domination constant")
        return self.alpha_H


class LocalTimeEstimate(BaseModel):
    eps: float = Field(gt=0.0)
    t: float = Field(gt=0.0)
    moment: int = Field(default=1, ge=1)
    value: Estimate
    n_steps: int
    weight: WeightSpec


class ConvergenceRow(BaseModel):
    eps: float
    moment1: float
    se1: float
    moment2: float
    se2: float
    diff_mean: Optional[float] = None
    diff_se: Optional[float] = None
    diff_min: Optional[float] = None
    cauchy_l2: Optional[float] = None


# --- Feynman-Kac ---

class InitialKind(str, Enum):
    CONSTANT = "constant"
    COSINE = "cosine"
    GAUSSIAN_BUMP = "gaussian_bump"


class InitialCondition(BaseModel):
    """Bounded continuous initial datum from a small builtin family."""
    model_config = ConfigDict(frozen=True)

    kind: InitialKind = InitialKind.CONSTANT
    amplitude: float = 1.0
    frequency: Optional[List[float]] = None
    length_scale: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _check(self) -> "InitialCondition":
        if self.kind is InitialKind.COSINE and not self.frequency:
            raise ValueError("cosine initial condition requires a frequency vector")
        if self.kind is InitialKind.GAUSSIAN_BUMP and self.length_scale is None:
            raise ValueError("gaussian bump requires length_scale")
        return self

    @property
    def sup_norm(self) -> float:
        return abs(self.amplitude)

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        """Evaluate on points of shape (..., d)."""
        y = np.asarray(y, dtype=float)
        if self.kind is InitialKind.CONSTANT:
            return np.full(y.shape[:-1], self.amplitude)
        if self.kind is InitialKind.COSINE:
            omega = np.asarray(self.frequency, dtype=float)
            if omega.shape[0] != y.shape[-1]:
                raise ValueError(f"frequency has dimension {omega.shape[0]}, points have {y.shape[-1]}")
            return self.amplitude * np.cos(y @ omega)
        return self.amplitude * np.exp(-np.sum(y * y, axis=-1) / (2.0 * self.length_scale ** 2))


class MomentEstimate(BaseModel):
    k: int = Field(ge=2)
    t: float
    x: List[float]
    eps: float
    n_steps: int
    n_samples: int
    value: Estimate
    regime_note: str
    clip_count: int = 0


class ExtrapolatedMoment(BaseModel):
    eps_values: List[float]
    raw: List[Estimate]
    linear: Estimate
    quadratic: Estimate
    note: str = "Richardson extrapolation in eps is heuristic; no rate is proven"


class ComparisonReport(BaseModel):
    t: float
    fk: Estimate
    fk_raw: List[Estimate] = Field(default_factory=list)
    series: float
    tail: float
    truncation_order: int
    agree: bool
    reason: Optional[str] = None


class MonotonicityReport(BaseModel):
    t_grid: List[float]
    k_list: List[int]
    means: Dict[str, float]
    violations_k: int
    violations_t: int
    n_samples: int


# --- Regime ---

class RegimeStatus(str, Enum):
    EXISTS = "exists"
    NOT_EXISTS = "not_exists"
    UNKNOWN = "unknown"


class RegimeReport(BaseModel):
    model: NoiseModel
    status: RegimeStatus
    sufficient_ok: bool
    sufficient_condition: Optional[str] = None
    necessary_ok: bool
    T0: Optional[float] = None
    t0: Dict[int, float] = Field(default_factory=dict)
    lambda0_coefficient: Optional[float] = None
    lambda0_exponent: Optional[float] = None
    dalang_ok: bool
    dalang_integral: float
    chaos_bound_ok: bool
    constants: Dict[str, Optional[float]] = Field(default_factory=dict)
    parametric_note: str = "depends on beta_H, D_alpha_d, C* as configured"
    diagnostics: Dict[str, float] = Field(default_factory=dict)

    def lambda0_at(self, t: float) -> float:
        if self.lambda0_coefficient is None:
            raise ValueError("lambda0 is not defined for this model")
        if math.isinf(self.lambda0_coefficient):
            return math.inf
        return self.lambda0_coefficient * t ** self.lambda0_exponent
