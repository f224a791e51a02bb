# invariants.py
"""Invariant battery run by the ``selftest`` subcommand.

Each check is small enough to run in seconds; the pytest suite covers the same
ground at acceptance scale.
"""
import logging
import math
from typing import Callable, List, Tuple

import numpy as np
from pydantic import BaseModel

from exceptions import SheMfcError
from mc_engine import PathBundle, RngStream, StreamingStats, parallel_reduce, stats_merge, tree_merge
from models import InitialCondition, InitialKind, NoiseModel, RegimeStatus, TimePair, WeightSpec
from solvers.analytic import simplex_integral, simplex_integral_quadrature
from solvers.chaos import PsiMethod, alpha_n, psi_n, sigma_matrix
from solvers.fk_moments import heat_semigroup
from solvers.kernels import j_f, make_kernel, mollified_kernel
from solvers.localtime import local_time_on_paths
from solvers.regime import critical_time_t0, existence_report

logger = logging.getLogger(__name__)

Check = Callable[[RngStream], Tuple[bool, str]]
_CHECKS: List[Tuple[str, Check]] = []


class InvariantResult(BaseModel):
    name: str
    passed: bool
    detail: str


def invariant(name: str):
    def register(func: Check) -> Check:
        _CHECKS.append((name, func))
        return func
    return register


def _close(value: float, target: float, rel: float) -> bool:
    return abs(value - target) <= rel * abs(target)


@invariant("simplex integral closed form matches nested quadrature")
def _simplex(stream: RngStream) -> Tuple[bool, str]:
    worst = 0.0
    for n in (1, 2):
        for h in (-0.3, 0.5):
            exact, oracle = simplex_integral(n, 1.0, h), simplex_integral_quadrature(n, 1.0, h)
            worst = max(worst, abs(exact - oracle) / oracle)
    ok = worst <= 1e-6 and _close(simplex_integral(1, 1.0, -0.5), 2.0, 1e-12)
    return ok, f"max relative error {worst:.2e}"


@invariant("Riesz mollified kernel: hypergeometric form equals the mixture integral")
def _riesz_mollified(stream: RngStream) -> Tuple[bool, str]:
    kernel = make_kernel("riesz", 1.0, 2)
    closed = mollified_kernel(kernel, 0.3, [0.7, 0.0], method="closed")
    mixed = mollified_kernel(kernel, 0.3, [0.7, 0.0], method="subordination")
    return _close(closed, mixed, 1e-6), f"closed={closed:.10g}, mixture={mixed:.10g}"


@invariant("psi^(1) closed form and alpha_1 at H = 1/2 for Riesz(d=2, alpha=1)")
def _psi_closed(stream: RngStream) -> Tuple[bool, str]:
    model = NoiseModel(H=0.5, d=2, kernel=make_kernel("riesz", 1.0, 2))
    psi = psi_n(model, TimePair(s=[0.5], tvec=[0.5], horizon=1.0), method=PsiMethod.CLOSED1).mean
    a1 = alpha_n(model, 1, 1.0, method="quadrature").value.mean
    ok = _close(psi, 0.5 / math.sqrt(2.0 * math.pi), 1e-9) and _close(a1, 1.0 / math.sqrt(4.0 * math.pi), 1e-6)
    return ok, f"psi={psi:.9g}, alpha_1={a1:.9g}"


@invariant("sigma matrix entries are sums of minima")
def _sigma(stream: RngStream) -> Tuple[bool, str]:
    sigma = sigma_matrix(TimePair(s=[0.2, 0.4], tvec=[0.1, 0.3], horizon=1.0)).array
    return bool(np.allclose(sigma, [[0.3, 0.3], [0.3, 0.7]])), f"sigma={sigma.tolist()}"


@invariant("heat-kernel J_f Monte Carlo agrees with the closed form")
def _jf(stream: RngStream) -> Tuple[bool, str]:
    kernel = make_kernel("heat", 1.0, 1)
    exact = j_f(kernel, 0.3, 0.4, [0.2], [-0.1]).mean
    estimate = j_f(kernel, 0.3, 0.4, [0.2], [-0.1], method="mc", n_samples=20_000, stream=stream.named("jf"))
    return estimate.within(exact, 4.0), f"exact={exact:.6g}, mc={estimate.mean:.6g} +- {estimate.stderr:.2g}"


@invariant("local time on frozen zero paths equals the closed form")
def _frozen(stream: RngStream) -> Tuple[bool, str]:
    target = 1.0 / math.sqrt(4.0 * math.pi)
    zero = PathBundle(k=2, d=1, t=1.0, n_steps=64, values=np.zeros((2, 65, 1)))
    values = []
    for H in (0.5, 0.75):
        model = NoiseModel(H=H, d=1, kernel=make_kernel("heat", 1.0, 1))
        values.append(local_time_on_paths(model, WeightSpec.for_hurst(H), zero, 1.0))
    return all(_close(v, target, 1e-10) for v in values), f"values={values}, target={target:.10g}"


@invariant("regime truth table and t0 ratio")
def _regime(stream: RngStream) -> Tuple[bool, str]:
    riesz = lambda d: make_kernel("riesz", 1.0, d)
    cases = [((2, 0.5), RegimeStatus.EXISTS), ((3, 0.5), RegimeStatus.NOT_EXISTS),
             ((3, 0.75), RegimeStatus.EXISTS), ((4, 0.8), RegimeStatus.UNKNOWN)]
    ok = True
    for (d, H), expected in cases:
        ok &= existence_report(NoiseModel(H=H, d=d, kernel=riesz(d)), K=3).status is expected
    model = NoiseModel(H=0.75, d=3, kernel=riesz(3))
    ratio = critical_time_t0(model, 3) / critical_time_t0(model, 2)
    ok &= abs(ratio - 1.0 / 9.0) <= 1e-12
    return bool(ok), f"t0(3)/t0(2)={ratio:.15g}"


@invariant("heat semigroup acts on cosine as a Gaussian characteristic function")
def _semigroup(stream: RngStream) -> Tuple[bool, str]:
    u0 = InitialCondition(kind=InitialKind.COSINE, frequency=[1.0])
    value = heat_semigroup(u0, 0.7, [0.3])
    target = math.exp(-0.35) * math.cos(0.3)
    return _close(value, target, 1e-10), f"value={value:.12g}, target={target:.12g}"


@invariant("parallel reduction is independent of the worker count")
def _reproducible(stream: RngStream) -> Tuple[bool, str]:
    def evaluator(chunk):
        return chunk.generator().standard_normal(chunk.size)

    one = parallel_reduce(5000, evaluator, stream.named("repro"), workers=1, chunk_size=100)
    four = parallel_reduce(5000, evaluator, stream.named("repro"), workers=4, chunk_size=100)
    parts = [StreamingStats.from_samples(np.arange(i, i + 7.0)) for i in range(5)]
    pooled = StreamingStats.from_samples(np.concatenate([np.arange(i, i + 7.0) for i in range(5)]))
    merged = tree_merge(parts)
    left = stats_merge(stats_merge(parts[0], parts[1]), parts[2])
    right = stats_merge(parts[0], stats_merge(parts[1], parts[2]))
    ok = (float(one.mean) == float(four.mean) and float(one.m2) == float(four.m2)
          and math.isclose(float(merged.mean), float(pooled.mean)) and math.isclose(float(merged.m2), float(pooled.m2))
          and math.isclose(float(left.m2), float(right.m2)))
    return ok, f"mean={float(one.mean):.17g}"


def run_invariants(stream: RngStream) -> List[InvariantResult]:
    results = []
    for name, check in _CHECKS:
        try:
            passed, detail = check(stream)
        except SheMfcError as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        level = logging.INFO if passed else logging.ERROR
        logger.log(level, f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        results.append(InvariantResult(name=name, passed=bool(passed), detail=detail))
    return results
