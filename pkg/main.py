# main.py
import argparse
import logging
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Type

from pydantic import ValidationError

from config import (APP_VERSION, AlphaConfig, CompareConfig, ConvergenceConfig, ExperimentConfig, ExpMomentConfig,
                    FkMomentConfig, JfConfig, KernelEvalConfig, LocalTimeConfig, PsiConfig, RegimeConfig,
                    SecondMomentConfig, SelftestConfig, Settings)
from dependencies import (build_initial, build_kernel, build_noise_model, build_weight, constants_for, get_settings,
                          resolve_seed, root_stream)
from exceptions import EXIT_NUMERICAL, EXIT_VALIDATION, ConfigurationError, NumericalFailure, SheMfcError
from invariants import run_invariants
from models import TimePair
from solvers import chaos, fk_moments, kernels, localtime, regime
from utils.output import build_document, emit, read_document_config

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"


@dataclass
class CommandResult:
    data: Any
    rows: Optional[List[Dict[str, Any]]] = None
    constants: Dict[str, Any] = field(default_factory=dict)
    default_format: str = "json"
    exit_code: int = 0


Handler = Callable[[Any, Settings, int, int], CommandResult]


# --- Command handlers ---

def _kernel_eval(cfg: KernelEvalConfig, settings: Settings, seed: int, workers: int) -> CommandResult:
    kernel = build_kernel(cfg)
    rel_tol = settings.quadrature.rel_tol
    rows = []
    for point in cfg.points:
        if cfg.quantity == "kernel":
            value = kernels.eval_kernel(kernel, point, rel_tol=rel_tol)
        elif cfg.quantity == "density":
            value = kernels.eval_spectral_density(kernel, point, convention=cfg.convention)
        else:
            value = kernels.mollified_kernel(kernel, cfg.eps, point, rel_tol=rel_tol)
        rows.append({"point": point, "value": value})
    return CommandResult(data=rows, rows=rows, constants=constants_for(kernel), default_format="csv")


def _jf(cfg: JfConfig, settings: Settings, seed: int, workers: int) -> CommandResult:
    kernel = build_kernel(cfg)
    estimate = kernels.j_f(kernel, cfg.u, cfg.v, cfg.y, cfg.z, method=cfg.method,
                           n_samples=cfg.n_samples or settings.monte_carlo.samples,
                           stream=root_stream("jf", seed), workers=workers)
    try:
        bound = kernels.kernel_bound(kernel, cfg.u, cfg.v)
    except SheMfcError:
        bound = None
    return CommandResult(data={"estimate": estimate, "bound": bound}, constants=constants_for(kernel))


def _psi(cfg: PsiConfig, settings: Settings, seed: int, workers: int) -> CommandResult:
    model = build_noise_model(cfg, settings)
    tp = TimePair(s=cfg.s, tvec=cfg.tvec, horizon=cfg.horizon)
    estimate = chaos.psi_n(model, tp, method=cfg.method, eps=cfg.eps,
                           n_samples=cfg.n_samples or settings.monte_carlo.samples,
                           stream=root_stream("psi", seed), workers=workers,
                           mixture_nodes=settings.quadrature.mixture_nodes)
    data = {"sigma": chaos.sigma_matrix(tp).entries, "estimate": estimate,
            "pointwise_bound": chaos.psi_pointwise_bound(model, tp)}
    return CommandResult(data=data, constants=constants_for(model.kernel, model))


def _alpha(cfg: AlphaConfig, settings: Settings, seed: int, workers: int) -> CommandResult:
    model = build_noise_model(cfg, settings)
    stream = root_stream("alpha", seed)
    rows = []
    for n in cfg.n_list:
        coefficient = chaos.alpha_n(model, n, cfg.t, method=cfg.method, eps=cfg.eps,
                                    n_time_samples=cfg.n_time_samples or settings.monte_carlo.n_time_samples,
                                    n_spectral_samples=cfg.n_spectral_samples or settings.monte_carlo.n_spectral_samples,
                                    stream=stream.named(f"alpha-{n}"), workers=workers,
                                    time_nodes=settings.quadrature.time_nodes, rel_tol=settings.quadrature.rel_tol)
        rows.append({"n": n, "mean": coefficient.value.mean, "stderr": coefficient.value.stderr,
                     "upper_bound": coefficient.upper_bound, "mode": coefficient.mode})
    return CommandResult(data=rows, rows=rows, constants=constants_for(model.kernel, model), default_format="csv")


def _second_moment(cfg: SecondMomentConfig, settings: Settings, seed: int, workers: int) -> CommandResult:
    model = build_noise_model(cfg, settings)
    stream = root_stream("second-moment", seed)
    rows, exit_code = [], 0
    for t in cfg.t_list:
        result = chaos.second_moment_series(
            model, t, n_max=cfg.n_max, tail_tol=cfg.tail_tol, stream=stream.named(f"t={t!r}"), workers=workers,
            n_time_samples=cfg.n_time_samples or settings.monte_carlo.n_time_samples,
            n_spectral_samples=cfg.n_spectral_samples or settings.monte_carlo.n_spectral_samples,
            time_nodes=settings.quadrature.time_nodes, rel_tol=settings.quadrature.rel_tol)
        if not result.converged:
            exit_code = EXIT_NUMERICAL
        rows.append({"t": t, "value": result.value, "stderr": result.stderr,
                     "truncation_order": result.truncation_order, "tail_bound": result.tail_bound,
                     "converged": result.converged, "reason": result.reason})
    return CommandResult(data=rows, rows=rows, constants=constants_for(model.kernel, model), default_format="csv",
                         exit_code=exit_code)


def _path_setup(cfg, settings: Settings):
    model = build_noise_model(cfg, settings)
    return (model, build_weight(cfg, model), cfg.n_paths or settings.monte_carlo.n_paths,
            cfg.n_steps or settings.monte_carlo.n_steps)


def _localtime_moments(cfg: LocalTimeConfig, settings: Settings, seed: int, workers: int) -> CommandResult:
    model, weight, n_paths, n_steps = _path_setup(cfg, settings)
    estimates = localtime.local_time_moment_estimates(model, weight, cfg.t, cfg.eps, cfg.moments, n_paths, n_steps,
                                                      root_stream("localtime", seed), workers)
    rows = [{"moment": e.moment, "eps": e.eps, "t": e.t, "mean": e.value.mean, "stderr": e.value.stderr,
             "n_steps": e.n_steps} for e in estimates]
    return CommandResult(data=rows, rows=rows, constants=constants_for(model.kernel, model), default_format="csv")


def _exp_moment(cfg: ExpMomentConfig, settings: Settings, seed: int, workers: int) -> CommandResult:
    model, weight, n_paths, n_steps = _path_setup(cfg, settings)
    estimates = localtime.exp_moment_table(model, weight, cfg.t, cfg.eps, cfg.lambdas, n_paths, n_steps,
                                           root_stream("localtime", seed), workers)
    rows = []
    for lam, estimate in zip(cfg.lambdas, estimates):
        try:
            bound = localtime.exp_moment_bound(model, weight, cfg.t, lam)
        except SheMfcError:
            bound = None
        rows.append({"lambda": lam, "mean": estimate.mean, "stderr": estimate.stderr, "bound": bound})
    return CommandResult(data=rows, rows=rows, constants=constants_for(model.kernel, model), default_format="csv")


def _convergence(cfg: ConvergenceConfig, settings: Settings, seed: int, workers: int) -> CommandResult:
    model, weight, n_paths, n_steps = _path_setup(cfg, settings)
    table = localtime.convergence_study(model, weight, cfg.t, cfg.eps_list, n_paths, n_steps,
                                        root_stream("localtime", seed), workers)
    rows = [row.model_dump() for row in table]
    return CommandResult(data=rows, rows=rows, constants=constants_for(model.kernel, model), default_format="csv")


def _fk_moment(cfg: FkMomentConfig, settings: Settings, seed: int, workers: int) -> CommandResult:
    model = build_noise_model(cfg, settings)
    u0 = build_initial(cfg)
    x = cfg.x or [0.0] * cfg.d
    n_steps = cfg.n_steps or settings.monte_carlo.n_steps
    n_samples = cfg.n_samples or settings.monte_carlo.n_paths
    stream = root_stream("fk-moment", seed)
    cap = settings.monte_carlo.exponent_cap_factor
    if cfg.extrapolate:
        data = fk_moments.fk_moment_extrapolated(model, u0, cfg.k, cfg.t, x, cfg.eps, n_steps, n_samples, stream,
                                                 workers, exponent_cap_factor=cap)
    else:
        data = fk_moments.fk_moment(model, u0, cfg.k, cfg.t, x, cfg.eps, n_steps, n_samples, stream, workers,
                                    exponent_cap_factor=cap)
    return CommandResult(data=data, constants=constants_for(model.kernel, model))


def _compare(cfg: CompareConfig, settings: Settings, seed: int, workers: int) -> CommandResult:
    model = build_noise_model(cfg, settings)
    report = fk_moments.compare_with_chaos(
        model, cfg.t, cfg.tail_tol, cfg.eps, cfg.n_steps or settings.monte_carlo.n_steps,
        cfg.n_samples or settings.monte_carlo.n_paths, root_stream("compare", seed), n_max=cfg.n_max,
        workers=workers, n_time_samples=settings.monte_carlo.n_time_samples,
        n_spectral_samples=settings.monte_carlo.n_spectral_samples)
    exit_code = EXIT_NUMERICAL if report.reason and report.reason.startswith("chaos series") else 0
    return CommandResult(data=report, constants=constants_for(model.kernel, model), exit_code=exit_code)


def _regime(cfg: RegimeConfig, settings: Settings, seed: int, workers: int) -> CommandResult:
    model = build_noise_model(cfg, settings)
    report = regime.existence_report(model, K=cfg.K)
    return CommandResult(data=report, constants=report.constants)


def _selftest(cfg: SelftestConfig, settings: Settings, seed: int, workers: int) -> CommandResult:
    results = run_invariants(root_stream("selftest", seed))
    rows = [r.model_dump() for r in results]
    failed = sum(not r.passed for r in results)
    return CommandResult(data={"checks": rows, "failed": failed}, rows=rows,
                         exit_code=EXIT_NUMERICAL if failed else 0)


COMMANDS: Dict[str, tuple] = {
    "kernel-eval": (KernelEvalConfig, _kernel_eval),
    "jf": (JfConfig, _jf),
    "psi": (PsiConfig, _psi),
    "alpha": (AlphaConfig, _alpha),
    "second-moment": (SecondMomentConfig, _second_moment),
    "localtime-moments": (LocalTimeConfig, _localtime_moments),
    "exp-moment": (ExpMomentConfig, _exp_moment),
    "convergence": (ConvergenceConfig, _convergence),
    "fk-moment": (FkMomentConfig, _fk_moment),
    "compare": (CompareConfig, _compare),
    "regime": (RegimeConfig, _regime),
    "selftest": (SelftestConfig, _selftest),
}


# --- Argument parsing ---

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file, or a file emitted by a previous run")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--output", help="output path (stdout when omitted)")
    parser.add_argument("--format", choices=["json", "csv"])
    parser.add_argument("--workers", type=int, help="worker threads (default: SHE_MFC_WORKERS or 1)")
    parser.add_argument("--log-level", dest="log_level")


def _add_kernel(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kernel", choices=["riesz", "bessel", "heat", "poisson"])
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--d", type=int)


def _add_model(parser: argparse.ArgumentParser) -> None:
    _add_kernel(parser)
    parser.add_argument("--H", type=float)
    parser.add_argument("--beta-h", dest="beta_h", type=float)
    parser.add_argument("--c-star", dest="c_star", type=float)


def _add_paths(parser: argparse.ArgumentParser) -> None:
    _add_model(parser)
    parser.add_argument("--t", type=float)
    parser.add_argument("--n-paths", dest="n_paths", type=int)
    parser.add_argument("--n-steps", dest="n_steps", type=int)
    parser.add_argument("--weight", choices=["fractional", "diagonal", "mollified"])
    parser.add_argument("--delta", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shemfc", description="Moments and regimes of the stochastic heat "
                                     "equation with fractional-colored multiplicative noise")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel-eval", help="evaluate f, g or p_eps * f at points")
    _add_common(p); _add_kernel(p)
    p.add_argument("--quantity", choices=["kernel", "density", "mollified"])
    p.add_argument("--points", type=float, nargs="+", help="flattened points, d coordinates each")
    p.add_argument("--eps", type=float)
    p.add_argument("--convention", choices=["consistent", "printed"])

    p = sub.add_parser("jf", help="J_f(u, v, y, z)")
    _add_common(p); _add_kernel(p)
    for name in ("u", "v"):
        p.add_argument(f"--{name}", type=float)
    for name in ("y", "z"):
        p.add_argument(f"--{name}", type=float, nargs="+")
    p.add_argument("--method", choices=["closed", "mc", "quadrature"])
    p.add_argument("--n-samples", dest="n_samples", type=int)

    p = sub.add_parser("psi", help="psi^(n)(s, t)")
    _add_common(p); _add_model(p)
    p.add_argument("--s", type=float, nargs="+")
    p.add_argument("--tvec", type=float, nargs="+")
    p.add_argument("--horizon", type=float)
    p.add_argument("--method", choices=["closed1", "mc", "mixture"])
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--eps", type=float)

    p = sub.add_parser("alpha", help="chaos coefficients alpha_n(t)")
    _add_common(p); _add_model(p)
    p.add_argument("--n-list", dest="n_list", type=int, nargs="+")
    p.add_argument("--t", type=float)
    p.add_argument("--method", choices=["quadrature", "mc"])
    p.add_argument("--n-time-samples", dest="n_time_samples", type=int)
    p.add_argument("--n-spectral-samples", dest="n_spectral_samples", type=int)
    p.add_argument("--eps", type=float)

    p = sub.add_parser("second-moment", help="truncated chaos series for E|u|^2")
    _add_common(p); _add_model(p)
    p.add_argument("--t-list", dest="t_list", type=float, nargs="+")
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--tail-tol", dest="tail_tol", type=float)
    p.add_argument("--n-time-samples", dest="n_time_samples", type=int)
    p.add_argument("--n-spectral-samples", dest="n_spectral_samples", type=int)

    p = sub.add_parser("localtime-moments", help="moments of the regularised local time")
    _add_common(p); _add_paths(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--moments", type=int, nargs="+")

    p = sub.add_parser("exp-moment", help="exponential moments of the regularised local time")
    _add_common(p); _add_paths(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--lambdas", type=float, nargs="+")

    p = sub.add_parser("convergence", help="eps -> 0 study on common random numbers")
    _add_common(p); _add_paths(p)
    p.add_argument("--eps-list", dest="eps_list", type=float, nargs="+")

    p = sub.add_parser("fk-moment", help="Feynman-Kac moment E[u^k]")
    _add_common(p); _add_model(p)
    p.add_argument("--k", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--x", type=float, nargs="+")
    p.add_argument("--eps", type=float)
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--initial", choices=["constant", "cosine", "gaussian_bump"])
    p.add_argument("--amplitude", type=float)
    p.add_argument("--frequency", type=float, nargs="+")
    p.add_argument("--length-scale", dest="length_scale", type=float)
    p.add_argument("--extrapolate", action="store_true", default=None)

    p = sub.add_parser("compare", help="Feynman-Kac versus chaos series for E|u|^2")
    _add_common(p); _add_model(p)
    p.add_argument("--t", type=float)
    p.add_argument("--tail-tol", dest="tail_tol", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--n-samples", dest="n_samples", type=int)

    p = sub.add_parser("regime", help="existence regime and critical times")
    _add_common(p); _add_model(p)
    p.add_argument("--K", type=int)

    p = sub.add_parser("selftest", help="run the invariant battery")
    _add_common(p)
    return parser


# Flags that steer the run but do not change its result
_RUNTIME_FLAGS = {"config", "workers", "log_level", "command"}


def load_experiment_config(args: argparse.Namespace, config_cls: Type[ExperimentConfig]) -> ExperimentConfig:
    values: Dict[str, Any] = read_document_config(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in _RUNTIME_FLAGS or value is None:
            continue
        values[key] = value
    if config_cls is KernelEvalConfig and "points" in values and values["points"] \
            and not isinstance(values["points"][0], list):
        d = values.get("d")
        flat = values["points"]
        if not d or len(flat) % d:
            raise ConfigurationError(f"--points needs a multiple of d={d} coordinates")
        values["points"] = [flat[i:i + d] for i in range(0, len(flat), d)]
    return config_cls.model_validate(values)


def _recorded(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Config echoed into the output; the output path is left out so reruns reproduce the file."""
    return cfg.model_dump(mode="json", exclude={"output"})


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = get_settings()
    except ConfigurationError as e:
        logging.basicConfig(level=logging.ERROR, format=LOG_FORMAT, stream=sys.stderr)
        logger.error(f"Configuration failed: {e}")
        return e.exit_code
    logging.basicConfig(level=(args.log_level or settings.log_level).upper(), format=LOG_FORMAT, stream=sys.stderr)
    workers = args.workers or settings.workers

    config_cls, handler = COMMANDS[args.command]
    try:
        cfg = load_experiment_config(args, config_cls)
        seed = resolve_seed(cfg, settings)
        cfg = cfg.model_copy(update={"seed": seed})
        logger.info(f"Running {args.command} with seed={seed} on {workers} worker(s)")
        result = handler(cfg, settings, seed, workers)
    except ValidationError as e:
        logger.error(f"Invalid {args.command} configuration: {e}")
        return EXIT_VALIDATION
    except NumericalFailure as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        if e.partial is not None:
            document = build_document(args.command, _recorded(cfg), {"partial": e.partial},
                                      settings.schema_version, APP_VERSION)
            emit(document, None, "json", cfg.output)
        return e.exit_code
    except SheMfcError as e:
        logger.error(f"{args.command} rejected: {e}")
        return e.exit_code

    fmt = cfg.format or result.default_format
    document = build_document(args.command, _recorded(cfg), result.data, settings.schema_version,
                              APP_VERSION, result.constants)
    try:
        emit(document, result.rows, fmt, cfg.output)
    except ConfigurationError as e:
        logger.error(str(e))
        return e.exit_code
    except OSError as e:
        logger.error(f"Cannot write output: {e}", exc_info=True)
        return EXIT_VALIDATION
    return result.exit_code


if __name__ == "__main__":
    sys.exit(run())
