"""
Experiment pipelines shared by the CLI and the HTTP server.

Every pipeline returns a flat, ordered key/value report; the writers below turn
reports and traces into the on-disk formats (`key=value` text, `k,error` CSV).
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from imopt.config import (
    ControlEntry,
    ConvexQuadraticConfig,
    ExperimentConfig,
    ExplicitModel,
    NonQuadraticConfig,
    PeriodicModel,
    TvHessianConfig,
)
from imopt.control.signal_models import (
    USES_OMEGA,
    InternalModel,
    annihilation_residual,
    denominator_for,
    periodic_internal_model,
    signal_sequence,
)
from imopt.control.synthesis import Controller, synthesize, synthesize_fastest, verify_stability
from imopt.errors import (
    BoundUndefinedError,
    ConfigurationError,
    Infeasible,
    LmiNoConvergence,
    OracleError,
    SynthesisError,
)
from imopt.logger import logger
from imopt.tracking.algorithms import Method, run
from imopt.tracking.analysis import (
    ModelMismatch,
    TrackingTrace,
    asymptotic_error,
    error_bound_general,
    error_bound_inexact,
    loop_norm_bounds,
    small_gain_check,
)
from imopt.tracking.problems import (
    OnlineProblem,
    QuadraticProblem,
    non_quadratic_problem,
    random_quadratic,
    tv_hessian_problem,
)

Report = Dict[str, str]


def fmt(value) -> str:
    """Render a report value: floats with 15 significant digits, sequences comma-joined"""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{float(value):.15g}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ",".join(fmt(float(v)) for v in value) + "]"
    return str(value)


@dataclass
class RunOutcome:
    report: Report
    traces: Dict[str, TrackingTrace] = field(default_factory=dict)
    infeasible: bool = False
    failed: bool = False


def build_problem(cfg: ExperimentConfig) -> OnlineProblem:
    bounds = cfg.spectral_bounds
    signal = cfg.signal_spec()
    problem_seed, _ = cfg.seeds()
    spec = cfg.problem
    if isinstance(spec, ConvexQuadraticConfig):
        rank = spec.rank if spec.rank is not None else cfg.n // 2
        if not 1 <= rank < cfg.n:
            raise ConfigurationError(f"convex_quadratic needs 1 <= rank < n, got rank {rank} with n {cfg.n}")
        return random_quadratic(cfg.n, bounds, signal, problem_seed, cfg.sampling, rank=rank)
    if isinstance(spec, TvHessianConfig):
        return tv_hessian_problem(cfg.n, bounds, signal, problem_seed, cfg.sampling, spec.omega, spec.gamma0)
    if isinstance(spec, NonQuadraticConfig):
        return non_quadratic_problem(cfg.n, bounds, signal, problem_seed, cfg.sampling, spec.omega)
    return random_quadratic(cfg.n, bounds, signal, problem_seed, cfg.sampling)


def problem_omega(cfg: ExperimentConfig) -> Optional[float]:
    if isinstance(cfg.problem, (TvHessianConfig, NonQuadraticConfig)):
        return cfg.problem.omega
    return cfg.signal.omega


def resolve_model(cfg: ExperimentConfig, entry: ControlEntry) -> InternalModel:
    """Internal model of a control entry: derived from the signal, given, or periodic"""
    source = entry.model
    if isinstance(source, ExplicitModel):
        try:
            return InternalModel(coeffs=tuple(source.coeffs))
        except ConfigurationError as e:
            raise ConfigurationError(f"invalid explicit model: {e}") from e
    if isinstance(source, PeriodicModel):
        period = source.period
        if period is None:
            omega = problem_omega(cfg)
            if omega is None:
                raise ConfigurationError("periodic model needs a period or a problem/signal omega")
            period = 2.0 * math.pi / omega
        return periodic_internal_model(period, cfg.sampling, source.harmonics)
    if cfg.problem.kind not in ("quadratic", "convex_quadratic"):
        raise ConfigurationError(
            f"automatic internal models only describe the linear term; use a periodic or explicit model "
            f"for {cfg.problem.kind} problems"
        )
    return denominator_for(cfg.signal_spec(), cfg.sampling)


def design_controller(model: InternalModel, cfg: ExperimentConfig, entry: ControlEntry) -> Union[Controller, Infeasible]:
    bounds = cfg.spectral_bounds
    if entry.rate is not None:
        return synthesize(model, bounds, rate=entry.rate)
    if entry.rate_search:
        return synthesize_fastest(model, bounds, rate_tol=entry.rate_tol)
    return synthesize(model, bounds)


def control_entries(cfg: ExperimentConfig) -> List[Tuple[str, ControlEntry]]:
    return [(label, entry) for label, entry in zip(cfg.labels(), cfg.algorithms) if isinstance(entry, ControlEntry)]


def provenance(cfg: ExperimentConfig) -> Report:
    return {
        "schema_version": "1",
        "problem": cfg.problem.kind,
        "signal": cfg.signal.kind.value,
        "n": str(cfg.n),
        "seed": str(cfg.seed),
        "bounds": fmt(list(cfg.bounds)),
        "Ts": fmt(cfg.sampling.Ts),
        "horizon": str(cfg.sampling.horizon),
    }


def controller_fields(label: str, ctrl: Controller) -> Report:
    return {
        f"{label}.model": fmt(ctrl.model.coeffs),
        f"{label}.K": fmt(ctrl.K),
        f"{label}.rate": fmt(ctrl.rate),
    }


def synthesize_pipeline(cfg: ExperimentConfig) -> RunOutcome:
    """Controller report for every control entry"""
    entries = control_entries(cfg)
    if not entries:
        raise ConfigurationError("no control entry to synthesize")
    outcome = RunOutcome(report=provenance(cfg))
    bounds = cfg.spectral_bounds
    for label, entry in entries:
        model = resolve_model(cfg, entry)
        result = design_controller(model, cfg, entry)
        report = outcome.report
        if isinstance(result, Infeasible):
            outcome.infeasible = True
            report[f"{label}.model"] = fmt(model.coeffs)
            report[f"{label}.verdict"] = "infeasible"
            report[f"{label}.margin_bound"] = fmt(result.margin)
            report[f"{label}.message"] = (
                f"{result.message}; the controller may not exist for this model and conditioning, "
                "fall back to the online gradient"
            )
            logger.warning(f"Synthesis - {label}: infeasible ({result.message})")
            continue
        report.update(controller_fields(label, result))
        report[f"{label}.verdict"] = "feasible"
        report[f"{label}.endpoint_margins"] = fmt(result.endpoint_margins)
        report[f"{label}.lmi_margin"] = fmt(result.lmi_margin)
        report[f"{label}.grid_spectral_radius"] = fmt(verify_stability(result, bounds, 100))
    return outcome


def _simulate_entry(cfg: ExperimentConfig, problem: OnlineProblem, label: str, entry,
                    outcome: RunOutcome) -> Optional[TrackingTrace]:
    report = outcome.report
    report[f"{label}.seed"] = str(cfg.seed)
    if isinstance(entry, ControlEntry):
        model = resolve_model(cfg, entry)
        result = design_controller(model, cfg, entry)
        if isinstance(result, Infeasible):
            alpha = problem.bounds.default_alpha
            logger.warning(f"Simulate - {label}: synthesis infeasible, falling back to the online gradient "
                           f"(alpha={alpha:g})")
            report[f"{label}.model"] = fmt(model.coeffs)
            report[f"{label}.fallback"] = "gradient"
            report[f"{label}.alpha"] = fmt(alpha)
            return run(Method.GRADIENT, problem, alpha=alpha)
        report.update(controller_fields(label, result))
        if problem.kind in ("quadratic", "convex_quadratic"):
            residual = annihilation_residual(model, signal_sequence(problem.signal, problem.sampling))
            report[f"{label}.model_residual"] = fmt(residual)
        return run(Method.CONTROL, problem, controller=result)

    alpha = entry.alpha if entry.alpha is not None else problem.bounds.default_alpha
    report[f"{label}.alpha"] = fmt(alpha)
    return run(Method(entry.method), problem, alpha=alpha)


def simulate_pipeline(cfg: ExperimentConfig) -> RunOutcome:
    """Run every configured algorithm on the same problem instance"""
    problem = build_problem(cfg)
    outcome = RunOutcome(report=provenance(cfg))
    for label, entry in zip(cfg.labels(), cfg.algorithms):
        try:
            trace = _simulate_entry(cfg, problem, label, entry, outcome)
        except (OracleError, LmiNoConvergence, SynthesisError) as e:
            logger.error(f"Simulate - {label} failed: {e}", exc_info=True)
            outcome.report[f"{label}.status"] = f"failed: {e}"
            outcome.failed = True
            continue
        outcome.traces[label] = trace
        summarize_trace(outcome.report, label, trace)
        if trace.overflow:
            outcome.failed = True
    return outcome


def summarize_trace(report: Report, label: str, trace: TrackingTrace) -> None:
    report[f"{label}.overflow"] = fmt(trace.overflow)
    if len(trace) >= 5:
        report[f"{label}.asymptotic_error"] = fmt(asymptotic_error(trace))
    else:
        report[f"{label}.asymptotic_error"] = "undefined"
    report[f"{label}.final_error"] = fmt(float(trace.errors[-1]))


def sweep_pipeline(cfg: ExperimentConfig) -> RunOutcome:
    """
    Controllers built on inexact models obtained by replacing the signal's omega
    with each sweep value, simulated against the true signal.
    """
    if cfg.sweep is None:
        raise ConfigurationError("sweep requires a 'sweep' section")
    spec = cfg.signal_spec()
    if spec.kind not in USES_OMEGA:
        raise ConfigurationError(f"omega_hat sweeps need a sine-based signal, got '{spec.kind.value}'")
    if cfg.problem.kind != "quadratic":
        raise ConfigurationError("omega_hat sweeps are defined for quadratic problems")
    entries = control_entries(cfg)
    entry = entries[0][1] if entries else ControlEntry()

    problem = build_problem(cfg)
    bounds = cfg.spectral_bounds
    true_model = denominator_for(spec, cfg.sampling)
    beta = problem.perturbation_bounds().beta
    outcome = RunOutcome(report=provenance(cfg))
    report = outcome.report
    report["true_model"] = fmt(true_model.coeffs)

    baseline = run(Method.GRADIENT, problem, alpha=bounds.default_alpha)
    outcome.traces["gradient"] = baseline
    summarize_trace(report, "gradient", baseline)

    for value in cfg.sweep.values:
        key = f"omega_hat_{value:g}"
        assumed = denominator_for(spec.with_omega(value), cfg.sampling)
        try:
            ctrl = design_controller(assumed, cfg, entry)
        except (LmiNoConvergence, SynthesisError) as e:
            logger.error(f"Sweep - {key} failed: {e}", exc_info=True)
            report[f"{key}.status"] = f"failed: {e}"
            outcome.failed = True
            continue
        if isinstance(ctrl, Infeasible):
            report[f"{key}.verdict"] = "infeasible"
            outcome.infeasible = True
            continue
        report.update(controller_fields(key, ctrl))
        trace = run(Method.CONTROL, problem, controller=ctrl)
        outcome.traces[key] = trace
        summarize_trace(report, key, trace)
        mismatch = ModelMismatch.between(true_model, assumed)
        report[f"{key}.mismatch_one_norm"] = fmt(mismatch.one_norm)
        report[f"{key}.bound"] = fmt(error_bound_inexact(ctrl, mismatch, bounds, beta))
    return outcome


def bounds_pipeline(cfg: ExperimentConfig) -> RunOutcome:
    """Loop norms, small-gain margin and the tracking-error bounds of every control entry"""
    entries = control_entries(cfg)
    if not entries:
        raise ConfigurationError("no control entry to analyse")
    problem = build_problem(cfg)
    bounds = cfg.spectral_bounds
    pert = problem.perturbation_bounds()
    outcome = RunOutcome(report=provenance(cfg))
    report = outcome.report
    report["beta"] = fmt(pert.beta)
    report["delta"] = fmt(pert.delta)
    report["gamma"] = fmt(pert.gamma)
    if pert.delta_stated is not None:
        report["delta_stated"] = fmt(pert.delta_stated)

    for label, entry in entries:
        model = resolve_model(cfg, entry)
        ctrl = design_controller(model, cfg, entry)
        if isinstance(ctrl, Infeasible):
            report[f"{label}.verdict"] = "infeasible"
            outcome.infeasible = True
            continue
        report.update(controller_fields(label, ctrl))
        norms = loop_norm_bounds(ctrl, bounds)
        report[f"{label}.N1"] = fmt(norms[0])
        report[f"{label}.N2"] = fmt(norms[1])
        check = small_gain_check(ctrl, bounds, pert.gamma, norms=norms)
        report[f"{label}.small_gain_passed"] = fmt(check.passed)
        report[f"{label}.small_gain_margin"] = fmt(check.margin)
        try:
            report[f"{label}.bound_general"] = fmt(error_bound_general(ctrl, bounds, pert, norms=norms))
        except BoundUndefinedError as e:
            logger.warning(f"Bounds - {label}: {e}")
            report[f"{label}.bound_general"] = "undefined"
        report[f"{label}.bound_inexact"] = _inexact_bound(cfg, problem, ctrl, entry, pert.beta)
    return outcome


def _inexact_bound(cfg: ExperimentConfig, problem: OnlineProblem, ctrl: Controller,
                   entry: ControlEntry, beta: float) -> str:
    """Mismatch bound against the signal's own model; defined for linear-term problems only"""
    if not isinstance(problem, QuadraticProblem):
        return "undefined"
    try:
        true_model = denominator_for(cfg.signal_spec(), cfg.sampling)
        mismatch = ModelMismatch.between(true_model, ctrl.model)
    except ConfigurationError as e:
        logger.debug(f"Bounds - no mismatch bound: {e}")
        return "undefined"
    return fmt(error_bound_inexact(ctrl, mismatch, cfg.spectral_bounds, beta))


def write_report(path: Path, report: Report) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key, value in report.items():
            f.write(f"{key}={value}\n")


def write_trace_csv(path: Path, trace: TrackingTrace) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("k,error\n")
        for k, err in enumerate(trace.errors):
            f.write(f"{k},{np.format_float_positional(err, precision=15, unique=False, fractional=False)}\n")


def trace_filename(label: str) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in label)
    return f"trace_{safe}.csv"


def write_outcome(out_dir: Path, outcome: RunOutcome, report_name: str) -> None:
    for label, trace in outcome.traces.items():
        write_trace_csv(out_dir / trace_filename(label), trace)
    write_report(out_dir / report_name, outcome.report)
    logger.info(f"Results written to {out_dir}")
