"""
Experiment orchestration: selectors x FF modes x students.

Each (condition, student) session is a pure function of its derived random
streams, so work is split into contiguous student chunks and fanned out over
a process pool; `Executor.map` hands results back in submission order, which
keeps every output file independent of the worker count.
"""
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from functools import partial
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ffsim import __version__
from ffsim.config import settings
from ffsim.exceptions import UsageError
from ffsim.models import Regime, RunToMastery, SelectorKind, SkillModel
from ffsim.schemas import ExperimentConfig, FitDiagnostics, FitSettings
from ffsim.services import afm_fit
from ffsim.services.afm_student import AfmParams, load_afm_params, params_to_document
from ffsim.services.bkt_tracer import BktParamTable
from ffsim.services.experiment_config import (
    NON_RESULT_FIELDS,
    Condition,
    build_bkt_params,
    config_digest,
    plan_conditions,
    regime_of,
)
from ffsim.services.export_service import ExportService, TraceRow
from ffsim.services.metrics import (
    ConditionSummary,
    ReductionReport,
    StudentMetrics,
    compute_student_metrics,
    reduction_report,
    summarize,
)
from ffsim.services.session_engine import SessionConfig, SessionRecord, regime_label, run_session
from ffsim.services.skill_pool import ProblemPool, load_pool_file
from ffsim.services.step_log import read_step_log
from ffsim.utils.performance_monitor import measure_time, monitor_time
from ffsim.utils.random_streams import RESPONSE_STREAM, SELECTION_STREAM, THETA_STREAM

logger = logging.getLogger(__name__)

CHUNK_SIZE = 250

StudentResult = Tuple[StudentMetrics, Optional[List[TraceRow]]]


@dataclass(frozen=True)
class SimulationContext:
    """Everything a worker needs to simulate any student of any condition."""

    skill_model: SkillModel
    pool: ProblemPool
    bkt_params: BktParamTable
    afm_params: AfmParams
    regime: Regime
    master_seed: int
    trace: bool
    step_cap: int


@dataclass
class ExperimentResult:
    output_dir: Path
    conditions: List[Condition]
    summaries: List[ConditionSummary]
    reductions: List[ReductionReport]
    metrics: Dict[Tuple[str, bool], List[StudentMetrics]]


def build_context(config: ExperimentConfig) -> SimulationContext:
    skill_model, pool = load_pool_file(config.pool_path)
    afm_params = load_afm_params(config.afm_params_path, skill_model)
    if config.theta_mean is not None or config.theta_sd is not None:
        afm_params = afm_params.with_theta(theta_mean=config.theta_mean, theta_sd=config.theta_sd)
    return SimulationContext(
        skill_model=skill_model,
        pool=pool,
        bkt_params=build_bkt_params(config, skill_model),
        afm_params=afm_params,
        regime=regime_of(config),
        master_seed=config.master_seed,
        trace=config.trace,
        step_cap=settings.step_cap,
    )


def trace_rows(record: SessionRecord, skill_model: SkillModel) -> List[TraceRow]:
    ff = 1 if record.fast_forward else 0
    return [
        (
            record.student_index,
            record.selector.value,
            ff,
            event.problem_id,
            event.step_position,
            skill_model[event.skill].name,
            1 if event.was_mastered_before else 0,
            None if event.correct is None else int(event.correct),
            1 if event.fast_forwarded else 0,
        )
        for event in record.events
    ]


def simulate_student(context: SimulationContext, condition: Condition, student_index: int) -> StudentResult:
    session = SessionConfig(
        regime=context.regime,
        selector=condition.selector,
        fast_forward=condition.fast_forward,
        master_seed=context.master_seed,
        student_index=student_index,
        step_cap=context.step_cap,
    )
    record = run_session(session, context.pool, context.bkt_params, context.afm_params)
    metrics = compute_student_metrics(record, context.skill_model, context.bkt_params)
    return metrics, (trace_rows(record, context.skill_model) if context.trace else None)


def simulate_chunk(context: SimulationContext, task: Tuple[Condition, int, int]) -> List[StudentResult]:
    condition, start, stop = task
    return [simulate_student(context, condition, index) for index in range(start, stop)]


def plan_tasks(conditions: Sequence[Condition], n_students: int, chunk_size: int = CHUNK_SIZE) -> List[Tuple[Condition, int, int]]:
    return [
        (condition, start, min(start + chunk_size, n_students))
        for condition in conditions
        for start in range(0, n_students, chunk_size)
    ]


def iter_condition_results(
    context: SimulationContext,
    conditions: Sequence[Condition],
    n_students: int,
    jobs: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> Iterator[Tuple[Condition, List[StudentResult]]]:
    """Yield each condition's per-student results in student order, conditions in the given order."""
    tasks = plan_tasks(conditions, n_students, chunk_size)
    worker = partial(simulate_chunk, context)
    chunks_per_condition = len(tasks) // len(conditions) if conditions else 0

    def consume(chunks: Iterator[List[StudentResult]]):
        for condition in conditions:
            results: List[StudentResult] = []
            with measure_time(f"condition {condition.label}"):
                for _ in range(chunks_per_condition):
                    results.extend(next(chunks))
            yield condition, results

    if jobs <= 1:
        yield from consume(map(worker, tasks))
        return

    with ProcessPoolExecutor(max_workers=jobs) as executor:
        yield from consume(executor.map(worker, tasks))


def pilot_steps_to_mastery(config: ExperimentConfig, n_students: int, jobs: int = 1) -> np.ndarray:
    """
    Steps to mastery of MasteryHard without Fast-Forwarding, run to mastery.

    The median of the returned array is the value to pin as `budget` in a
    budget-regime config built on the same pool and AFM parameters.
    """
    context = replace(build_context(config), regime=RunToMastery(), trace=False)
    condition = Condition(selector=SelectorKind.MASTERY_HARD, fast_forward=False)
    _, results = next(iter_condition_results(context, [condition], n_students, jobs=jobs))
    return np.array([metrics.steps_to_mastery for metrics, _ in results], dtype=int)


def _metadata(config: ExperimentConfig, context: SimulationContext, conditions: Sequence[Condition]) -> Dict:
    resolved = config.model_dump(exclude=set(NON_RESULT_FIELDS))
    return {
        "version": __version__,
        "master_seed": config.master_seed,
        "config_digest": config_digest(config),
        "regime": regime_label(context.regime),
        "n_students": config.n_students,
        "conditions": [condition.label for condition in conditions],
        "resolved_config": resolved,
        "afm_theta": {"mean": context.afm_params.theta_mean, "sd": context.afm_params.theta_sd},
        "stream_keys": {
            "theta": [THETA_STREAM, "student_index"],
            "selection": [SELECTION_STREAM, "condition_id", "student_index"],
            "response": [RESPONSE_STREAM, "condition_id", "student_index"],
        },
        "condition_ids": {condition.selector.value: condition.selector.condition_id for condition in conditions},
        "underpractice_unit": "skills unmastered at session end",
    }


@monitor_time()
def run_experiment(
    config: ExperimentConfig,
    jobs: Optional[int] = None,
    xlsx: bool = False,
) -> ExperimentResult:
    """
    Simulate every (selector, ff) condition and write the result files.

    Args:
        config: A validated experiment config
        jobs: Worker processes; overrides config.jobs and settings.default_jobs
        xlsx: Also write summary.xlsx

    Returns:
        Summaries, reductions and per-student metrics of the run
    """
    jobs = jobs or config.jobs or settings.default_jobs
    if jobs < 1:
        raise UsageError(f"jobs must be >= 1, got {jobs}", argument="jobs")

    started = time.perf_counter()
    context = build_context(config)
    conditions = plan_conditions(config)
    output_dir = Path(config.output_dir)
    logger.info(
        f"Running {len(conditions)} condition(s) x {config.n_students} students "
        f"({regime_label(context.regime)}, seed {config.master_seed}, {jobs} job(s))"
    )

    per_condition: Dict[Tuple[str, bool], List[StudentMetrics]] = {}
    summaries: List[ConditionSummary] = []
    with ExportService(output_dir, context.skill_model, trace=config.trace, xlsx=xlsx) as export:
        for condition, results in iter_condition_results(context, conditions, config.n_students, jobs):
            metrics = [m for m, _ in results]
            export.write_students(metrics)
            if config.trace:
                for _, rows in results:
                    export.write_trace(rows)
            per_condition[(condition.selector.value, condition.fast_forward)] = metrics
            summary = summarize(metrics, condition.selector, condition.fast_forward)
            summaries.append(summary)
            logger.info(
                f"{condition.label}: mean overpractice {summary.overpractice_mean:.3f}, "
                f"mean underpractice {summary.underpractice_mean:.3f}"
            )

        reductions = build_reductions(summaries, per_condition)
        export.write_summary(summaries, reductions, _metadata(config, context, conditions))
        export.write_plot_data(summaries, reductions)
        export.write_skill_table(summaries)
        export.export_summary_to_excel(summaries, reductions)

    write_run_info(output_dir, config, jobs, time.perf_counter() - started)
    return ExperimentResult(
        output_dir=output_dir,
        conditions=conditions,
        summaries=summaries,
        reductions=reductions,
        metrics=per_condition,
    )


def build_reductions(
    summaries: Sequence[ConditionSummary],
    per_condition: Dict[Tuple[str, bool], List[StudentMetrics]],
) -> List[ReductionReport]:
    by_key = {(s.selector.value, s.fast_forward): s for s in summaries}
    reductions = []
    for summary in summaries:
        if not summary.fast_forward:
            continue
        key_off = (summary.selector.value, False)
        if key_off not in by_key:
            continue
        paired = (per_condition[(summary.selector.value, True)], per_condition[key_off])
        reductions.append(reduction_report(summary, by_key[key_off], paired=paired))
    return reductions


def write_run_info(output_dir: Path, config: ExperimentConfig, jobs: int, elapsed: float) -> None:
    """Timestamps and scheduling details live here, outside the deterministic result files."""
    info = {
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "elapsed_seconds": round(elapsed, 3),
        "jobs": jobs,
        "output_dir": str(output_dir),
        "trace": config.trace,
    }
    (output_dir / "run_info.json").write_text(json.dumps(info, indent=2) + "\n", encoding="utf-8")


def fit_command(
    log_path: Union[str, Path],
    output_path: Union[str, Path],
    fit_settings: Optional[FitSettings] = None,
    pool_path: Optional[Union[str, Path]] = None,
) -> afm_fit.AfmFitResult:
    """
    Fit AFM to a step log and write a parameters file usable as `afm_params_path`.

    When `pool_path` is given, skills follow the pool's order and the log may
    only reference pool skills.
    """
    skill_names = None
    if pool_path is not None:
        skill_model, _ = load_pool_file(pool_path)
        skill_names = skill_model.names
    log = read_step_log(log_path, skill_names)

    with measure_time(f"AFM fit of {log_path}"):
        result = afm_fit.fit(log, fit_settings)

    document = params_to_document(result.params)
    document.fit = FitDiagnostics(
        converged=result.converged,
        iterations=result.iterations,
        neg_log_likelihood=result.neg_log_likelihood,
        gradient_max_norm=result.gradient_max_norm,
        n_rows=len(log),
        n_students=log.n_students,
        separable_skills=result.separable_skills,
    )
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"Wrote AFM parameters for {log.n_skills} skill(s) to {output_path}")
    return result
