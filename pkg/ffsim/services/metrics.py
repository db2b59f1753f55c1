"""
Overpractice / underpractice accounting.

An attempted step is overpractice when BKT already judged its skill mastered
before the attempt. Underpractice is the number of skills still unmastered at
the end of the session. Fast-forwarded steps count toward neither.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ffsim.exceptions import UsageError
from ffsim.models import SelectorKind, SkillModel
from ffsim.services import bkt_tracer
from ffsim.services.bkt_tracer import BktParams, ParamsLike
from ffsim.services.session_engine import SessionRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StudentMetrics:
    student_index: int
    selector: SelectorKind
    fast_forward: bool
    overpractice_by_skill: Tuple[int, ...]
    overpractice_total: int
    underpractice: int
    attempted_steps: int
    mastered_all: bool
    steps_to_mastery: Optional[int]
    attempts_by_skill: Tuple[int, ...] = ()
    mastered_by_skill: Tuple[bool, ...] = ()
    fast_forwarded_steps: int = 0


@dataclass(frozen=True)
class ConditionSummary:
    selector: SelectorKind
    fast_forward: bool
    n_students: int
    overpractice_mean: float
    overpractice_sd: float
    underpractice_mean: float
    underpractice_sd: float
    per_skill_overpractice_mean: Tuple[float, ...]
    steps_to_mastery_mean: Optional[float]
    n_mastered_all: int
    attempted_steps_mean: float
    sd_defined: bool
    per_skill_mastered_rate: Tuple[float, ...] = ()
    per_skill_attempts_mean: Tuple[float, ...] = ()


@dataclass(frozen=True)
class ReductionReport:
    selector: SelectorKind
    mean_without_ff: float
    mean_with_ff: float
    reduction_pct: Optional[float]
    effect_size_sd: Optional[float]
    paired_diff_mean: Optional[float] = None
    paired_diff_se: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    @property
    def applicable(self) -> bool:
        return self.reduction_pct is not None


def compute_student_metrics(
    record: SessionRecord,
    skill_model: SkillModel,
    bkt_params: ParamsLike = BktParams(),
) -> StudentMetrics:
    n_skills = len(skill_model)
    overpractice = [0] * n_skills
    attempts = [0] * n_skills
    fast_forwarded = 0
    for event in record.events:
        if event.fast_forwarded:
            fast_forwarded += 1
            continue
        attempts[event.skill] += 1
        if event.was_mastered_before:
            overpractice[event.skill] += 1

    mastered = bkt_tracer.mastered_flags(record.final_bkt, bkt_params)
    return StudentMetrics(
        student_index=record.student_index,
        selector=record.selector,
        fast_forward=record.fast_forward,
        overpractice_by_skill=tuple(overpractice),
        overpractice_total=sum(overpractice),
        underpractice=sum(1 for flag in mastered if not flag),
        attempted_steps=sum(attempts),
        mastered_all=all(mastered),
        steps_to_mastery=record.steps_to_mastery,
        attempts_by_skill=tuple(attempts),
        mastered_by_skill=mastered,
        fast_forwarded_steps=fast_forwarded,
    )


def _mean_sd(values: np.ndarray) -> Tuple[float, float]:
    mean = float(values.mean())
    sd = float(values.std(ddof=1)) if len(values) >= 2 else 0.0
    return mean, sd


def summarize(metrics: Sequence[StudentMetrics], selector: SelectorKind, fast_forward: bool) -> ConditionSummary:
    if not metrics:
        raise UsageError("Cannot summarize an empty list of student metrics", argument="metrics")

    overpractice = np.array([m.overpractice_total for m in metrics], dtype=float)
    underpractice = np.array([m.underpractice for m in metrics], dtype=float)
    per_skill = np.array([m.overpractice_by_skill for m in metrics], dtype=float)
    attempts = np.array([m.attempts_by_skill for m in metrics], dtype=float)
    mastered = np.array([m.mastered_by_skill for m in metrics], dtype=float)
    reached = [m.steps_to_mastery for m in metrics if m.steps_to_mastery is not None]

    overpractice_mean, overpractice_sd = _mean_sd(overpractice)
    underpractice_mean, underpractice_sd = _mean_sd(underpractice)

    return ConditionSummary(
        selector=selector,
        fast_forward=fast_forward,
        n_students=len(metrics),
        overpractice_mean=overpractice_mean,
        overpractice_sd=overpractice_sd,
        underpractice_mean=underpractice_mean,
        underpractice_sd=underpractice_sd,
        per_skill_overpractice_mean=tuple(float(v) for v in per_skill.mean(axis=0)),
        steps_to_mastery_mean=float(np.mean(reached)) if reached else None,
        n_mastered_all=sum(1 for m in metrics if m.mastered_all),
        attempted_steps_mean=float(np.mean([m.attempted_steps for m in metrics])),
        sd_defined=len(metrics) >= 2,
        per_skill_mastered_rate=tuple(float(v) for v in mastered.mean(axis=0)) if mastered.size else (),
        per_skill_attempts_mean=tuple(float(v) for v in attempts.mean(axis=0)) if attempts.size else (),
    )


def reduction_report(
    with_ff: ConditionSummary,
    without_ff: ConditionSummary,
    paired: Optional[Tuple[Sequence[StudentMetrics], Sequence[StudentMetrics]]] = None,
) -> ReductionReport:
    if with_ff.selector != without_ff.selector:
        raise UsageError(
            f"Reduction compares one selector; got {with_ff.selector.value} and {without_ff.selector.value}",
            argument="selector",
        )
    if with_ff.fast_forward == without_ff.fast_forward or not with_ff.fast_forward:
        raise UsageError("Reduction needs one FF summary and one no-FF summary", argument="fast_forward")

    notes: List[str] = []
    if without_ff.overpractice_mean == 0.0:
        reduction = None
        notes.append("no overpractice without fast-forwarding; reduction not applicable")
    else:
        reduction = (without_ff.overpractice_mean - with_ff.overpractice_mean) / without_ff.overpractice_mean * 100.0

    effect = None
    if without_ff.sd_defined and without_ff.overpractice_sd > 0.0:
        effect = (without_ff.overpractice_mean - with_ff.overpractice_mean) / without_ff.overpractice_sd

    diff_mean = diff_se = None
    if paired is not None:
        ff_metrics, no_ff_metrics = paired
        if [m.student_index for m in ff_metrics] != [m.student_index for m in no_ff_metrics]:
            raise UsageError("Paired metrics must list the same students in the same order", argument="paired")
        diffs = np.array(
            [b.overpractice_total - a.overpractice_total for a, b in zip(ff_metrics, no_ff_metrics)], dtype=float
        )
        diff_mean = float(diffs.mean())
        diff_se = float(diffs.std(ddof=1) / math.sqrt(len(diffs))) if len(diffs) >= 2 else None

    return ReductionReport(
        selector=with_ff.selector,
        mean_without_ff=without_ff.overpractice_mean,
        mean_with_ff=with_ff.overpractice_mean,
        reduction_pct=reduction,
        effect_size_sd=effect,
        paired_diff_mean=diff_mean,
        paired_diff_se=diff_se,
        notes=notes,
    )


class TraceReplayError(UsageError):
    """Raised when a trace contradicts the replayed BKT state."""


def metrics_from_trace(
    trace: pd.DataFrame,
    skill_model: SkillModel,
    bkt_params: ParamsLike = BktParams(),
) -> Dict[Tuple[str, bool, int], StudentMetrics]:
    """
    Recount student metrics from a trace table by replaying BKT along the attempted steps.

    Also checks, row by row, that the recorded `mastered_before` flags match the
    replayed state and that no fast-forwarded step skipped an unmastered skill.

    Returns:
        Mapping (selector, ff, student) -> StudentMetrics
    """
    n_skills = len(skill_model)
    results: Dict[Tuple[str, bool, int], StudentMetrics] = {}

    for (selector, ff, student), rows in trace.groupby(["selector", "ff", "student"], sort=False):
        bkt = bkt_tracer.initial_state(skill_model, bkt_params)
        overpractice = [0] * n_skills
        attempts = [0] * n_skills
        fast_forwarded = 0
        steps_to_mastery = 0 if bkt_tracer.all_mastered(bkt, bkt_params) else None

        for row in rows.itertuples(index=False):
            skill = skill_model.resolve(row.skill).index
            replayed = bkt_tracer.is_mastered(bkt, skill, bkt_params)
            if bool(row.mastered_before) != replayed:
                raise TraceReplayError(
                    f"Trace row for student {student} problem {row.problem} step {row.step} "
                    f"records mastered_before={bool(row.mastered_before)} but replay gives {replayed}",
                    argument="trace",
                )
            if bool(row.fast_forwarded):
                if not replayed:
                    raise TraceReplayError(
                        f"Student {student} fast-forwarded unmastered skill '{row.skill}' in problem {row.problem}",
                        argument="trace",
                    )
                fast_forwarded += 1
                continue

            attempts[skill] += 1
            if replayed:
                overpractice[skill] += 1
            bkt = bkt_tracer.observe(bkt, skill, bool(int(row.correct)), bkt_params)
            if steps_to_mastery is None and bkt_tracer.all_mastered(bkt, bkt_params):
                steps_to_mastery = sum(attempts)

        mastered = bkt_tracer.mastered_flags(bkt, bkt_params)
        kind = SelectorKind.parse(selector)
        results[(kind.value, bool(ff), int(student))] = StudentMetrics(
            student_index=int(student),
            selector=kind,
            fast_forward=bool(ff),
            overpractice_by_skill=tuple(overpractice),
            overpractice_total=sum(overpractice),
            underpractice=sum(1 for flag in mastered if not flag),
            attempted_steps=sum(attempts),
            mastered_all=all(mastered),
            steps_to_mastery=steps_to_mastery,
            attempts_by_skill=tuple(attempts),
            mastered_by_skill=mastered,
            fast_forwarded_steps=fast_forwarded,
        )

    return results


def verify_ff_safety(trace: pd.DataFrame) -> int:
    """Return the number of fast-forwarded rows whose skill was not mastered (0 when safe)."""
    skipped = trace[trace["fast_forwarded"].astype(int) == 1]
    return int((skipped["mastered_before"].astype(int) == 0).sum())
