"""
Runs one simulated student's practice session.

The tutor side (selector + BKT) decides what the student sees; the student
side (AFM) decides how they answer. With Fast-Forwarding enabled, a problem
ends as soon as every remaining step exercises a skill BKT already judges
mastered; the skipped steps touch neither model.

Both regimes walk the pool in passes. A pass ends when the pool is exhausted
or when the selector declines everything left in it (those problems are
passed over); the pool is then replenished. A selector declining a fresh
pass, or a pass that attempted no step, ends a budget session with
SELECTOR_NONE and is a SelectorContractError when running to mastery.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional

from ffsim.config import settings
from ffsim.exceptions import SelectorContractError, StepCapExceededError, UsageError
from ffsim.models import Problem, Regime, SelectorKind, StepBudget, TerminatedBy
from ffsim.services import afm_student, bkt_tracer, skill_pool
from ffsim.services.afm_student import AfmParams, StudentState
from ffsim.services.bkt_tracer import BktParamTable, BktState, ParamsLike
from ffsim.services.selectors import select
from ffsim.services.skill_pool import ProblemPool
from ffsim.utils.random_streams import StudentStreams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SessionConfig:
    regime: Regime
    selector: SelectorKind
    fast_forward: bool
    master_seed: int
    student_index: int
    condition_id: Optional[int] = None
    step_cap: Optional[int] = None

    def __post_init__(self):
        if self.student_index < 0:
            raise UsageError(f"student_index must be >= 0, got {self.student_index}", argument="student_index")
        if not 0 <= self.master_seed < 2**64:
            raise UsageError("master_seed must fit in 64 bits", argument="master_seed")

    @property
    def stream_condition_id(self) -> int:
        return self.selector.condition_id if self.condition_id is None else self.condition_id


@dataclass(frozen=True)
class StepEvent:
    problem_id: str
    step_position: int
    skill: int
    was_mastered_before: bool
    correct: Optional[bool]
    fast_forwarded: bool
    step_counter: int


@dataclass
class SessionRecord:
    events: List[StepEvent]
    final_bkt: BktState
    final_student: StudentState
    problems_started: int
    problems_fast_forwarded: int
    problems_passed_over: int
    replenishes: int
    terminated_by: TerminatedBy
    steps_to_mastery: Optional[int]
    student_index: int = 0
    selector: SelectorKind = SelectorKind.MASTERY_HARD
    fast_forward: bool = False
    theta: float = 0.0
    final_pool: Optional[ProblemPool] = None

    @property
    def attempted_steps(self) -> int:
        return sum(1 for event in self.events if not event.fast_forwarded)


def check_fast_forward(problem: Problem, next_position: int, bkt: BktState, params: ParamsLike) -> bool:
    """True iff every step from next_position onward exercises a mastered skill."""
    if not 0 <= next_position < len(problem.steps):
        raise UsageError(
            f"next_position {next_position} outside problem '{problem.id}' of {len(problem.steps)} steps",
            argument="next_position",
        )
    return all(bkt_tracer.is_mastered(bkt, k, params) for k in problem.skill_indices[next_position:])


def _check_consistency(pool: ProblemPool, bkt_params: ParamsLike, afm_params: AfmParams, n_skills: int) -> None:
    if len(afm_params.skill_names) != n_skills:
        raise UsageError(
            f"AFM parameters cover {len(afm_params.skill_names)} skills but the session has {n_skills}",
            argument="afm_params",
        )
    for problem in pool.problems:
        if any(k >= n_skills for k in problem.skill_indices):
            raise UsageError(f"Problem '{problem.id}' references a skill outside the model", argument="pool")
    if isinstance(bkt_params, BktParamTable):
        stray = [k for k in bkt_params.overrides if not 0 <= k < n_skills]
        if stray:
            raise UsageError(f"BKT overrides reference unknown skill indices {stray}", argument="bkt_params")


def run_session(
    config: SessionConfig,
    pool: ProblemPool,
    bkt_params: ParamsLike,
    afm_params: AfmParams,
    initial_bkt: Optional[BktState] = None,
    student: Optional[StudentState] = None,
) -> SessionRecord:
    n_skills = len(afm_params.skill_names)
    _check_consistency(pool, bkt_params, afm_params, n_skills)

    streams = StudentStreams.derive(config.master_seed, config.stream_condition_id, config.student_index)
    if student is None:
        student = afm_student.draw_student(afm_params, streams.theta)
    if initial_bkt is None:
        initial_bkt = bkt_tracer.BktState(
            tuple(bkt_tracer.params_for(bkt_params, k).p_init for k in range(n_skills))
        )

    budget = config.regime.n if isinstance(config.regime, StepBudget) else None
    step_cap = config.step_cap or settings.step_cap

    bkt = initial_bkt
    events: List[StepEvent] = []
    attempted = 0
    problems_started = 0
    problems_fast_forwarded = 0
    problems_passed_over = 0
    replenishes = 0
    pass_start = 0
    terminated_by: Optional[TerminatedBy] = None

    if bkt_tracer.all_mastered(bkt, bkt_params):
        terminated_by = TerminatedBy.MASTERY
    elif budget is None and _unpracticed(pool, bkt, bkt_params, n_skills):
        raise _stalled(
            config, pool, bkt, bkt_params, n_skills,
            "Some unmastered skills are exercised by no problem in the pool",
        )

    while terminated_by is None:
        if pool.exhausted():
            if attempted == pass_start:
                # A pass that attempted nothing leaves BKT unchanged, so every later pass would repeat it.
                if budget is not None:
                    terminated_by = TerminatedBy.SELECTOR_NONE
                    break
                raise _stalled(config, pool, bkt, bkt_params, n_skills, "A full pass over the pool attempted no step")
            pool = skill_pool.replenish(pool)
            replenishes += 1
            pass_start = attempted

        problem_id = select(config.selector, pool, bkt, bkt_params, streams.selection)
        if problem_id is None:
            if pool.consumed_count == 0:
                if budget is not None:
                    terminated_by = TerminatedBy.SELECTOR_NONE
                    break
                raise _stalled(
                    config, pool, bkt, bkt_params, n_skills,
                    "No problem in the pool exercises the remaining unmastered skills",
                )
            # Everything left in this pass is fully mastered: pass it over and start a new pass.
            problems_passed_over += pool.available_count
            pool = skill_pool.pass_over(pool)
            continue

        pool = skill_pool.mark_consumed(pool, problem_id)
        problem = pool.get(problem_id)
        problems_started += 1

        for step in problem.steps:
            if config.fast_forward and check_fast_forward(problem, step.position, bkt, bkt_params):
                for skipped in problem.steps[step.position:]:
                    events.append(
                        StepEvent(
                            problem_id=problem.id,
                            step_position=skipped.position,
                            skill=skipped.skill.index,
                            was_mastered_before=bkt_tracer.is_mastered(bkt, skipped.skill, bkt_params),
                            correct=None,
                            fast_forwarded=True,
                            step_counter=attempted,
                        )
                    )
                problems_fast_forwarded += 1
                break

            was_mastered = bkt_tracer.is_mastered(bkt, step.skill, bkt_params)
            correct = afm_student.sample_response(student, step.skill, afm_params, streams.response)
            student = afm_student.record_opportunity(student, step.skill)
            bkt = bkt_tracer.observe(bkt, step.skill, correct, bkt_params)
            attempted += 1
            events.append(
                StepEvent(
                    problem_id=problem.id,
                    step_position=step.position,
                    skill=step.skill.index,
                    was_mastered_before=was_mastered,
                    correct=correct,
                    fast_forwarded=False,
                    step_counter=attempted,
                )
            )

            if bkt_tracer.all_mastered(bkt, bkt_params):
                terminated_by = TerminatedBy.MASTERY
                break
            if budget is not None and attempted >= budget:
                terminated_by = TerminatedBy.BUDGET
                break
            if budget is None and attempted >= step_cap:
                raise StepCapExceededError(
                    step_cap, student_index=config.student_index, selector=config.selector.value
                )

    return SessionRecord(
        events=events,
        final_bkt=bkt,
        final_student=student,
        problems_started=problems_started,
        problems_fast_forwarded=problems_fast_forwarded,
        problems_passed_over=problems_passed_over,
        replenishes=replenishes,
        terminated_by=terminated_by,
        steps_to_mastery=attempted if terminated_by is TerminatedBy.MASTERY else None,
        student_index=config.student_index,
        selector=config.selector,
        fast_forward=config.fast_forward,
        theta=student.theta,
        final_pool=pool,
    )


def _unpracticed(pool: ProblemPool, bkt: BktState, bkt_params: ParamsLike, n_skills: int) -> List[int]:
    practiced = {k for problem in pool.problems for k in problem.skill_indices}
    return [k for k in range(n_skills) if k not in practiced and not bkt_tracer.is_mastered(bkt, k, bkt_params)]


def _stalled(
    config: SessionConfig,
    pool: ProblemPool,
    bkt: BktState,
    bkt_params: ParamsLike,
    n_skills: int,
    message: str,
) -> SelectorContractError:
    unmastered = [k for k in range(n_skills) if not bkt_tracer.is_mastered(bkt, k, bkt_params)]
    return SelectorContractError(
        message,
        selector=config.selector.value,
        context={
            "student_index": config.student_index,
            "unmastered_skills": unmastered,
            "unpracticed_skills": _unpracticed(pool, bkt, bkt_params, n_skills),
        },
    )


def regime_label(regime: Regime) -> str:
    return f"budget({regime.n})" if isinstance(regime, StepBudget) else "run_to_mastery"

