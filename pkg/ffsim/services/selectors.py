"""
Problem-selection policies.

Every selector maps (pool availability, BKT state, random stream) to the id of
the next problem, or None when it declines every available problem. Step
difficulty is 1 - P(learned) of the step's skill; ties go to the lowest
pool_order.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ffsim.exceptions import SelectorContractError
from ffsim.models import Problem, SelectorKind
from ffsim.services.bkt_tracer import BktState, ParamsLike, mastered_flags
from ffsim.services.skill_pool import ProblemPool

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProblemScore:
    problem_id: str
    mean_difficulty: float
    unmastered_count: int
    distinct_skills: int
    pool_order: int


FocusedWeight = Callable[[ProblemScore], float]


def difficulty_per_skill(score: ProblemScore) -> float:
    """Default focused-practice weight: difficulty discounted by the number of distinct skills."""
    return score.mean_difficulty / score.distinct_skills


def _score(
    problem: Problem,
    difficulty: Sequence[float],
    mastered: Sequence[bool],
) -> ProblemScore:
    indices = problem.skill_indices
    total = 0.0
    unmastered = 0
    for k in indices:
        total += difficulty[k]
        if not mastered[k]:
            unmastered += 1
    return ProblemScore(
        problem_id=problem.id,
        mean_difficulty=total / len(indices),
        unmastered_count=unmastered,
        distinct_skills=problem.distinct_skills,
        pool_order=problem.pool_order,
    )


def _difficulties(bkt: BktState, scale: float) -> Tuple[float, ...]:
    return tuple(scale * (1.0 - p) for p in bkt.p_mastery)


def score_problem(
    problem: Problem,
    bkt: BktState,
    params: ParamsLike,
    scale: float = 1.0,
) -> ProblemScore:
    # `scale` multiplies every step difficulty; selections must not depend on it.
    return _score(problem, _difficulties(bkt, scale), mastered_flags(bkt, params))


def score_available(
    pool: ProblemPool,
    bkt: BktState,
    params: ParamsLike,
    scale: float = 1.0,
) -> List[ProblemScore]:
    difficulty = _difficulties(bkt, scale)
    mastered = mastered_flags(bkt, params)
    return [_score(problem, difficulty, mastered) for problem in pool.available_problems()]


def focused_weights(scores: Sequence[ProblemScore], weight: FocusedWeight = difficulty_per_skill) -> List[float]:
    """Normalized multinomial weights; fully mastered problems get zero weight."""
    raw = [weight(score) if score.unmastered_count >= 1 else 0.0 for score in scores]
    total = sum(raw)
    if total <= 0.0:
        return [0.0] * len(raw)
    return [w / total for w in raw]


def select(
    kind: SelectorKind,
    pool: ProblemPool,
    bkt: BktState,
    params: ParamsLike,
    rng: np.random.Generator,
    weight: FocusedWeight = difficulty_per_skill,
    scale: float = 1.0,
) -> Optional[str]:
    available = pool.available_problems()
    if not available:
        raise SelectorContractError(
            "select() called on a pool with no available problems", selector=kind.value
        )

    if kind is SelectorKind.RANDOM:
        return available[int(rng.integers(len(available)))].id

    if kind is SelectorKind.DETERMINISTIC:
        return available[0].id

    scores = score_available(pool, bkt, params, scale)
    eligible = [score for score in scores if score.unmastered_count >= 1]

    if kind is SelectorKind.MASTERY_EASY:
        if not eligible:
            return None
        return min(eligible, key=lambda s: (s.mean_difficulty, s.pool_order)).problem_id

    if kind is SelectorKind.MASTERY_HARD:
        if not eligible:
            return None
        return min(eligible, key=lambda s: (-s.mean_difficulty, s.pool_order)).problem_id

    if kind is SelectorKind.FOCUSED_PRACTICE:
        raw = [weight(score) if score.unmastered_count >= 1 else 0.0 for score in scores]
        total = sum(raw)
        if total <= 0.0:
            return None
        threshold = rng.random() * total
        cumulative = 0.0
        chosen = None
        for score, w in zip(scores, raw):
            if w <= 0.0:
                continue
            cumulative += w
            chosen = score
            if threshold < cumulative:
                break
        return chosen.problem_id

    raise SelectorContractError(f"Unsupported selector {kind!r}", selector=str(kind))
