"""
Skill model and problem pool: parsing, validation, consumption and replenishment.
"""
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from pydantic import ValidationError

from ffsim.exceptions import PoolStateError, SchemaError
from ffsim.models import Problem, SkillModel, Step
from ffsim.schemas import PoolFile

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProblemPool:
    problems: Tuple[Problem, ...]
    available: Tuple[bool, ...]
    replenish_count: int = 0
    served_count: int = 0
    passed_over_count: int = 0
    _positions: Dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def fresh(cls, problems: Tuple[Problem, ...]) -> "ProblemPool":
        positions = {problem.id: position for position, problem in enumerate(problems)}
        return cls(problems=tuple(problems), available=(True,) * len(problems), _positions=positions)

    def __len__(self) -> int:
        return len(self.problems)

    def position_of(self, problem_id: str) -> Optional[int]:
        return self._positions.get(problem_id)

    def get(self, problem_id: str) -> Problem:
        position = self._positions.get(problem_id)
        if position is None:
            raise PoolStateError(f"Unknown problem '{problem_id}'", operation="get", problem_id=problem_id)
        return self.problems[position]

    def available_problems(self) -> List[Problem]:
        """Available problems in pool order."""
        return [problem for problem, free in zip(self.problems, self.available) if free]

    @property
    def consumed_count(self) -> int:
        return sum(1 for free in self.available if not free)

    @property
    def available_count(self) -> int:
        return sum(1 for free in self.available if free)

    def exhausted(self) -> bool:
        return not any(self.available)


def parse_pool(data: Union[bytes, str], skill_model: Optional[SkillModel] = None, source: str = "<pool>") -> Tuple[SkillModel, ProblemPool]:
    """Parse pool file bytes into its skill model and a fresh pool."""
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as e:
        raise SchemaError(f"Pool file is not valid JSON: {e.msg} (line {e.lineno})", path=source) from None

    try:
        document = PoolFile.model_validate(raw)
    except ValidationError as e:
        raise SchemaError(
            f"Pool file failed validation: {e.error_count()} error(s)",
            path=source,
            context={"errors": [f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()]},
        ) from None

    if skill_model is None:
        skill_model = SkillModel.from_names(document.skills)

    problems: List[Problem] = []
    seen_ids = set()
    for pool_order, entry in enumerate(document.problems):
        if entry.id in seen_ids:
            raise SchemaError(f"Duplicate problem id '{entry.id}'", path=source, problem_id=entry.id)
        seen_ids.add(entry.id)

        if not entry.steps:
            raise SchemaError(f"Problem '{entry.id}' has an empty step list", path=source, problem_id=entry.id)

        steps = []
        for position, skill_name in enumerate(entry.steps):
            skill = skill_model.get(skill_name)
            if skill is None:
                raise SchemaError(
                    f"Problem '{entry.id}' step {position} references unknown skill '{skill_name}'",
                    path=source,
                    problem_id=entry.id,
                    step=position,
                    context={"skill": skill_name},
                )
            steps.append(Step(skill=skill, position=position))
        problems.append(Problem(id=entry.id, steps=tuple(steps), pool_order=pool_order))

    return skill_model, ProblemPool.fresh(tuple(problems))


def load_pool(path: Union[str, Path], skill_model: Optional[SkillModel] = None) -> ProblemPool:
    return load_pool_file(path, skill_model)[1]


def load_pool_file(path: Union[str, Path], skill_model: Optional[SkillModel] = None) -> Tuple[SkillModel, ProblemPool]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise SchemaError(f"Pool file not found: {path}", path=str(path)) from None

    skill_model, pool = parse_pool(data, skill_model, source=str(path))
    logger.info(f"Loaded pool of {len(pool)} problems over {len(skill_model)} skills from {path}")
    return skill_model, pool


def mark_consumed(pool: ProblemPool, problem_id: str) -> ProblemPool:
    position = pool.position_of(problem_id)
    if position is None:
        raise PoolStateError(f"Unknown problem '{problem_id}'", operation="mark_consumed", problem_id=problem_id)
    if not pool.available[position]:
        raise PoolStateError(
            f"Problem '{problem_id}' is already consumed", operation="mark_consumed", problem_id=problem_id
        )

    available = list(pool.available)
    available[position] = False
    return replace(pool, available=tuple(available), served_count=pool.served_count + 1)


def replenish(pool: ProblemPool) -> ProblemPool:
    if not pool.exhausted():
        raise PoolStateError(
            f"Cannot replenish a pool with {pool.available_count} available problem(s)",
            operation="replenish",
        )
    return replace(pool, available=(True,) * len(pool.problems), replenish_count=pool.replenish_count + 1)


def pass_over(pool: ProblemPool) -> ProblemPool:
    """
    Close the current pass: every still-available problem is marked consumed without being served.

    Across a session, replenish_count * len(pool) + consumed_count always equals
    served_count + passed_over_count.
    """
    skipped = pool.available_count
    if skipped == 0:
        raise PoolStateError("Cannot pass over an exhausted pool", operation="pass_over")
    return replace(
        pool,
        available=(False,) * len(pool.problems),
        passed_over_count=pool.passed_over_count + skipped,
    )
