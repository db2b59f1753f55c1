"""
Bayesian Knowledge Tracing: the tutor-side estimate of per-skill mastery.

Each skill is a two-state hidden Markov chain (unlearned/learned). An
observation is folded in with Bayes' rule under guess/slip noise, then the
learn transition is applied. All operations are pure; a new BktState is
returned on every update.
"""
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ffsim.exceptions import NumericalError
from ffsim.models import SkillId, SkillModel


class BktParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    p_init: float = Field(0.25, ge=0.0, le=1.0)
    p_learn: float = Field(0.2, ge=0.0, le=1.0)
    p_guess: float = Field(0.2, ge=0.0, lt=1.0)
    p_slip: float = Field(0.1, ge=0.0, lt=1.0)
    mastery_threshold: float = Field(0.95, gt=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_identifiable(self):
        if self.p_guess + self.p_slip >= 1.0:
            raise ValueError(
                f"p_guess + p_slip must be < 1 (got {self.p_guess} + {self.p_slip})"
            )
        return self


class BktParamTable(BaseModel):
    """Global BKT parameters with optional per-skill overrides keyed by skill index."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    default: BktParams = BktParams()
    overrides: Dict[int, BktParams] = Field(default_factory=dict)

    def for_skill(self, index: int) -> BktParams:
        return self.overrides.get(index, self.default)


ParamsLike = Union[BktParams, BktParamTable]


def params_for(params: ParamsLike, skill_index: int) -> BktParams:
    if isinstance(params, BktParamTable):
        return params.for_skill(skill_index)
    return params


@dataclass(frozen=True)
class BktState:
    p_mastery: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.p_mastery)

    def __getitem__(self, index: int) -> float:
        return self.p_mastery[index]


def initial_state(skill_model: SkillModel, params: ParamsLike) -> BktState:
    return BktState(tuple(params_for(params, skill.index).p_init for skill in skill_model))


def _index(skill: Union[SkillId, int]) -> int:
    return skill if isinstance(skill, int) else skill.index


def posterior_given(p_learned: float, correct: bool, params: BktParams) -> float:
    """Conditional P(learned | observation), before the learn transition."""
    if correct:
        numerator = p_learned * (1.0 - params.p_slip)
        denominator = numerator + (1.0 - p_learned) * params.p_guess
    else:
        numerator = p_learned * params.p_slip
        denominator = numerator + (1.0 - p_learned) * (1.0 - params.p_guess)
    if denominator == 0.0:
        # Observation impossible under the model; belief is left where it was.
        return p_learned
    return numerator / denominator


def observe(
    state: BktState,
    skill: Union[SkillId, int],
    correct: bool,
    params: ParamsLike,
) -> BktState:
    index = _index(skill)
    skill_params = params_for(params, index)

    posterior = posterior_given(state.p_mastery[index], correct, skill_params)
    updated = posterior + (1.0 - posterior) * skill_params.p_learn
    if not math.isfinite(updated):
        raise NumericalError(
            f"BKT update produced {updated}",
            quantity="p_mastery",
            context={"skill": index, "prior": state.p_mastery[index], "correct": correct},
        )

    p_mastery = list(state.p_mastery)
    p_mastery[index] = updated
    return BktState(tuple(p_mastery))


def is_mastered(state: BktState, skill: Union[SkillId, int], params: ParamsLike) -> bool:
    index = _index(skill)
    return state.p_mastery[index] >= params_for(params, index).mastery_threshold


def predicted_error(state: BktState, skill: Union[SkillId, int], params: ParamsLike) -> float:
    index = _index(skill)
    skill_params = params_for(params, index)
    p_learned = state.p_mastery[index]
    return p_learned * skill_params.p_slip + (1.0 - p_learned) * (1.0 - skill_params.p_guess)


def all_mastered(state: BktState, params: ParamsLike) -> bool:
    return all(is_mastered(state, index, params) for index in range(len(state.p_mastery)))


def mastered_flags(state: BktState, params: ParamsLike) -> Tuple[bool, ...]:
    return tuple(is_mastered(state, index, params) for index in range(len(state.p_mastery)))


def with_posteriors(state: BktState, values: Dict[int, float], default: Optional[float] = None) -> BktState:
    """Return a copy with selected posteriors replaced; used to seed sessions in tests and pilots."""
    p_mastery = [default if default is not None else p for p in state.p_mastery]
    for index, value in values.items():
        p_mastery[index] = value
    return BktState(tuple(p_mastery))
