"""
Ground-truth student simulation with the Additive Factors Model.

P(correct) = sigmoid(theta + beta[k] + gamma[k] * T[k]) where T[k] counts the
student's attempted opportunities on skill k.
"""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from ffsim.exceptions import SchemaError
from ffsim.models import SkillId, SkillModel
from ffsim.schemas import AfmParamsFile, AfmSkillEntry

logger = logging.getLogger(__name__)


class AfmParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    skill_names: Tuple[str, ...]
    beta: Tuple[float, ...]
    gamma: Tuple[float, ...]
    theta_mean: float = 0.0
    theta_sd: float = 1.0

    @model_validator(mode="after")
    def _check_shapes(self):
        if not (len(self.skill_names) == len(self.beta) == len(self.gamma)):
            raise ValueError("skill_names, beta and gamma must have equal length")
        negative = [name for name, g in zip(self.skill_names, self.gamma) if g < 0]
        if negative:
            raise ValueError(f"gamma must be >= 0 (violated for {negative})")
        if not self.theta_sd > 0:
            raise ValueError(f"theta_sd must be > 0, got {self.theta_sd}")
        return self

    def with_theta(self, theta_mean=None, theta_sd=None) -> "AfmParams":
        update = {}
        if theta_mean is not None:
            update["theta_mean"] = theta_mean
        if theta_sd is not None:
            update["theta_sd"] = theta_sd
        return self.model_validate({**self.model_dump(), **update}) if update else self


@dataclass(frozen=True)
class StudentState:
    theta: float
    opportunities: Tuple[int, ...]


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def _index(skill: Union[SkillId, int]) -> int:
    return skill if isinstance(skill, int) else skill.index


def p_correct(student: StudentState, skill: Union[SkillId, int], params: AfmParams) -> float:
    k = _index(skill)
    return sigmoid(student.theta + params.beta[k] + params.gamma[k] * student.opportunities[k])


def sample_response(
    student: StudentState,
    skill: Union[SkillId, int],
    params: AfmParams,
    rng: np.random.Generator,
) -> bool:
    # Exactly one uniform draw per call keeps paired streams aligned.
    return bool(rng.random() < p_correct(student, skill, params))


def record_opportunity(student: StudentState, skill: Union[SkillId, int]) -> StudentState:
    k = _index(skill)
    opportunities = list(student.opportunities)
    opportunities[k] += 1
    return StudentState(theta=student.theta, opportunities=tuple(opportunities))


def draw_student(params: AfmParams, rng: np.random.Generator) -> StudentState:
    theta = float(rng.normal(params.theta_mean, params.theta_sd))
    return StudentState(theta=theta, opportunities=(0,) * len(params.skill_names))


def new_student(theta: float, n_skills: int) -> StudentState:
    return StudentState(theta=float(theta), opportunities=(0,) * n_skills)


def load_afm_params(path: Union[str, Path], skill_model: SkillModel) -> AfmParams:
    """Load an AFM parameters file and align it with the skill model's order."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SchemaError(f"AFM parameters file not found: {path}", path=str(path)) from None
    except json.JSONDecodeError as e:
        raise SchemaError(f"AFM parameters file is not valid JSON: {e.msg} (line {e.lineno})", path=str(path)) from None

    try:
        document = AfmParamsFile.model_validate(raw)
    except ValidationError as e:
        raise SchemaError(
            f"AFM parameters file failed validation: {e.error_count()} error(s)",
            path=str(path),
            context={"errors": [f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()]},
        ) from None

    unknown = sorted(set(document.skills) - set(skill_model.names))
    missing = [name for name in skill_model.names if name not in document.skills]
    if unknown or missing:
        raise SchemaError(
            "AFM parameters do not match the skill model",
            path=str(path),
            context={"unknown_skills": unknown, "missing_skills": missing},
        )

    params = params_from_document(document, skill_model.names)
    logger.info(f"Loaded AFM parameters for {len(skill_model)} skills from {path}")
    return params


def params_from_document(document: AfmParamsFile, skill_names) -> AfmParams:
    return AfmParams(
        skill_names=tuple(skill_names),
        beta=tuple(document.skills[name].beta for name in skill_names),
        gamma=tuple(document.skills[name].gamma for name in skill_names),
        theta_mean=document.theta_mean,
        theta_sd=document.theta_sd,
    )


def params_to_document(params: AfmParams) -> AfmParamsFile:
    return AfmParamsFile(
        theta_mean=params.theta_mean,
        theta_sd=params.theta_sd,
        skills={
            name: AfmSkillEntry(beta=beta, gamma=gamma)
            for name, beta, gamma in zip(params.skill_names, params.beta, params.gamma)
        },
    )
