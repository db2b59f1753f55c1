import os
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ffsim.models import SelectorKind

SELECTOR_NAMES = frozenset(kind.value for kind in SelectorKind)
_COMPACT_SELECTORS = {kind.value.replace("_", ""): kind.value for kind in SelectorKind}
_FF_ALIASES = {"ff": True, "no_ff": False, "no-ff": False, "noff": False}


def _canonical_selector(name: str) -> str:
    compact = name.strip().lower().replace("-", "").replace("_", "").replace(" ", "")
    return _COMPACT_SELECTORS.get(compact, name.strip())


# Pool file
class ProblemEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str = Field(min_length=1)
    steps: List[str]


class PoolFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    skills: List[str] = Field(min_length=1)
    problems: List[ProblemEntry]


# AFM parameters file
class AfmSkillEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    beta: float
    gamma: float = Field(ge=0.0)


class FitDiagnostics(BaseModel):
    """Written by `fit` next to the parameters; ignored when simulating."""

    model_config = ConfigDict(extra="forbid")

    converged: bool
    iterations: int
    neg_log_likelihood: float
    gradient_max_norm: float
    n_rows: int
    n_students: int
    separable_skills: List[str] = Field(default_factory=list)


class AfmParamsFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    theta_mean: float = 0.0
    theta_sd: float = Field(1.0, gt=0.0)
    skills: Dict[str, AfmSkillEntry] = Field(min_length=1)
    fit: Optional[FitDiagnostics] = None


# Fit settings
class FitSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    l2: float = Field(1e-3, ge=0.0)
    tol: float = Field(1e-5, gt=0.0)
    max_iterations: int = Field(5000, ge=1)
    armijo: float = Field(1e-4, gt=0.0, lt=1.0)
    backtrack: float = Field(0.5, gt=0.0, lt=1.0)


# Experiment config
class ExperimentConfig(BaseModel):
    """Fully resolved experiment configuration (defaults applied)."""

    model_config = ConfigDict(extra="forbid")

    pool_path: str
    afm_params_path: str
    n_students: int = Field(10_000, ge=1)
    theta_mean: Optional[float] = None
    theta_sd: Optional[float] = Field(None, gt=0.0)
    regime: str = "run_to_mastery"
    budget: Optional[int] = Field(None, ge=1)
    selectors: List[str] = Field(
        default_factory=lambda: [
            "random",
            "deterministic",
            "mastery_easy",
            "mastery_hard",
            "focused_practice",
        ],
        min_length=1,
    )
    ff_modes: List[bool] = Field(default_factory=lambda: [True, False], min_length=1)
    master_seed: int = Field(20250101, ge=0, lt=2**64)
    output_dir: str = "results"
    trace: bool = False
    jobs: Optional[int] = Field(None, ge=1)

    # BKT block, flattened as `bkt.<field>` in the config file
    bkt_p_init: float = 0.25
    bkt_p_learn: float = 0.2
    bkt_p_guess: float = 0.2
    bkt_p_slip: float = 0.1
    bkt_mastery_threshold: float = 0.95
    bkt_overrides: Dict[str, Dict[str, float]] = Field(default_factory=dict)

    @field_validator("regime")
    @classmethod
    def _check_regime(cls, value: str) -> str:
        normalized = value.strip().lower().replace("-", "_")
        if normalized not in ("budget", "run_to_mastery"):
            raise ValueError("regime must be 'budget' or 'run_to_mastery'")
        return normalized

    @field_validator("selectors", mode="before")
    @classmethod
    def _split_selectors(cls, value):
        if isinstance(value, str):
            value = [part.strip() for part in value.split(",") if part.strip()]
        if isinstance(value, list):
            return [_canonical_selector(part) if isinstance(part, str) else part for part in value]
        return value

    @field_validator("selectors")
    @classmethod
    def _check_selectors(cls, value: List[str]) -> List[str]:
        unknown = [name for name in value if name not in SELECTOR_NAMES]
        if unknown:
            raise ValueError(f"unknown selector(s) {unknown}; expected one of {sorted(SELECTOR_NAMES)}")
        if len(set(value)) != len(value):
            raise ValueError("selectors must not repeat")
        return value

    @field_validator("ff_modes", mode="before")
    @classmethod
    def _split_ff_modes(cls, value):
        if isinstance(value, str):
            value = [part.strip() for part in value.split(",") if part.strip()]
        if isinstance(value, list):
            return [_FF_ALIASES.get(part.strip().lower(), part) if isinstance(part, str) else part for part in value]
        return value

    @field_validator("jobs", mode="before")
    @classmethod
    def _auto_jobs(cls, value):
        if isinstance(value, str) and value.strip().lower() == "auto":
            return os.cpu_count() or 1
        return value
