from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple, Union
import enum

from ffsim.exceptions import SchemaError, UsageError


@dataclass(frozen=True)
class SkillId:
    index: int
    name: str


@dataclass(frozen=True)
class SkillModel:
    """Closed, ordered set of skills; indices are 0..n-1."""

    skills: Tuple[SkillId, ...]
    _by_name: Dict[str, SkillId] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.skills:
            raise SchemaError("Skill model must contain at least one skill")
        by_name: Dict[str, SkillId] = {}
        for position, skill in enumerate(self.skills):
            if skill.index != position:
                raise SchemaError(
                    f"Skill indices must be contiguous from 0; got {skill.index} at position {position}"
                )
            if not skill.name:
                raise SchemaError(f"Skill at index {position} has an empty name")
            if skill.name in by_name:
                raise SchemaError(f"Duplicate skill name '{skill.name}'")
            by_name[skill.name] = skill
        object.__setattr__(self, "_by_name", by_name)

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "SkillModel":
        return cls(tuple(SkillId(index=i, name=name) for i, name in enumerate(names)))

    def __len__(self) -> int:
        return len(self.skills)

    def __iter__(self):
        return iter(self.skills)

    def __getitem__(self, index: int) -> SkillId:
        return self.skills[index]

    def __contains__(self, skill: object) -> bool:
        return isinstance(skill, SkillId) and self._by_name.get(skill.name) == skill

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(skill.name for skill in self.skills)

    def resolve(self, name: str) -> SkillId:
        try:
            return self._by_name[name]
        except KeyError:
            raise SchemaError(f"Unknown skill '{name}'", context={"skill": name}) from None

    def get(self, name: str):
        return self._by_name.get(name)


@dataclass(frozen=True)
class Step:
    skill: SkillId
    position: int


@dataclass(frozen=True)
class Problem:
    """A multi-step problem given by its prototypical solution path."""

    id: str
    steps: Tuple[Step, ...]
    pool_order: int
    skill_indices: Tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.steps:
            raise SchemaError("Problem has an empty step list", problem_id=self.id)
        object.__setattr__(self, "skill_indices", tuple(step.skill.index for step in self.steps))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def distinct_skills(self) -> int:
        return len(set(self.skill_indices))


class SelectorKind(str, enum.Enum):
    RANDOM = "random"
    DETERMINISTIC = "deterministic"
    MASTERY_EASY = "mastery_easy"
    MASTERY_HARD = "mastery_hard"
    FOCUSED_PRACTICE = "focused_practice"

    @classmethod
    def parse(cls, value: Union[str, "SelectorKind"]) -> "SelectorKind":
        if isinstance(value, cls):
            return value
        normalized = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {
            "masteryeasy": cls.MASTERY_EASY,
            "masteryhard": cls.MASTERY_HARD,
            "focusedpractice": cls.FOCUSED_PRACTICE,
        }
        if normalized in aliases:
            return aliases[normalized]
        try:
            return cls(normalized)
        except ValueError:
            valid = "|".join(kind.value for kind in cls)
            raise UsageError(f"Unknown selector '{value}' (expected {valid})", argument="selector") from None

    @property
    def condition_id(self) -> int:
        # Stable per-selector key for stream derivation; independent of config order.
        return list(SelectorKind).index(self)


class TerminatedBy(str, enum.Enum):
    BUDGET = "budget"
    MASTERY = "mastery"
    SELECTOR_NONE = "selector_none"


@dataclass(frozen=True)
class StepBudget:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise UsageError(f"Step budget must be >= 1, got {self.n}", argument="budget")


@dataclass(frozen=True)
class RunToMastery:
    pass


Regime = Union[StepBudget, RunToMastery]
