"""
Step-level response logs (student-step rollup shape): parsing, validation,
writing, synthetic generation and per-skill accuracy curves.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ffsim.exceptions import SchemaError
from ffsim.services.afm_student import AfmParams

logger = logging.getLogger(__name__)

STEP_LOG_COLUMNS = ["student_id", "skill", "opportunity", "correct"]


@dataclass(frozen=True)
class StepLog:
    """Columnar step log; row i is (student_ids[student[i]], skill_names[skill[i]], opportunity[i], correct[i])."""

    student_ids: Tuple[str, ...]
    skill_names: Tuple[str, ...]
    student: np.ndarray
    skill: np.ndarray
    opportunity: np.ndarray
    correct: np.ndarray

    def __len__(self) -> int:
        return int(self.student.shape[0])

    @property
    def n_students(self) -> int:
        return len(self.student_ids)

    @property
    def n_skills(self) -> int:
        return len(self.skill_names)

    def rows(self) -> Iterator[Tuple[str, str, int, bool]]:
        for s, k, t, y in zip(self.student, self.skill, self.opportunity, self.correct):
            yield self.student_ids[s], self.skill_names[k], int(t), bool(y)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "student_id": np.asarray(self.student_ids, dtype=object)[self.student] if len(self) else [],
                "skill": np.asarray(self.skill_names, dtype=object)[self.skill] if len(self) else [],
                "opportunity": self.opportunity,
                "correct": self.correct.astype(int),
            },
            columns=STEP_LOG_COLUMNS,
        )


def from_frame(frame: pd.DataFrame, skill_names: Optional[Sequence[str]] = None, source: str = "<log>") -> StepLog:
    missing = [column for column in STEP_LOG_COLUMNS if column not in frame.columns]
    if missing:
        raise SchemaError(f"Step log is missing column(s) {missing}", path=source)
    if frame.empty:
        raise SchemaError("Step log contains no rows", path=source)

    frame = frame[STEP_LOG_COLUMNS].copy()
    frame["student_id"] = frame["student_id"].astype(str)
    frame["skill"] = frame["skill"].astype(str)

    bad_correct = ~frame["correct"].isin([0, 1])
    if bad_correct.any():
        first = int(np.flatnonzero(bad_correct.to_numpy())[0])
        raise SchemaError(
            f"Step log row {first + 1}: correct must be 0 or 1, got {frame['correct'].iloc[first]!r}",
            path=source,
        )
    if (frame["opportunity"] < 0).any():
        raise SchemaError("Step log opportunity indices must be non-negative", path=source)

    if skill_names is None:
        skill_names = tuple(dict.fromkeys(frame["skill"]))
    unknown = sorted(set(frame["skill"]) - set(skill_names))
    if unknown:
        raise SchemaError(f"Step log references unknown skill(s) {unknown}", path=source)

    ordered = frame.sort_values(["student_id", "skill", "opportunity"], kind="stable")
    expected = ordered.groupby(["student_id", "skill"], sort=False).cumcount()
    gaps = ordered["opportunity"].to_numpy() != expected.to_numpy()
    if gaps.any():
        bad = ordered.iloc[int(np.flatnonzero(gaps)[0])]
        raise SchemaError(
            f"Step log opportunities for student '{bad['student_id']}' on skill '{bad['skill']}' "
            f"are not 0,1,2,... without gaps",
            path=source,
        )

    student_ids = tuple(dict.fromkeys(frame["student_id"]))
    student_codes = {sid: i for i, sid in enumerate(student_ids)}
    skill_codes = {name: i for i, name in enumerate(skill_names)}
    return StepLog(
        student_ids=student_ids,
        skill_names=tuple(skill_names),
        student=frame["student_id"].map(student_codes).to_numpy(dtype=np.int64),
        skill=frame["skill"].map(skill_codes).to_numpy(dtype=np.int64),
        opportunity=frame["opportunity"].to_numpy(dtype=np.int64),
        correct=frame["correct"].to_numpy(dtype=np.int8),
    )


def read_step_log(path: Union[str, Path], skill_names: Optional[Sequence[str]] = None) -> StepLog:
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={"student_id": str, "skill": str})
    except FileNotFoundError:
        raise SchemaError(f"Step log not found: {path}", path=str(path)) from None
    except pd.errors.EmptyDataError:
        raise SchemaError("Step log is empty", path=str(path)) from None
    except (pd.errors.ParserError, ValueError) as e:
        raise SchemaError(f"Step log could not be parsed: {e}", path=str(path)) from None

    log = from_frame(frame, skill_names, source=str(path))
    logger.info(f"Read step log with {len(log)} rows, {log.n_students} students, {log.n_skills} skills from {path}")
    return log


def write_step_log(log: StepLog, path: Union[str, Path]) -> None:
    log.to_frame().to_csv(path, index=False, lineterminator="\n")


def generate_step_log(
    params: AfmParams,
    thetas: Sequence[float],
    steps_per_student: int,
    rng: np.random.Generator,
    skill_sequence: Optional[Sequence[int]] = None,
) -> StepLog:
    """
    Simulate AFM responses into a step log.

    Each student practices `steps_per_student` steps following `skill_sequence`
    (cycled), or round-robin over all skills when no sequence is given.
    """
    n_skills = len(params.skill_names)
    n_students = len(thetas)
    if skill_sequence is None:
        skill_sequence = list(range(n_skills))
    cycle = np.asarray(skill_sequence, dtype=np.int64)
    per_student_skill = cycle[np.arange(steps_per_student) % len(cycle)]

    opportunity = np.empty(steps_per_student, dtype=np.int64)
    counts = np.zeros(n_skills, dtype=np.int64)
    for i, k in enumerate(per_student_skill):
        opportunity[i] = counts[k]
        counts[k] += 1

    student = np.repeat(np.arange(n_students, dtype=np.int64), steps_per_student)
    skill = np.tile(per_student_skill, n_students)
    opps = np.tile(opportunity, n_students)

    beta = np.asarray(params.beta, dtype=float)
    gamma = np.asarray(params.gamma, dtype=float)
    logits = np.asarray(thetas, dtype=float)[student] + beta[skill] + gamma[skill] * opps
    p = 0.5 * (1.0 + np.tanh(0.5 * logits))
    correct = (rng.random(len(p)) < p).astype(np.int8)

    width = len(str(max(n_students - 1, 0)))
    return StepLog(
        student_ids=tuple(f"s{i:0{width}d}" for i in range(n_students)),
        skill_names=tuple(params.skill_names),
        student=student,
        skill=skill,
        opportunity=opps,
        correct=correct,
    )


def accuracy_curves(log: StepLog, max_opportunity: Optional[int] = None) -> pd.DataFrame:
    """Mean correctness per (skill, opportunity) with row counts."""
    frame = log.to_frame()
    if max_opportunity is not None:
        frame = frame[frame["opportunity"] <= max_opportunity]
    curves = (
        frame.groupby(["skill", "opportunity"], sort=True)["correct"]
        .agg(accuracy="mean", n="size")
        .reset_index()
    )
    return curves


def separable_skills(log: StepLog) -> List[str]:
    """Skills whose responses are all correct or all incorrect."""
    flagged = []
    for k, name in enumerate(log.skill_names):
        responses = log.correct[log.skill == k]
        if responses.size and (responses.min() == responses.max()):
            flagged.append(name)
    return flagged
