"""
Result files for one experiment run.

Every file is written under a `.partial` name and renamed only when the whole
run succeeds; a failed run leaves its `.partial` files behind.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, IO, Iterable, List, Optional, Sequence, Tuple

import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Font, PatternFill

from ffsim.models import SkillModel
from ffsim.services.metrics import ConditionSummary, ReductionReport, StudentMetrics

logger = logging.getLogger(__name__)

PARTIAL_SUFFIX = ".partial"
STUDENT_COLUMNS = [
    "student",
    "selector",
    "ff",
    "attempted_steps",
    "overpractice_total",
    "underpractice",
    "mastered_all",
    "steps_to_mastery",
]
TRACE_COLUMNS = ["student", "selector", "ff", "problem", "step", "skill", "mastered_before", "correct", "fast_forwarded"]

TraceRow = Tuple[int, str, int, str, int, str, int, Optional[int], int]


def _flag(value: bool) -> int:
    return 1 if value else 0


class ExportService:
    """Writes students.csv, trace.csv, summary.json, fig2/fig3 data, skill_table.csv and summary.xlsx."""

    def __init__(self, output_dir: Path, skill_model: SkillModel, trace: bool = False, xlsx: bool = False):
        self.output_dir = Path(output_dir)
        self.skill_model = skill_model
        self.trace = trace
        self.xlsx = xlsx
        self._partials: List[Path] = []
        self._handles: List[IO[str]] = []
        self._students_writer = None
        self._trace_writer = None

    # Context management
    def __enter__(self) -> "ExportService":
        self.output_dir.mkdir(parents=True, exist_ok=True)
        students = self._open("students.csv")
        self._students_writer = csv.writer(students, lineterminator="\n")
        self._students_writer.writerow(STUDENT_COLUMNS + [f"op_{name}" for name in self.skill_model.names])
        if self.trace:
            trace = self._open("trace.csv")
            self._trace_writer = csv.writer(trace, lineterminator="\n")
            self._trace_writer.writerow(TRACE_COLUMNS)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        self._close()
        if exc_type is None:
            self._commit()
        else:
            logger.error(
                f"Run aborted; {len(self._partials)} partial file(s) left in {self.output_dir}",
                extra={"partial_files": [str(p) for p in self._partials]},
            )
        return False

    def _partial_path(self, name: str) -> Path:
        path = self.output_dir / f"{name}{PARTIAL_SUFFIX}"
        self._partials.append(path)
        return path

    def _open(self, name: str) -> IO[str]:
        handle = open(self._partial_path(name), "w", encoding="utf-8", newline="")
        self._handles.append(handle)
        return handle

    def _close(self) -> None:
        for handle in self._handles:
            handle.close()
        self._handles.clear()

    def _commit(self) -> None:
        for partial in self._partials:
            final = partial.with_name(partial.name[: -len(PARTIAL_SUFFIX)])
            partial.replace(final)
        logger.info(f"Wrote {len(self._partials)} result file(s) to {self.output_dir}")
        self._partials.clear()

    # Streamed per-student output
    def write_students(self, metrics: Iterable[StudentMetrics]) -> None:
        for m in metrics:
            self._students_writer.writerow(
                [
                    m.student_index,
                    m.selector.value,
                    _flag(m.fast_forward),
                    m.attempted_steps,
                    m.overpractice_total,
                    m.underpractice,
                    _flag(m.mastered_all),
                    "" if m.steps_to_mastery is None else m.steps_to_mastery,
                    *m.overpractice_by_skill,
                ]
            )

    def write_trace(self, rows: Iterable[TraceRow]) -> None:
        if self._trace_writer is None:
            return
        for row in rows:
            self._trace_writer.writerow(["" if value is None else value for value in row])

    # End-of-run tables
    def write_summary(
        self,
        summaries: Sequence[ConditionSummary],
        reductions: Sequence[ReductionReport],
        metadata: Dict[str, Any],
    ) -> None:
        document = {
            "metadata": metadata,
            "skills": list(self.skill_model.names),
            "conditions": [self._summary_dict(s) for s in summaries],
            "reductions": [self._reduction_dict(r) for r in reductions],
        }
        path = self._partial_path("summary.json")
        path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")

    def _summary_dict(self, s: ConditionSummary) -> Dict[str, Any]:
        names = self.skill_model.names
        return {
            "selector": s.selector.value,
            "ff": s.fast_forward,
            "n_students": s.n_students,
            "overpractice_mean": s.overpractice_mean,
            "overpractice_sd": s.overpractice_sd if s.sd_defined else None,
            "underpractice_mean": s.underpractice_mean,
            "underpractice_sd": s.underpractice_sd if s.sd_defined else None,
            "steps_to_mastery_mean": s.steps_to_mastery_mean,
            "n_mastered_all": s.n_mastered_all,
            "attempted_steps_mean": s.attempted_steps_mean,
            "per_skill_overpractice_mean": dict(zip(names, s.per_skill_overpractice_mean)),
        }

    @staticmethod
    def _reduction_dict(r: ReductionReport) -> Dict[str, Any]:
        return {
            "selector": r.selector.value,
            "mean_without_ff": r.mean_without_ff,
            "mean_with_ff": r.mean_with_ff,
            "reduction_pct": r.reduction_pct,
            "effect_size_sd": r.effect_size_sd,
            "paired_diff_mean": r.paired_diff_mean,
            "paired_diff_se": r.paired_diff_se,
            "notes": list(r.notes),
        }

    def write_plot_data(self, summaries: Sequence[ConditionSummary], reductions: Sequence[ReductionReport]) -> None:
        """Per-skill stacked overpractice and per-condition mean with 2-SD bars, as plain tables."""
        names = self.skill_model.names
        stacked = pd.DataFrame(
            [
                {"selector": s.selector.value, "ff": _flag(s.fast_forward), "skill": name, "mean_overpractice": value}
                for s in summaries
                for name, value in zip(names, s.per_skill_overpractice_mean)
            ],
            columns=["selector", "ff", "skill", "mean_overpractice"],
        )
        stacked.to_csv(self._partial_path("fig2_data.csv"), index=False, lineterminator="\n")

        reduction_by_selector = {r.selector: r.reduction_pct for r in reductions}
        bars = pd.DataFrame(
            [
                {
                    "selector": s.selector.value,
                    "ff": _flag(s.fast_forward),
                    "n_students": s.n_students,
                    "mean_overpractice": s.overpractice_mean,
                    "sd_overpractice": s.overpractice_sd,
                    "lower_2sd": s.overpractice_mean - 2.0 * s.overpractice_sd,
                    "upper_2sd": s.overpractice_mean + 2.0 * s.overpractice_sd,
                    "reduction_pct": reduction_by_selector.get(s.selector) if s.fast_forward else None,
                }
                for s in summaries
            ],
            columns=[
                "selector",
                "ff",
                "n_students",
                "mean_overpractice",
                "sd_overpractice",
                "lower_2sd",
                "upper_2sd",
                "reduction_pct",
            ],
        )
        bars.to_csv(self._partial_path("fig3_data.csv"), index=False, lineterminator="\n")

    def write_skill_table(self, summaries: Sequence[ConditionSummary]) -> None:
        names = self.skill_model.names
        rows = [
            {
                "selector": s.selector.value,
                "ff": _flag(s.fast_forward),
                "skill": name,
                "mastered_pct": 100.0 * s.per_skill_mastered_rate[k],
                "avg_opportunities": s.per_skill_attempts_mean[k],
                "avg_overpractice": s.per_skill_overpractice_mean[k],
            }
            for s in summaries
            for k, name in enumerate(names)
        ]
        table = pd.DataFrame(
            rows, columns=["selector", "ff", "skill", "mastered_pct", "avg_opportunities", "avg_overpractice"]
        )
        table.to_csv(self._partial_path("skill_table.csv"), index=False, lineterminator="\n")

    def export_summary_to_excel(
        self,
        summaries: Sequence[ConditionSummary],
        reductions: Sequence[ReductionReport],
    ) -> None:
        """Spreadsheet copy of the condition and reduction tables (not covered by the determinism contract)."""
        if not self.xlsx:
            return
        wb = Workbook()
        ws = wb.active
        ws.title = "Conditions"
        self._fill_sheet(
            ws,
            ["Selector", "FF", "Students", "Mean Overpractice", "SD Overpractice", "Mean Underpractice", "Mastered All"],
            [
                [
                    s.selector.value,
                    "yes" if s.fast_forward else "no",
                    s.n_students,
                    s.overpractice_mean,
                    s.overpractice_sd,
                    s.underpractice_mean,
                    s.n_mastered_all,
                ]
                for s in summaries
            ],
        )

        ws = wb.create_sheet("Reductions")
        self._fill_sheet(
            ws,
            ["Selector", "Mean without FF", "Mean with FF", "Reduction %", "Effect size (SD)", "Paired SE"],
            [
                [r.selector.value, r.mean_without_ff, r.mean_with_ff, r.reduction_pct, r.effect_size_sd, r.paired_diff_se]
                for r in reductions
            ],
        )

        ws = wb.create_sheet("Skills")
        self._fill_sheet(
            ws,
            ["Selector", "FF", "Skill", "Mastered %", "Avg Opps.", "Avg Overpr."],
            [
                [
                    s.selector.value,
                    "yes" if s.fast_forward else "no",
                    name,
                    100.0 * s.per_skill_mastered_rate[k],
                    s.per_skill_attempts_mean[k],
                    s.per_skill_overpractice_mean[k],
                ]
                for s in summaries
                for k, name in enumerate(self.skill_model.names)
            ],
        )

        wb.save(self._partial_path("summary.xlsx"))

    @staticmethod
    def _fill_sheet(ws, headers: List[str], rows: List[List[Any]]) -> None:
        for col, header in enumerate(headers, 1):
            cell = ws.cell(row=1, column=col, value=header)
            cell.font = Font(bold=True)
            cell.fill = PatternFill(start_color="CCCCCC", end_color="CCCCCC", fill_type="solid")

        for row, values in enumerate(rows, 2):
            for col, value in enumerate(values, 1):
                ws.cell(row=row, column=col, value=value)

        # Auto-adjust column widths
        for column in ws.columns:
            column_letter = column[0].column_letter
            max_length = max(len(str(cell.value)) for cell in column if cell.value is not None)
            ws.column_dimensions[column_letter].width = min(max_length + 2, 50)
