"""
Machine-readable outputs: optimizer trials as JSON lines, study records as CSV,
plain-text study summaries and intrinsic-dimension reports.
"""

import json
from pathlib import Path
from typing import Any, Iterable

import pandas as pd

from dodgekit.core.logging_config import get_logger
from dodgekit.core.utils import to_jsonable
from dodgekit.core.validators import ValidationError
from dodgekit.logic.intrinsic_dim import IntrinsicDimReport, recommend
from dodgekit.logic.optimizers import OptimizerReport
from dodgekit.services.rigs import RepeatResult, StudyResult, median_table

logger = get_logger(__name__)

STUDY_COLUMNS = ["dataset", "optimizer", "repeat", "goal", "score", "evaluations",
                 "failed", "diagnostic", "config"]


class ReportError(ValidationError):
    """Raised when a report file cannot be read back."""
    pass


def _prepare(path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _dumps(record: Any) -> str:
    return json.dumps(to_jsonable(record), sort_keys=True)


def write_trials_jsonl(report: OptimizerReport, path: str | Path) -> Path:
    path = _prepare(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for record in report.to_records():
            fh.write(_dumps(record) + "\n")
    logger.info("Trials written", extra={"path": str(path), "trials": report.evaluations_used})
    return path


def read_trials_jsonl(path: str | Path) -> OptimizerReport:
    path = Path(path)
    if not path.is_file():
        raise ReportError(f"report not found: {path}")
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ReportError(f"{path}:{lineno}: {e}")
    return OptimizerReport.from_records(records)


def write_study_csv(records: Iterable[RepeatResult], path: str | Path) -> Path:
    path = _prepare(path)
    frame = pd.DataFrame([r.to_row() for r in records], columns=STUDY_COLUMNS)
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n", float_format="%.17g")
    return path


def read_study_csv(path: str | Path) -> list[RepeatResult]:
    path = Path(path)
    if not path.is_file():
        raise ReportError(f"study results not found: {path}")
    frame = pd.read_csv(path, dtype={"diagnostic": str, "config": str}, keep_default_na=False,
                        float_precision="round_trip")
    missing = sorted(set(STUDY_COLUMNS) - set(frame.columns))
    if missing:
        raise ReportError(f"{path} lacks columns {missing}")

    records = []
    for row in frame.itertuples(index=False):
        failed = row.failed if isinstance(row.failed, bool) else str(row.failed) == "True"
        records.append(RepeatResult(
            dataset=str(row.dataset),
            optimizer=str(row.optimizer),
            repeat=int(row.repeat),
            goal=str(row.goal),
            score=float(row.score),
            evaluations=int(row.evaluations),
            failed=failed,
            diagnostic=str(row.diagnostic),
            config=json.loads(row.config) if row.config else None,
        ))
    return records


def format_summary(result: StudyResult) -> str:
    """Deterministic text: median test score per cell, then win/tie/loss per optimizer."""
    optimizers = result.optimizer_names
    medians = median_table(result)
    width = max([len("dataset")] + [len(d) for d in result.dataset_names]) + 2
    col = max([8] + [len(o) + 2 for o in optimizers])

    goals = {d: result.samples[(d, optimizers[0])].polarity.value for d in result.dataset_names}
    lines = [f"rig={result.rig} repeats={result.repeats} seed={result.seed}", ""]
    lines.append("median test score".ljust(width) + "".join(o.rjust(col) for o in optimizers)
                 + "  better")
    for d in result.dataset_names:
        cells = "".join(f"{medians[d][o]:.3f}".rjust(col) for o in optimizers)
        lines.append(d.ljust(width) + cells + f"  {goals[d]}")

    lines.append("")
    lines.append("optimizer".ljust(width) + "win".rjust(6) + "tie".rjust(6) + "loss".rjust(6)
                 + "win+tie".rjust(9) + "all".rjust(6))
    for o in optimizers:
        w, t, l = result.summary[o]
        lines.append(o.ljust(width) + f"{w:6d}{t:6d}{l:6d}{w + t:9d}{w + t + l:6d}")

    lines.append("")
    for d in result.dataset_names:
        for v in result.verdicts[d]:
            lines.append(f"{d}: {v.a} vs {v.b} -> {v.winner} (a12={v.a12:.3f}, "
                         f"significant={str(v.significant).lower()})")
    return "\n".join(lines) + "\n"


def write_summary(result: StudyResult, path: str | Path) -> Path:
    path = _prepare(path)
    path.write_text(format_summary(result), encoding="utf-8")
    return path


def write_intrinsic_report(report: IntrinsicDimReport, path: str | Path,
                           max_recommended: float = 4.0,
                           min_not_recommended: float = 8.0) -> tuple[Path, Path]:
    """JSON report at `path` plus a two-column ln_r, ln_c table next to it (.loglog.csv)."""
    path = _prepare(path)
    body = report.to_dict()
    body["recommendation"] = recommend(report.dimension, max_recommended,
                                       min_not_recommended).value
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    table_path = path.with_suffix(".loglog.csv")
    table = pd.DataFrame(report.loglog_table(), columns=["ln_r", "ln_c"])
    table.to_csv(table_path, index=False, encoding="utf-8", lineterminator="\n",
                 float_format="%.17g")
    return path, table_path
