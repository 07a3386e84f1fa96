"""
Experiment protocols.

RIG0 trains on every earlier release and tests on the latest one; RIG1 draws repeated
stratified 80/20 splits. Inside each training partition a stratified 70/30 tune/validation
split feeds the optimizer objective, so test rows are never seen while searching. The
winning config is refit on the full training partition and scored once on the test rows.
"""

import itertools
import json
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Literal, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from dodgekit.core.config import settings
from dodgekit.core.logging_config import get_logger, run_context
from dodgekit.core.utils import derive_seed, make_rng
from dodgekit.core.validators import ValidationError
from dodgekit.logic.dataset_io import Dataset, DatasetError, load_csv, stratified_split, temporal_split
from dodgekit.logic.learners import fit, predict
from dodgekit.logic.metrics import GOAL_POLARITY, GoalVector, confusion, goals as score_goals
from dodgekit.logic.option_space import Config, OptionTree, default_option_tree, load_option_space
from dodgekit.logic.optimizers import Budget, OptimizerKind, run_optimizer
from dodgekit.logic.preprocess import fit_transform
from dodgekit.logic.stats import ComparisonVerdict, SampleSet, verdict, win_tie_loss

logger = get_logger(__name__)

MIN_RIG1_ROWS = 10


class StudySpecError(ValidationError):
    """Raised for malformed or inconsistent study specifications."""
    pass


class RigKind(str, Enum):
    RIG0 = "rig0"
    RIG1 = "rig1"


class DatasetSpec(BaseModel):
    name: str
    path: Path
    target: str
    positive_label: str
    effort: Optional[str] = None
    version: Optional[str] = None
    goal: Literal["d2h", "popt20"] = "d2h"

    @model_validator(mode="after")
    def popt_needs_effort(self) -> "DatasetSpec":
        if self.goal == "popt20" and self.effort is None:
            raise ValueError(f"dataset '{self.name}': popt20 needs an effort column")
        return self

    @property
    def goal_names(self) -> tuple[str, ...]:
        """All goals the objective scores; redundancy checks use every one of them."""
        return ("d2h", "popt20") if self.effort else ("d2h",)


class OptimizerSpec(BaseModel):
    name: str
    kind: OptimizerKind
    budget: Optional[int] = Field(None, ge=1)
    n1: Optional[int] = Field(None, ge=0)
    n2: Optional[int] = Field(None, ge=0)
    epsilon: Optional[float] = Field(None, gt=0.0)
    seed: int = 0

    def resolved_budget(self) -> Budget | int:
        if self.kind is OptimizerKind.DODGE:
            if self.n1 is not None or self.n2 is not None:
                return Budget(self.n1 if self.n1 is not None else settings.N1,
                              self.n2 if self.n2 is not None else settings.N2)
            return Budget.split(self.budget) if self.budget else Budget(settings.N1, settings.N2)
        return self.budget if self.budget else settings.dodge_budget


class StudySpec(BaseModel):
    datasets: list[DatasetSpec] = Field(..., min_length=1)
    optimizers: list[OptimizerSpec] = Field(..., min_length=1)
    rig: RigKind = RigKind.RIG1
    repeats: int = Field(default_factory=lambda: settings.REPEATS, ge=1)
    seed: int = 0
    option_space: Optional[Path] = None
    n_jobs: Optional[int] = None

    @field_validator("datasets", "optimizers")
    @classmethod
    def unique_names(cls, entries: list) -> list:
        names = [e.name for e in entries]
        if len(set(names)) != len(names):
            raise ValueError(f"names must be unique, got {names}")
        return entries

    @model_validator(mode="after")
    def rig0_needs_versions(self) -> "StudySpec":
        if self.rig is RigKind.RIG0:
            missing = [d.name for d in self.datasets if d.version is None]
            if missing:
                raise ValueError(f"rig0 needs a version column for {missing}")
        return self


def load_study_spec(path: str | Path) -> StudySpec:
    """
    Read a StudySpec from JSON. Relative dataset and option-space paths resolve against the
    spec file's directory and must exist.

    Raises:
        StudySpecError: unreadable file, schema violation, missing referenced file
    """
    path = Path(path)
    if not path.is_file():
        raise StudySpecError(f"study spec not found: {path}")
    try:
        spec = StudySpec.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise StudySpecError(f"cannot parse {path}: {e}")
    except PydanticValidationError as e:
        raise StudySpecError(f"invalid study spec {path}: {e}")

    base = path.parent
    for d in spec.datasets:
        if not d.path.is_absolute():
            d.path = base / d.path
        if not d.path.is_file():
            raise StudySpecError(f"dataset '{d.name}' file not found: {d.path}")
    if spec.option_space is not None:
        if not spec.option_space.is_absolute():
            spec.option_space = base / spec.option_space
        if not spec.option_space.is_file():
            raise StudySpecError(f"option space file not found: {spec.option_space}")
    return spec


@dataclass(frozen=True)
class ObjectiveView:
    """What one objective call saw, by row identity; handed to study observers."""

    dataset: str
    optimizer: str
    repeat: int
    tune_ids: frozenset[int]
    validation_ids: frozenset[int]
    test_ids: frozenset[int]


Observer = Callable[[ObjectiveView], None]


@dataclass(frozen=True)
class RepeatResult:
    dataset: str
    optimizer: str
    repeat: int
    goal: str
    score: float
    evaluations: int
    failed: bool = False
    diagnostic: str = ""
    config: Optional[dict[str, Any]] = None

    def to_row(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "optimizer": self.optimizer,
            "repeat": self.repeat,
            "goal": self.goal,
            "score": self.score,
            "evaluations": self.evaluations,
            "failed": self.failed,
            "diagnostic": self.diagnostic,
            "config": json.dumps(self.config, sort_keys=True) if self.config else "",
        }


@dataclass
class StudyResult:
    records: list[RepeatResult]
    samples: dict[tuple[str, str], SampleSet] = field(default_factory=dict)
    verdicts: dict[str, list[ComparisonVerdict]] = field(default_factory=dict)
    summary: dict[str, tuple[int, int, int]] = field(default_factory=dict)
    rig: str = RigKind.RIG1.value
    repeats: int = 0
    seed: int = 0

    @property
    def dataset_names(self) -> list[str]:
        return list(dict.fromkeys(r.dataset for r in self.records))

    @property
    def optimizer_names(self) -> list[str]:
        return list(dict.fromkeys(r.optimizer for r in self.records))


def rig1_split(data: Dataset, repeat_index: int, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified 80/20 train/test split, deterministic per (seed, repeat_index)."""
    if data.n_rows < MIN_RIG1_ROWS:
        raise DatasetError(f"rig1 needs >= {MIN_RIG1_ROWS} rows, '{data.name}' has {data.n_rows}")
    data.require_both_classes()
    rng = make_rng(derive_seed(seed, "rig1", repeat_index))
    return stratified_split(data, settings.TRAIN_FRACTION, rng)


def score_config(config: Config, train: Dataset, test: Dataset, goal_names: Sequence[str],
                 seed: int) -> GoalVector:
    pre_train, pre_test = fit_transform(config.preproc, train, test, seed=seed)
    model = fit(config.learner, pre_train, seed=seed)
    predicted = predict(model, pre_test.features)
    return score_goals(confusion(test.target, predicted), test.effort, test.target,
                       predicted, goal_names)


def _split_for(rig: RigKind, data: Dataset, name: str, repeat: int,
               seed: int) -> tuple[Dataset, Dataset]:
    if rig is RigKind.RIG0:
        return temporal_split(data)
    return rig1_split(data, repeat, derive_seed(seed, "split", name))


def run_repeat(
    data: Dataset,
    optimizer: OptimizerSpec,
    repeat: int,
    dataset_spec: DatasetSpec,
    rig: RigKind = RigKind.RIG1,
    seed: int = 0,
    tree: Optional[OptionTree] = None,
    observer: Optional[Observer] = None,
) -> RepeatResult:
    """
    One (dataset, optimizer, repeat) unit: split, search on tune/validation, refit the
    winner on train, score on test. Any failure yields the worst score plus a diagnostic.
    """
    name = dataset_spec.name
    goal_names = dataset_spec.goal_names
    primary = dataset_spec.goal
    opt_seed = derive_seed(seed, "optimizer", optimizer.seed, name, repeat)
    learner_seed = derive_seed(opt_seed, "learner")
    budget = optimizer.resolved_budget()
    total = budget.total if isinstance(budget, Budget) else budget

    try:
        train, test = _split_for(rig, data, name, repeat, seed)
        tune, validation = stratified_split(
            train, settings.TUNE_FRACTION, make_rng(derive_seed(seed, "tune", name, repeat))
        )
        view = ObjectiveView(
            dataset=name,
            optimizer=optimizer.name,
            repeat=repeat,
            tune_ids=frozenset(int(i) for i in tune.row_ids),
            validation_ids=frozenset(int(i) for i in validation.row_ids),
            test_ids=frozenset(int(i) for i in test.row_ids),
        )

        def objective(config: Config) -> GoalVector:
            if observer is not None:
                observer(view)
            return score_config(config, tune, validation, goal_names, learner_seed)

        report = run_optimizer(
            optimizer.kind,
            (tree or default_option_tree()).fresh(),
            objective,
            budget=budget,
            seed=opt_seed,
            epsilon=optimizer.epsilon,
            goals=goal_names,
            primary=primary,
        )
        best = report.best.config
        test_goals = score_config(best, train, test, goal_names, learner_seed)
        return RepeatResult(name, optimizer.name, repeat, primary, test_goals[primary],
                            report.evaluations_used, config=best.to_dict())
    except Exception as e:
        diagnostic = f"{type(e).__name__}: {e}"
        logger.warning(
            "Repeat failed, scoring worst case",
            extra={"dataset": name, "optimizer": optimizer.name, "repeat": repeat,
                   "error": diagnostic},
        )
        worst = GOAL_POLARITY[primary].worst
        return RepeatResult(name, optimizer.name, repeat, primary, worst, total,
                            failed=True, diagnostic=diagnostic)


def build_samples(records: Sequence[RepeatResult]) -> dict[tuple[str, str], SampleSet]:
    """Group repeat scores into one SampleSet per (dataset, optimizer), ordered by repeat."""
    grouped: dict[tuple[str, str], list[RepeatResult]] = {}
    for r in records:
        grouped.setdefault((r.dataset, r.optimizer), []).append(r)
    samples = {}
    for key, rows in grouped.items():
        rows.sort(key=lambda r: r.repeat)
        goals = {r.goal for r in rows}
        if len(goals) != 1:
            raise StudySpecError(f"{key} mixes goals {sorted(goals)}")
        goal = goals.pop()
        samples[key] = SampleSet(name=key[1], scores=tuple(r.score for r in rows),
                                 polarity=GOAL_POLARITY[goal])
    return samples


def pairwise_verdicts(
    samples: dict[tuple[str, str], SampleSet],
    datasets: Sequence[str],
    optimizers: Sequence[str],
    seed: int,
) -> dict[str, list[ComparisonVerdict]]:
    out: dict[str, list[ComparisonVerdict]] = {}
    for d in datasets:
        out[d] = [
            verdict(
                samples[(d, a)],
                samples[(d, b)],
                seed=derive_seed(seed, "verdict", d, a, b),
                resamples=settings.BOOTSTRAP_RESAMPLES,
                confidence=settings.CONFIDENCE,
                small_effect=settings.SMALL_EFFECT,
            )
            for a, b in itertools.combinations(optimizers, 2)
        ]
    return out


def summarize(
    verdicts: dict[str, list[ComparisonVerdict]], optimizers: Sequence[str]
) -> dict[str, tuple[int, int, int]]:
    """Win/tie/loss per optimizer over every pairwise verdict it takes part in."""
    summary = {}
    for name in optimizers:
        involved = [v for vs in verdicts.values() for v in vs if name in (v.a, v.b)]
        summary[name] = win_tie_loss(involved, name)
    return summary


def assemble(records: list[RepeatResult], seed: int, rig: str = RigKind.RIG1.value,
             repeats: int = 0) -> StudyResult:
    records = sorted(records, key=lambda r: (r.dataset, r.optimizer, r.repeat))
    result = StudyResult(records=records, rig=rig, repeats=repeats, seed=seed)
    result.samples = build_samples(records)
    result.verdicts = pairwise_verdicts(result.samples, result.dataset_names,
                                        result.optimizer_names, seed)
    result.summary = summarize(result.verdicts, result.optimizer_names)
    return result


def run_study(
    spec: StudySpec,
    observer: Optional[Observer] = None,
    n_jobs: Optional[int] = None,
) -> StudyResult:
    """
    Run every (dataset, optimizer, repeat) unit and aggregate the test scores.

    Units fan out over joblib workers; an observer forces in-process sequential execution.
    Records are ordered by (dataset, optimizer, repeat) regardless of worker count.
    """
    started = time.perf_counter()
    run_id = f"study-{spec.seed}-{spec.rig.value}"
    with run_context(run_id):
        datasets = {
            d.name: load_csv(d.path, d.target, d.positive_label, d.effort, d.version, name=d.name)
            for d in spec.datasets
        }
        tree = load_option_space(spec.option_space) if spec.option_space else default_option_tree()
        jobs = n_jobs if n_jobs is not None else (spec.n_jobs if spec.n_jobs is not None
                                                  else settings.N_JOBS)
        if observer is not None:
            jobs = 1

        logger.info(
            "Study started",
            extra={"datasets": list(datasets), "optimizers": [o.name for o in spec.optimizers],
                   "rig": spec.rig.value, "repeats": spec.repeats, "n_jobs": jobs},
        )
        units = [
            (d, o, r)
            for d in spec.datasets
            for o in spec.optimizers
            for r in range(spec.repeats)
        ]
        records = Parallel(n_jobs=jobs)(
            delayed(run_repeat)(datasets[d.name], o, r, d, spec.rig, spec.seed, tree, observer)
            for d, o, r in units
        )

        result = assemble(list(records), spec.seed, spec.rig.value, spec.repeats)
        failed = sum(r.failed for r in result.records)
        logger.info(
            "Study finished",
            extra={"records": len(result.records), "failed": failed, "summary": result.summary,
                   "elapsed_s": round(time.perf_counter() - started, 3)},
        )
    return result


def median_table(result: StudyResult) -> dict[str, dict[str, float]]:
    """Median test score per dataset and optimizer."""
    return {
        d: {o: float(np.median(result.samples[(d, o)].values)) for o in result.optimizer_names}
        for d in result.dataset_names
    }
