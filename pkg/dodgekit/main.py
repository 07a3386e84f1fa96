"""
dodgekit command line.

Subcommands:
- optimize: tune one dataset with DODGE, TPE or random search and write the trials
- intrinsic: estimate intrinsic dimensionality and say whether DODGE is likely enough
- study: run a RIG0/RIG1 study from a JSON spec and write results plus a summary
- compare: pairwise verdicts between two optimizers from a study results CSV

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

from dodgekit.core.config import ConfigurationError, settings
from dodgekit.core.logging_config import get_logger, run_context, setup_logging
from dodgekit.core.utils import derive_seed, make_rng
from dodgekit.core.validators import ValidationError
from dodgekit.display import console, show_best, show_intrinsic, show_study
from dodgekit.logic.dataset_io import Dataset, load_csv, stratified_split
from dodgekit.logic.intrinsic_dim import intrinsic_dimension, recommend
from dodgekit.logic.metrics import GOAL_POLARITY, GoalVector
from dodgekit.logic.option_space import (
    Config,
    OptionSpaceError,
    default_option_tree,
    load_option_space,
)
from dodgekit.logic.optimizers import OptimizerError, OptimizerKind, run_optimizer
from dodgekit.logic.stats import verdict
from dodgekit.services.report_writer import (
    read_study_csv,
    write_intrinsic_report,
    write_study_csv,
    write_summary,
    write_trials_jsonl,
)
from dodgekit.services.rigs import (
    StudySpecError,
    build_samples,
    load_study_spec,
    run_study,
    score_config,
    summarize,
)

logger = get_logger(__name__)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(ValidationError):
    """Flags that parse but cannot be honoured together."""
    pass


USAGE_ERRORS = (UsageError, StudySpecError, OptionSpaceError, OptimizerError, ConfigurationError)


def _add_dataset_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, type=Path, help="CSV dataset")
    parser.add_argument("--target", required=True, help="Target column")
    parser.add_argument("--positive-label", required=True, help="Target value of the positive class")
    parser.add_argument("--effort", default=None, help="Effort (LOC) column, enables popt20")
    parser.add_argument("--version", default=None, help="Release tag column")
    parser.add_argument("--seed", type=int, default=settings.SEED)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dodgekit", description=__doc__.splitlines()[1])
    parser.add_argument("--log-level", default=settings.LOG_LEVEL,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
                        type=str.upper)
    parser.add_argument("--log-format", default=settings.LOG_FORMAT, choices=["json", "text"])
    subparsers = parser.add_subparsers(dest="command", required=True)

    optimize = subparsers.add_parser("optimize", help="Tune one dataset and write its trials")
    _add_dataset_flags(optimize)
    optimize.add_argument("--optimizer", required=True, choices=[k.value for k in OptimizerKind])
    optimize.add_argument("--budget", type=int, default=None,
                          help=f"Evaluations (default {settings.dodge_budget})")
    optimize.add_argument("--epsilon", type=float, default=None,
                          help=f"DODGE cell width (default {settings.EPSILON})")
    optimize.add_argument("--goal", choices=sorted(GOAL_POLARITY), default="d2h")
    optimize.add_argument("--option-space", type=Path, default=None,
                          help="JSON option space (default: every preprocessor x learner)")
    optimize.add_argument("--out", required=True, type=Path, help="JSON-lines trial report")
    optimize.set_defaults(handler=cmd_optimize)

    intrinsic = subparsers.add_parser("intrinsic", help="Estimate intrinsic dimensionality")
    _add_dataset_flags(intrinsic)
    intrinsic.add_argument("--steps", type=int, default=settings.ID_STEPS)
    intrinsic.add_argument("--cap", type=int, default=settings.ID_SUBSAMPLE_CAP,
                           help="Rows measured at most")
    intrinsic.add_argument("--out", type=Path, default=None,
                           help="JSON report; a .loglog.csv table is written beside it")
    intrinsic.set_defaults(handler=cmd_intrinsic)

    study = subparsers.add_parser("study", help="Run a study from a JSON spec")
    study.add_argument("--spec", required=True, type=Path)
    study.add_argument("--out", required=True, type=Path, help="Output directory")
    study.add_argument("--n-jobs", type=int, default=None)
    study.set_defaults(handler=cmd_study)

    compare = subparsers.add_parser("compare", help="Compare two optimizers from study results")
    compare.add_argument("--results", required=True, type=Path, help="Study results CSV")
    compare.add_argument("--a", required=True, help="Focal optimizer")
    compare.add_argument("--b", required=True, help="Rival optimizer")
    compare.add_argument("--seed", type=int, default=settings.SEED)
    compare.set_defaults(handler=cmd_compare)
    return parser


def _load(args: argparse.Namespace) -> Dataset:
    return load_csv(args.data, args.target, args.positive_label, args.effort, args.version)


def cmd_optimize(args: argparse.Namespace) -> int:
    if args.budget is not None and args.budget < 1:
        raise UsageError(f"--budget must be >= 1, got {args.budget}")
    if args.epsilon is not None and args.epsilon <= 0:
        raise UsageError(f"--epsilon must be > 0, got {args.epsilon}")
    if args.goal == "popt20" and args.effort is None:
        raise UsageError("--goal popt20 needs --effort")
    tree = load_option_space(args.option_space) if args.option_space else default_option_tree()

    data = _load(args)
    goal_names = ("d2h", "popt20") if data.has_effort else ("d2h",)
    tune, validation = stratified_split(
        data, settings.TUNE_FRACTION, make_rng(derive_seed(args.seed, "tune", data.name))
    )
    learner_seed = derive_seed(args.seed, "learner")

    def objective(config: Config) -> GoalVector:
        return score_config(config, tune, validation, goal_names, learner_seed)

    with run_context(f"optimize-{args.optimizer}-{args.seed}"):
        report = run_optimizer(args.optimizer, tree, objective, budget=args.budget,
                               seed=args.seed, epsilon=args.epsilon, goals=goal_names,
                               primary=args.goal)
    write_trials_jsonl(report, args.out)
    show_best(report)
    return EXIT_OK


def cmd_intrinsic(args: argparse.Namespace) -> int:
    data = _load(args)
    report = intrinsic_dimension(
        data,
        steps=args.steps,
        subsample_cap=args.cap,
        smoothing_window=settings.ID_SMOOTHING_WINDOW,
        seed=args.seed,
        min_pairs=settings.ID_MIN_PAIRS,
        reliability_limit=settings.ID_RELIABILITY_LIMIT,
    )
    verdict_ = recommend(report.dimension, settings.RECOMMEND_MAX_DIM,
                         settings.NOT_RECOMMEND_MIN_DIM)
    if args.out is not None:
        write_intrinsic_report(report, args.out, settings.RECOMMEND_MAX_DIM,
                               settings.NOT_RECOMMEND_MIN_DIM)
    show_intrinsic(report, verdict_)
    return EXIT_OK


def cmd_study(args: argparse.Namespace) -> int:
    spec = load_study_spec(args.spec)
    result = run_study(spec, n_jobs=args.n_jobs)
    write_study_csv(result.records, args.out / "results.csv")
    write_summary(result, args.out / "summary.txt")
    show_study(result)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    samples = build_samples(read_study_csv(args.results))
    optimizers = {o for _, o in samples}
    for name in (args.a, args.b):
        if name not in optimizers:
            raise UsageError(f"optimizer '{name}' not in {args.results}; have {sorted(optimizers)}")

    datasets = sorted({d for d, o in samples if (d, args.a) in samples and (d, args.b) in samples})
    verdicts = {}
    for d in datasets:
        v = verdict(
            samples[(d, args.a)],
            samples[(d, args.b)],
            seed=derive_seed(args.seed, "verdict", d, args.a, args.b),
            resamples=settings.BOOTSTRAP_RESAMPLES,
            confidence=settings.CONFIDENCE,
            small_effect=settings.SMALL_EFFECT,
        )
        verdicts[d] = [v]
        console.print(f"{d}: {v.winner} (a12={v.a12:.3f}, "
                      f"significant={str(v.significant).lower()})", soft_wrap=True)

    w, t, l = summarize(verdicts, [args.a])[args.a]
    console.print(f"{args.a} vs {args.b}: win={w} tie={t} loss={l}", soft_wrap=True)
    return EXIT_OK


def _diagnostic(error: BaseException) -> str:
    return " ".join(f"{type(error).__name__}: {error}".split())


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.log_level, args.log_format, settings.LOG_FILE)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except USAGE_ERRORS as e:
        print(f"dodgekit {args.command}: {_diagnostic(e)}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        logger.debug("Command failed", exc_info=True)
        print(f"dodgekit {args.command}: {_diagnostic(e)}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
