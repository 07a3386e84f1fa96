"""
Budget-limited search strategies over an OptionTree.

This module provides:
- dodge: epsilon-dodging search (random-branch phase, then frozen-best range refinement)
- tpe: tree-structured Parzen estimator with a "best" and a "rest" density model
- random_search: uniform branch and value sampling
- OptimizerReport with JSON-record serialization

Every strategy calls the objective exactly `budget` times. An objective that raises is
scored with the worst possible goal values and the run carries on.
"""

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import truncnorm

from dodgekit.core.config import settings
from dodgekit.core.logging_config import get_logger
from dodgekit.core.utils import make_rng
from dodgekit.core.validators import ValidationError, check_fraction
from dodgekit.logic.metrics import GOAL_POLARITY, GoalVector, Polarity, worst_goals
from dodgekit.logic.option_space import (
    CategoricalParam,
    Config,
    NodeRole,
    NumericParam,
    OptionNode,
    OptionTree,
    SampleMode,
    make_config,
    narrow_branch,
    sample_branch,
    update_weights,
)

logger = get_logger(__name__)

Objective = Callable[[Config], GoalVector]

MIN_BANDWIDTH_FRACTION = 0.01


class OptimizerError(ValidationError):
    """Raised for invalid budgets, optimizer names or reports."""
    pass


class OptimizerKind(str, Enum):
    DODGE = "dodge"
    TPE = "tpe"
    RANDOM = "random"


def parse_optimizer_kind(kind: str | OptimizerKind) -> OptimizerKind:
    try:
        return OptimizerKind(kind)
    except ValueError:
        raise OptimizerError(
            f"unknown optimizer '{kind}'; expected one of {[k.value for k in OptimizerKind]}"
        )


@dataclass(frozen=True)
class Budget:
    """DODGE evaluation budget: n1 random-branch trials then n2 refinement trials."""

    n1: int = 15
    n2: int = 15

    def __post_init__(self) -> None:
        if self.n1 < 0 or self.n2 < 0:
            raise OptimizerError(f"budget phases must be >= 0, got n1={self.n1}, n2={self.n2}")

    @property
    def total(self) -> int:
        return self.n1 + self.n2

    @classmethod
    def split(cls, total: int) -> "Budget":
        """Halve a flat budget between the two phases (n1 gets the smaller half)."""
        if total < 0:
            raise OptimizerError(f"budget must be >= 0, got {total}")
        return cls(n1=total // 2, n2=total - total // 2)


@dataclass(frozen=True)
class Trial:
    index: int
    config: Config
    goals: GoalVector
    redundant: bool = False
    phase: str = "random"
    failed: bool = False
    diagnostic: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "record": "trial",
            "index": self.index,
            "phase": self.phase,
            "config": self.config.to_dict(),
            "goals": self.goals.to_dict(),
            "redundant": self.redundant,
            "failed": self.failed,
            "diagnostic": self.diagnostic,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Trial":
        return cls(
            index=int(data["index"]),
            config=Config.from_dict(data["config"]),
            goals=GoalVector.from_dict(data["goals"]),
            redundant=bool(data.get("redundant", False)),
            phase=str(data.get("phase", "random")),
            failed=bool(data.get("failed", False)),
            diagnostic=str(data.get("diagnostic", "")),
        )


def best_trial(trials: Sequence[Trial], primary: str) -> Trial:
    """Trial with the best primary goal; the earliest wins ties."""
    if not trials:
        raise OptimizerError("no trials to choose from")
    best = trials[0]
    for trial in trials[1:]:
        if trial.goals.better_than(best.goals, primary):
            best = trial
    return best


@dataclass
class OptimizerReport:
    optimizer: str
    primary: str
    goal_names: tuple[str, ...]
    seed: int
    trials: list[Trial] = field(default_factory=list)
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def evaluations_used(self) -> int:
        return len(self.trials)

    @property
    def best(self) -> Trial:
        return best_trial(self.trials, self.primary)

    @property
    def n_redundant(self) -> int:
        return sum(t.redundant for t in self.trials)

    @property
    def n_failed(self) -> int:
        return sum(t.failed for t in self.trials)

    def to_records(self) -> list[dict[str, Any]]:
        header = {
            "record": "header",
            "optimizer": self.optimizer,
            "primary": self.primary,
            "goals": list(self.goal_names),
            "seed": self.seed,
            "params": dict(sorted(self.params.items())),
            "evaluations_used": self.evaluations_used,
            "best_index": self.best.index if self.trials else None,
        }
        return [header] + [t.to_dict() for t in self.trials]

    @classmethod
    def from_records(cls, records: Sequence[Mapping[str, Any]]) -> "OptimizerReport":
        if not records or records[0].get("record") != "header":
            raise OptimizerError("report records must start with a header record")
        header = records[0]
        trials = [Trial.from_dict(r) for r in records[1:]]
        if header.get("evaluations_used") != len(trials):
            raise OptimizerError(
                f"header declares {header.get('evaluations_used')} evaluations, found {len(trials)}"
            )
        return cls(
            optimizer=header["optimizer"],
            primary=header["primary"],
            goal_names=tuple(header["goals"]),
            seed=int(header["seed"]),
            trials=trials,
            params=dict(header.get("params", {})),
        )


def _resolve_goals(goals: Sequence[str], primary: Optional[str]) -> tuple[tuple[str, ...], str]:
    names = tuple(goals)
    if not names:
        raise OptimizerError("no goals")
    unknown = [g for g in names if g not in GOAL_POLARITY]
    if unknown:
        raise OptimizerError(f"unknown goal(s) {unknown}")
    primary = primary or names[0]
    if primary not in names:
        raise OptimizerError(f"primary goal '{primary}' not among {list(names)}")
    return names, primary


def _evaluate(
    objective: Objective,
    config: Config,
    goal_names: tuple[str, ...],
    index: int,
) -> tuple[GoalVector, bool, str]:
    try:
        return objective(config), False, ""
    except Exception as e:
        diagnostic = f"{type(e).__name__}: {e}"
        logger.warning(
            "Objective failed, scoring worst case",
            extra={"trial": index, "config": config.describe(), "error": diagnostic},
        )
        return worst_goals(goal_names), True, diagnostic


def _check_budget(total: int) -> None:
    if total <= 0:
        raise OptimizerError("zero budget: at least one evaluation is required")


def dodge(
    tree: OptionTree,
    objective: Objective,
    budget: Budget = Budget(),
    epsilon: float = 0.2,
    seed: int = 0,
    goals: Sequence[str] = ("d2h",),
    primary: Optional[str] = None,
) -> OptimizerReport:
    """
    Epsilon-dodging search.

    Phase one samples n1 random branches and rewards novel results (+1) and penalises
    results within epsilon of any earlier one (-1). Phase two samples n2 configs from the
    maximum-weight branches and, after each weight update, narrows the numeric ranges of
    the evaluated branch towards their best-weighted values. `tree` is mutated.

    Args:
        tree: Option tree owned by this run
        objective: Config -> GoalVector
        budget: Phase sizes (n1, n2)
        epsilon: Redundancy cell width (> 0)
        seed: Seed for all sampling
        goals: Goal names the objective returns
        primary: Goal used to pick the best trial (defaults to the first goal)

    Returns:
        OptimizerReport holding exactly budget.total trials

    Raises:
        OptimizerError: zero budget, bad goals, non-positive epsilon
    """
    goal_names, primary = _resolve_goals(goals, primary)
    _check_budget(budget.total)
    if not epsilon > 0:
        raise OptimizerError(f"epsilon must be > 0, got {epsilon}")

    rng = make_rng(seed)
    report = OptimizerReport("dodge", primary, goal_names, seed,
                             params={"n1": budget.n1, "n2": budget.n2, "epsilon": epsilon})
    history: list[GoalVector] = []
    started = time.perf_counter()

    phases = [(SampleMode.RANDOM, budget.n1), (SampleMode.FROZEN_BEST, budget.n2)]
    for mode, count in phases:
        for _ in range(count):
            index = len(report.trials)
            config = sample_branch(tree, mode, rng)
            result, failed, diagnostic = _evaluate(objective, config, goal_names, index)
            redundant = update_weights(tree, config, result, history, epsilon)
            history.append(result)
            narrowed = narrow_branch(tree, config) if mode is SampleMode.FROZEN_BEST else []
            report.trials.append(
                Trial(index, config, result, redundant, mode.value, failed, diagnostic)
            )
            logger.debug(
                "DODGE trial",
                extra={"trial": index, "phase": mode.value, "branch": "/".join(config.branch),
                       "goals": result.to_dict(), "redundant": redundant, "narrowed": narrowed},
            )

    logger.info(
        "DODGE finished",
        extra={"evaluations": report.evaluations_used, "redundant": report.n_redundant,
               "best": report.best.goals.to_dict(),
               "elapsed_s": round(time.perf_counter() - started, 3)},
    )
    return report


def random_search(
    tree: OptionTree,
    objective: Objective,
    budget: int = 30,
    seed: int = 0,
    goals: Sequence[str] = ("d2h",),
    primary: Optional[str] = None,
) -> OptimizerReport:
    goal_names, primary = _resolve_goals(goals, primary)
    _check_budget(budget)
    rng = make_rng(seed)
    report = OptimizerReport("random", primary, goal_names, seed, params={"budget": budget})
    for index in range(budget):
        config = sample_branch(tree, SampleMode.RANDOM, rng)
        result, failed, diagnostic = _evaluate(objective, config, goal_names, index)
        report.trials.append(Trial(index, config, result, False, "random", failed, diagnostic))
        logger.debug("Random trial", extra={"trial": index, "goals": result.to_dict()})
    logger.info(
        "Random search finished",
        extra={"evaluations": report.evaluations_used, "best": report.best.goals.to_dict()},
    )
    return report


class _Parzen:
    """
    One-dimensional Parzen density on [lo, hi]: a truncated Gaussian per observation
    plus one uniform prior component, equally weighted.
    """

    def __init__(self, observations: Sequence[float], lo: float, hi: float):
        self.lo, self.hi = lo, hi
        self.width = hi - lo
        self.mus = np.asarray(observations, dtype=np.float64)
        n = max(self.mus.size, 1)
        self.sigma = max(self.width / math.sqrt(n), MIN_BANDWIDTH_FRACTION * self.width)

    def sample(self, rng: np.random.Generator) -> float:
        if self.width <= 0:
            return self.lo
        pick = int(rng.integers(self.mus.size + 1))
        if pick == self.mus.size:
            return float(rng.uniform(self.lo, self.hi))
        mu = self.mus[pick]
        a, b = (self.lo - mu) / self.sigma, (self.hi - mu) / self.sigma
        return float(truncnorm.rvs(a, b, loc=mu, scale=self.sigma, random_state=rng))

    def log_pdf(self, x: float) -> float:
        if self.width <= 0:
            return 0.0
        prior = 1.0 / self.width
        if self.mus.size == 0:
            return math.log(prior)
        a = (self.lo - self.mus) / self.sigma
        b = (self.hi - self.mus) / self.sigma
        kernels = truncnorm.pdf(x, a, b, loc=self.mus, scale=self.sigma)
        density = (float(np.sum(kernels)) + prior) / (self.mus.size + 1)
        return math.log(max(density, 1e-300))


def _smoothed_frequencies(observed: Sequence[Any], choices: Sequence[Any]) -> np.ndarray:
    counts = np.array([sum(1 for o in observed if o == c) for c in choices], dtype=np.float64)
    return (counts + 1.0) / (counts.sum() + len(choices))


class _GroupModel:
    """Independent per-component densities fitted to one group of trials."""

    def __init__(self, tree: OptionTree, configs: Sequence[Config]):
        self.tree = tree
        self.configs = list(configs)
        self.pre_names = [n.name for n in tree.preprocessors]
        self.learner_names = [n.name for n in tree.learners]
        self.pre_freq = _smoothed_frequencies([c.preproc_node for c in configs], self.pre_names)
        self.learner_freq = _smoothed_frequencies([c.learner_node for c in configs],
                                                  self.learner_names)
        self._cache: dict[tuple[str, str], Any] = {}

    def _values(self, node: OptionNode, param: str) -> list[Any]:
        out = []
        for c in self.configs:
            if node.role is NodeRole.PREPROCESSOR and c.preproc_node == node.name:
                values = c.preproc_params
            elif node.role is NodeRole.LEARNER and c.learner_node == node.name:
                values = c.learner_params
            else:
                continue
            if param in values:
                out.append(values[param])
        return out

    def _param_model(self, node: OptionNode, p: NumericParam | CategoricalParam) -> Any:
        key = (node.role.value + ":" + node.name, p.name)
        if key not in self._cache:
            observed = self._values(node, p.name)
            if isinstance(p, NumericParam):
                self._cache[key] = _Parzen([float(v) for v in observed], p.lo, p.hi)
            else:
                self._cache[key] = _smoothed_frequencies(observed, p.choices)
        return self._cache[key]

    def sample_node(self, nodes: list[OptionNode], freq: np.ndarray,
                    rng: np.random.Generator) -> OptionNode:
        return nodes[int(rng.choice(len(nodes), p=freq))]

    def sample_values(self, node: OptionNode, rng: np.random.Generator) -> dict[str, Any]:
        values: dict[str, Any] = {}
        for p in node.params:
            model = self._param_model(node, p)
            if isinstance(p, NumericParam):
                raw = model.sample(rng)
                if p.integer:
                    raw = int(min(max(round(raw), math.ceil(p.lo)), math.floor(p.hi)))
                values[p.name] = raw
            else:
                values[p.name] = p.choices[int(rng.choice(len(p.choices), p=model))]
        return {
            p.name: values[p.name]
            for p in node.params
            if p.active_when is None or values.get(p.active_when[0]) == p.active_when[1]
        }

    def log_density(self, config: Config) -> float:
        total = math.log(self.pre_freq[self.pre_names.index(config.preproc_node)])
        total += math.log(self.learner_freq[self.learner_names.index(config.learner_node)])
        pre, learner = self.tree.branch_of(config)
        for node, values in ((pre, config.preproc_params), (learner, config.learner_params)):
            for p in node.params:
                if p.name not in values:
                    continue
                model = self._param_model(node, p)
                if isinstance(p, NumericParam):
                    total += model.log_pdf(float(values[p.name]))
                else:
                    total += math.log(model[list(p.choices).index(values[p.name])])
        return total


def _split_best_rest(
    trials: Sequence[Trial], primary: str, gamma: float
) -> tuple[list[Config], list[Config]]:
    """Top ceil(gamma * n) trials by primary goal (polarity-aware, stable) vs the rest."""
    sign = 1.0 if GOAL_POLARITY[primary] is Polarity.LOWER else -1.0
    ranked = sorted(trials, key=lambda t: (sign * t.goals[primary], t.index))
    n_best = max(1, math.ceil(gamma * len(ranked)))
    return [t.config for t in ranked[:n_best]], [t.config for t in ranked[n_best:]]


def tpe(
    tree: OptionTree,
    objective: Objective,
    budget: int = 30,
    seed: int = 0,
    gamma: float = 0.25,
    candidates_per_step: int = 24,
    startup: int = 5,
    goals: Sequence[str] = ("d2h",),
    primary: Optional[str] = None,
) -> OptimizerReport:
    """
    Tree-structured Parzen estimator.

    After `startup` random trials, each step splits the completed trials into the best
    ceil(gamma * n) and the rest, fits independent densities per component (branch
    choice, then every active parameter of the chosen nodes), draws candidates_per_step
    proposals from the best-group model and evaluates the one maximising
    log l(x) - log g(x).
    """
    goal_names, primary = _resolve_goals(goals, primary)
    _check_budget(budget)
    check_fraction("gamma", gamma, OptimizerError)
    if candidates_per_step < 1 or startup < 1:
        raise OptimizerError("candidates_per_step and startup must be >= 1")

    rng = make_rng(seed)
    report = OptimizerReport(
        "tpe", primary, goal_names, seed,
        params={"budget": budget, "gamma": gamma, "candidates_per_step": candidates_per_step,
                "startup": startup},
    )
    n_startup = min(startup, budget)

    for index in range(budget):
        if index < n_startup:
            config = sample_branch(tree, SampleMode.RANDOM, rng)
            phase = "startup"
        else:
            best_configs, rest_configs = _split_best_rest(report.trials, primary, gamma)
            good = _GroupModel(tree, best_configs)
            bad = _GroupModel(tree, rest_configs)
            config, top_score = None, -math.inf
            for _ in range(candidates_per_step):
                pre = good.sample_node(tree.preprocessors, good.pre_freq, rng)
                learner = good.sample_node(tree.learners, good.learner_freq, rng)
                candidate = make_config(pre, learner, good.sample_values(pre, rng),
                                        good.sample_values(learner, rng), SampleMode.RANDOM)
                score = good.log_density(candidate) - bad.log_density(candidate)
                if score > top_score:
                    config, top_score = candidate, score
            assert config is not None
            phase = "model"

        result, failed, diagnostic = _evaluate(objective, config, goal_names, index)
        report.trials.append(Trial(index, config, result, False, phase, failed, diagnostic))
        logger.debug("TPE trial", extra={"trial": index, "phase": phase,
                                         "goals": result.to_dict()})

    logger.info(
        "TPE finished",
        extra={"evaluations": report.evaluations_used, "best": report.best.goals.to_dict()},
    )
    return report


def run_optimizer(
    kind: str | OptimizerKind,
    tree: OptionTree,
    objective: Objective,
    budget: int | Budget | None = None,
    seed: int = 0,
    epsilon: Optional[float] = None,
    goals: Sequence[str] = ("d2h",),
    primary: Optional[str] = None,
    gamma: Optional[float] = None,
    candidates_per_step: Optional[int] = None,
    startup: Optional[int] = None,
) -> OptimizerReport:
    """
    Run an optimizer by name with defaults taken from settings.

    A flat integer budget is split in half between DODGE's two phases; a Budget passed to
    TPE or random search counts as its total.
    """
    kind = parse_optimizer_kind(kind)
    if budget is None:
        budget = Budget(settings.N1, settings.N2)

    if kind is OptimizerKind.DODGE:
        phases = budget if isinstance(budget, Budget) else Budget.split(budget)
        eps = settings.EPSILON if epsilon is None else epsilon
        return dodge(tree, objective, phases, eps, seed, goals, primary)

    total = budget.total if isinstance(budget, Budget) else budget
    if kind is OptimizerKind.TPE:
        return tpe(
            tree, objective, total, seed,
            gamma=settings.TPE_GAMMA if gamma is None else gamma,
            candidates_per_step=(settings.TPE_CANDIDATES if candidates_per_step is None
                                 else candidates_per_step),
            startup=settings.TPE_STARTUP if startup is None else startup,
            goals=goals, primary=primary,
        )
    return random_search(tree, objective, total, seed, goals, primary)
