"""
Weighted option tree over pre-processor and learner choices.

This module provides:
- OptionTree: pre-processor and learner nodes with integer weights (initially 0),
  numeric parameter ranges and categorical choice lists
- Branch sampling (uniform, or restricted to the maximum-weight branches)
- The epsilon-redundancy weight update and value-based range narrowing
- A declarative JSON form of the option space
"""

import copy
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Literal, Mapping, Optional, Union

import numpy as np
from pydantic import BaseModel, Field
from pydantic import ValidationError as PydanticValidationError

from dodgekit.core.logging_config import get_logger
from dodgekit.core.validators import ValidationError
from dodgekit.logic.learners import LEARNER_PARAMS, LearnerSpec
from dodgekit.logic.metrics import GoalVector, MetricError
from dodgekit.logic.params import ParamDef
from dodgekit.logic.preprocess import PREPROC_PARAMS, PreprocKind, PreprocSpec

logger = get_logger(__name__)


class OptionSpaceError(ValidationError):
    """Raised for malformed option trees, configs or range updates."""
    pass


class NodeRole(str, Enum):
    PREPROCESSOR = "preprocessor"
    LEARNER = "learner"


class SampleMode(str, Enum):
    RANDOM = "random"
    FROZEN_BEST = "frozen_best"


def narrow_range(bounds: tuple[float, float], best_value: float, worst_value: float) -> tuple[float, float]:
    """
    Pull a range towards its best value: (x, (x+y)/2) when x <= y, else ((x+y)/2, x).

    Raises:
        OptionSpaceError: best or worst value outside the current range
    """
    lo, hi = bounds
    x, y = best_value, worst_value
    for label, v in (("best", x), ("worst", y)):
        if not lo <= v <= hi:
            raise OptionSpaceError(f"{label} value {v} outside range [{lo}, {hi}]")
    mid = (x + y) / 2.0
    return (x, mid) if x <= y else (mid, x)


@dataclass
class NumericParam:
    """
    Numeric range with per-value weights.

    `value_weights` records every sampled value with its weight w(r), starting at 0.
    """

    name: str
    lo: float
    hi: float
    integer: bool = False
    active_when: Optional[tuple[str, Any]] = None
    declared_lo: float = field(init=False)
    declared_hi: float = field(init=False)
    value_weights: dict[float, int] = field(default_factory=dict, init=False)

    def __post_init__(self) -> None:
        if not self.lo <= self.hi:
            raise OptionSpaceError(f"{self.name}: lo={self.lo} > hi={self.hi}")
        self.declared_lo = self.lo
        self.declared_hi = self.hi

    def sample(self, rng: np.random.Generator) -> float | int:
        if not self.integer:
            return float(rng.uniform(self.lo, self.hi)) if self.lo < self.hi else float(self.lo)
        lo_int, hi_int = math.ceil(self.lo), math.floor(self.hi)
        if lo_int > hi_int:
            # narrowed between two integers: nearest one to the middle, kept in declared bounds
            middle = round((self.lo + self.hi) / 2)
            return int(min(max(middle, math.ceil(self.declared_lo)), math.floor(self.declared_hi)))
        return int(rng.integers(lo_int, hi_int + 1))

    def record(self, value: float, delta: int) -> None:
        self.value_weights[value] = self.value_weights.get(value, 0) + delta

    def narrow(self) -> bool:
        """
        Narrow the range around the best- and worst-weighted values seen inside it.

        Best is the highest weight (earliest sampled on ties), worst the lowest weight
        (latest sampled on ties). Needs two distinct in-range values; returns False when
        nothing changed.
        """
        seen = [(v, w) for v, w in self.value_weights.items() if self.lo <= v <= self.hi]
        if len({v for v, _ in seen}) < 2:
            return False
        top = max(w for _, w in seen)
        bottom = min(w for _, w in seen)
        best = next(v for v, w in seen if w == top)
        worst = next(v for v, w in reversed(seen) if w == bottom)
        if best == worst:
            return False
        self.lo, self.hi = narrow_range((self.lo, self.hi), best, worst)
        return True


@dataclass
class CategoricalParam:
    name: str
    choices: tuple[Any, ...]
    active_when: Optional[tuple[str, Any]] = None

    def __post_init__(self) -> None:
        self.choices = tuple(self.choices)
        if not self.choices:
            raise OptionSpaceError(f"{self.name}: empty choice list")

    def sample(self, rng: np.random.Generator) -> Any:
        return self.choices[int(rng.integers(len(self.choices)))]


Param = Union[NumericParam, CategoricalParam]


@dataclass
class OptionNode:
    name: str
    role: NodeRole
    kind: str
    params: list[Param] = field(default_factory=list)
    weight: int = 0

    def param(self, name: str) -> Param:
        for p in self.params:
            if p.name == name:
                return p
        raise OptionSpaceError(f"node '{self.name}' has no parameter '{name}'")

    def sample(self, rng: np.random.Generator) -> dict[str, Any]:
        """Draw every parameter, then drop the inactive conditional ones."""
        values = {p.name: p.sample(rng) for p in self.params}
        return {
            p.name: values[p.name]
            for p in self.params
            if p.active_when is None or values.get(p.active_when[0]) == p.active_when[1]
        }


@dataclass
class OptionTree:
    preprocessors: list[OptionNode]
    learners: list[OptionNode]

    def __post_init__(self) -> None:
        for role, nodes in (("preprocessor", self.preprocessors), ("learner", self.learners)):
            if not nodes:
                raise OptionSpaceError(f"option tree has no {role} nodes")
            names = [n.name for n in nodes]
            if len(set(names)) != len(names):
                raise OptionSpaceError(f"duplicate {role} node names in {names}")

    def branches(self) -> list[tuple[OptionNode, OptionNode]]:
        return [(p, lrn) for p in self.preprocessors for lrn in self.learners]

    def node(self, role: NodeRole, name: str) -> OptionNode:
        nodes = self.preprocessors if role is NodeRole.PREPROCESSOR else self.learners
        for n in nodes:
            if n.name == name:
                return n
        raise OptionSpaceError(f"no {role.value} node named '{name}'")

    def branch_of(self, config: "Config") -> tuple[OptionNode, OptionNode]:
        return (self.node(NodeRole.PREPROCESSOR, config.preproc_node),
                self.node(NodeRole.LEARNER, config.learner_node))

    def weights(self) -> dict[str, int]:
        out = {f"preprocessor:{n.name}": n.weight for n in self.preprocessors}
        out.update({f"learner:{n.name}": n.weight for n in self.learners})
        return out

    def fresh(self) -> "OptionTree":
        """Deep copy with weights, value weights and ranges reset to their declared state."""
        tree = copy.deepcopy(self)
        for node in tree.preprocessors + tree.learners:
            node.weight = 0
            for p in node.params:
                if isinstance(p, NumericParam):
                    p.lo, p.hi = p.declared_lo, p.declared_hi
                    p.value_weights.clear()
        return tree


@dataclass(frozen=True)
class Config:
    """One concrete point of the option tree, with the branch that produced it."""

    preproc_node: str
    preproc_kind: str
    preproc_params: Mapping[str, Any]
    learner_node: str
    learner_kind: str
    learner_params: Mapping[str, Any]
    mode: str = SampleMode.RANDOM.value

    @property
    def preproc(self) -> PreprocSpec:
        return PreprocSpec(kind=self.preproc_kind, params=dict(self.preproc_params))

    @property
    def learner(self) -> LearnerSpec:
        return LearnerSpec(kind=self.learner_kind, params=dict(self.learner_params))

    @property
    def branch(self) -> tuple[str, str]:
        return (self.preproc_node, self.learner_node)

    def describe(self) -> str:
        def fmt(params: Mapping[str, Any]) -> str:
            return ", ".join(f"{k}={_fmt_value(v)}" for k, v in sorted(params.items()))
        return (f"{self.preproc_node}({fmt(self.preproc_params)}) -> "
                f"{self.learner_node}({fmt(self.learner_params)})")

    def to_dict(self) -> dict[str, Any]:
        return {
            "preproc_node": self.preproc_node,
            "preproc_kind": self.preproc_kind,
            "preproc_params": dict(sorted(self.preproc_params.items())),
            "learner_node": self.learner_node,
            "learner_kind": self.learner_kind,
            "learner_params": dict(sorted(self.learner_params.items())),
            "mode": self.mode,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Config":
        return cls(
            preproc_node=data["preproc_node"],
            preproc_kind=data["preproc_kind"],
            preproc_params=dict(data.get("preproc_params", {})),
            learner_node=data["learner_node"],
            learner_kind=data["learner_kind"],
            learner_params=dict(data.get("learner_params", {})),
            mode=data.get("mode", SampleMode.RANDOM.value),
        )


def _fmt_value(v: Any) -> str:
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def make_config(
    pre: OptionNode,
    learner: OptionNode,
    pre_values: Mapping[str, Any],
    learner_values: Mapping[str, Any],
    mode: SampleMode = SampleMode.RANDOM,
) -> Config:
    return Config(
        preproc_node=pre.name,
        preproc_kind=pre.kind,
        preproc_params=dict(pre_values),
        learner_node=learner.name,
        learner_kind=learner.kind,
        learner_params=dict(learner_values),
        mode=mode.value,
    )


def max_weight_branches(tree: OptionTree) -> list[tuple[OptionNode, OptionNode]]:
    branches = tree.branches()
    top = max(p.weight + lrn.weight for p, lrn in branches)
    return [(p, lrn) for p, lrn in branches if p.weight + lrn.weight == top]


def sample_branch(
    tree: OptionTree,
    mode: SampleMode | str,
    rng: np.random.Generator,
) -> Config:
    """
    Sample one Config.

    RANDOM picks a branch uniformly; FROZEN_BEST picks among the maximum-weight
    branches (uniformly on ties). Parameter values are drawn from the current ranges.
    """
    mode = SampleMode(mode)
    candidates = tree.branches() if mode is SampleMode.RANDOM else max_weight_branches(tree)
    pre, learner = candidates[int(rng.integers(len(candidates)))]
    return make_config(pre, learner, pre.sample(rng), learner.sample(rng), mode)


def is_redundant(result: GoalVector, history: Iterable[GoalVector], epsilon: float) -> bool:
    """True iff some prior result lies within epsilon of `result` on every goal."""
    try:
        return any(result.within(prior, epsilon) for prior in history)
    except MetricError as e:
        raise OptionSpaceError(f"goal-name mismatch with history: {e}")


def update_weights(
    tree: OptionTree,
    config: Config,
    result: GoalVector,
    history: Iterable[GoalVector],
    epsilon: float,
) -> bool:
    """
    Apply the epsilon-redundancy rule to the branch that produced `config`.

    Redundant results push every node on the branch (and every sampled numeric value)
    down by one; novel results push them up by one.

    Returns:
        True when the result was redundant
    """
    if not epsilon > 0:
        raise OptionSpaceError(f"epsilon must be > 0, got {epsilon}")
    redundant = is_redundant(result, history, epsilon)
    delta = -1 if redundant else 1

    pre, learner = tree.branch_of(config)
    for node, values in ((pre, config.preproc_params), (learner, config.learner_params)):
        node.weight += delta
        for p in node.params:
            if isinstance(p, NumericParam) and p.name in values:
                p.record(values[p.name], delta)
    return redundant


def narrow_branch(tree: OptionTree, config: Config) -> list[str]:
    """Narrow each numeric parameter sampled for `config`; returns the names narrowed."""
    narrowed = []
    pre, learner = tree.branch_of(config)
    for node, values in ((pre, config.preproc_params), (learner, config.learner_params)):
        for p in node.params:
            if isinstance(p, NumericParam) and p.name in values and p.narrow():
                narrowed.append(f"{node.name}.{p.name}")
    return narrowed


def _param_from_def(d: ParamDef) -> Param:
    if d.kind == "choice":
        return CategoricalParam(d.name, d.choices, d.active_when)
    return NumericParam(d.name, float(d.lo), float(d.hi), d.kind == "int", d.active_when)


def default_option_tree() -> OptionTree:
    """The tabular search space: every pre-processor crossed with every learner."""
    preprocessors = [
        OptionNode(kind.value, NodeRole.PREPROCESSOR, kind.value,
                   [_param_from_def(d) for d in defs if d.tunable])
        for kind, defs in PREPROC_PARAMS.items()
        if kind is not PreprocKind.NONE
    ]
    learners = [
        OptionNode(kind.value, NodeRole.LEARNER, kind.value,
                   [_param_from_def(d) for d in defs if d.tunable])
        for kind, defs in LEARNER_PARAMS.items()
    ]
    return OptionTree(preprocessors=preprocessors, learners=learners)


class ParamModel(BaseModel):
    name: str
    type: Literal["int", "real", "choice"]
    lo: Optional[float] = None
    hi: Optional[float] = None
    choices: Optional[list[Any]] = None
    active_when: Optional[tuple[str, Any]] = None


class NodeModel(BaseModel):
    name: str
    kind: str
    params: list[ParamModel] = Field(default_factory=list)


class OptionSpaceModel(BaseModel):
    preprocessors: list[NodeModel]
    learners: list[NodeModel]


_KNOWN_PARAMS: dict[NodeRole, dict[str, set[str]]] = {
    NodeRole.PREPROCESSOR: {k.value: {d.name for d in v} for k, v in PREPROC_PARAMS.items()},
    NodeRole.LEARNER: {k.value: {d.name for d in v} for k, v in LEARNER_PARAMS.items()},
}


def _node_from_model(model: NodeModel, role: NodeRole) -> OptionNode:
    known = _KNOWN_PARAMS[role].get(model.kind)
    params: list[Param] = []
    for pm in model.params:
        if known is not None and pm.name not in known:
            raise OptionSpaceError(f"{model.name}: '{pm.name}' is not a {model.kind} parameter")
        if pm.type == "choice":
            if not pm.choices:
                raise OptionSpaceError(f"{model.name}.{pm.name}: choice parameter needs choices")
            params.append(CategoricalParam(pm.name, tuple(pm.choices), pm.active_when))
        else:
            if pm.lo is None or pm.hi is None:
                raise OptionSpaceError(f"{model.name}.{pm.name}: numeric parameter needs lo and hi")
            params.append(NumericParam(pm.name, pm.lo, pm.hi, pm.type == "int", pm.active_when))
    return OptionNode(model.name, role, model.kind, params)


def option_tree_from_dict(data: Mapping[str, Any]) -> OptionTree:
    try:
        model = OptionSpaceModel.model_validate(data)
    except PydanticValidationError as e:
        raise OptionSpaceError(f"invalid option space: {e}")
    return OptionTree(
        preprocessors=[_node_from_model(n, NodeRole.PREPROCESSOR) for n in model.preprocessors],
        learners=[_node_from_model(n, NodeRole.LEARNER) for n in model.learners],
    )


def option_tree_to_dict(tree: OptionTree) -> dict[str, Any]:
    def node_dict(node: OptionNode) -> dict[str, Any]:
        params = []
        for p in node.params:
            entry: dict[str, Any] = {"name": p.name}
            if isinstance(p, NumericParam):
                entry.update(type="int" if p.integer else "real", lo=p.declared_lo, hi=p.declared_hi)
            else:
                entry.update(type="choice", choices=list(p.choices))
            if p.active_when is not None:
                entry["active_when"] = list(p.active_when)
            params.append(entry)
        return {"name": node.name, "kind": node.kind, "params": params}

    return {
        "preprocessors": [node_dict(n) for n in tree.preprocessors],
        "learners": [node_dict(n) for n in tree.learners],
    }


def load_option_space(path: str | Path) -> OptionTree:
    path = Path(path)
    if not path.is_file():
        raise OptionSpaceError(f"option space file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise OptionSpaceError(f"cannot parse {path}: {e}")
    tree = option_tree_from_dict(data)
    logger.info(
        "Option space loaded",
        extra={"path": str(path), "preprocessors": len(tree.preprocessors),
               "learners": len(tree.learners)},
    )
    return tree


def dump_option_space(tree: OptionTree, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(option_tree_to_dict(tree), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path
