import json

import numpy as np
import pytest

from dodgekit.core.config import Settings
from dodgekit.logic.dataset_io import Dataset, write_csv
from dodgekit.logic.option_space import dump_option_space
from dodgekit.logic.synthetic import redundant_classification
from dodgekit.services.rigs import (
    DatasetSpec,
    OptimizerSpec,
    RigKind,
    StudySpec,
    StudySpecError,
    assemble,
    load_study_spec,
    median_table,
    rig1_split,
    run_repeat,
    run_study,
)


def balanced(n_rows: int, n_positive: int) -> Dataset:
    rng = np.random.default_rng(0)
    target = np.zeros(n_rows, dtype=bool)
    target[:n_positive] = True
    return Dataset(features=rng.normal(size=(n_rows, 2)), target=target, names=("a", "b"),
                   name="balanced")


def random_opt(name: str, budget: int = 2) -> OptimizerSpec:
    return OptimizerSpec(name=name, kind="random", budget=budget)


@pytest.fixture
def study_spec(separable_data, csv_of, two_branch_tree, tmp_path):
    space = dump_option_space(two_branch_tree, tmp_path / "space.json")

    def _spec(optimizers, repeats=3, **kwargs) -> StudySpec:
        dataset = DatasetSpec(name="separable", path=csv_of(separable_data), target="target",
                              positive_label="yes", effort="loc")
        return StudySpec(datasets=[dataset], optimizers=optimizers, repeats=repeats,
                         option_space=space, **kwargs)

    return _spec


class TestRig1Split:
    """Tests for repeated stratified train/test splits."""

    def test_sizes_and_strata(self):
        train, test = rig1_split(balanced(100, 40), 0, seed=1)

        assert (train.n_rows, test.n_rows) == (80, 20)
        assert abs(test.n_positive - 8) <= 1

    def test_partition_is_disjoint_and_complete(self):
        train, test = rig1_split(balanced(100, 40), 3, seed=1)

        assert set(train.row_ids).isdisjoint(test.row_ids)
        assert set(train.row_ids) | set(test.row_ids) == set(range(100))

    def test_repeats_differ_but_reproduce(self):
        data = balanced(100, 40)

        first = rig1_split(data, 0, seed=1)[1].row_ids
        again = rig1_split(data, 0, seed=1)[1].row_ids
        other = rig1_split(data, 1, seed=1)[1].row_ids

        assert list(first) == list(again)
        assert list(first) != list(other)

    def test_too_few_rows(self):
        with pytest.raises(ValueError, match=">= 10 rows"):
            rig1_split(balanced(9, 4), 0, seed=0)


class TestRunRepeat:
    """Tests for single (dataset, optimizer, repeat) units."""

    def test_rig0_tests_on_latest_release(self, versioned_data, two_branch_tree):
        views = []
        spec = DatasetSpec(name="poi", path="poi.csv", target="target", positive_label="yes",
                           effort="loc", version="version")

        result = run_repeat(versioned_data, random_opt("random"), 0, spec, RigKind.RIG0,
                            seed=2, tree=two_branch_tree, observer=views.append)

        assert result.failed is False
        assert views[0].test_ids == frozenset(range(60, 80))
        assert all(v.tune_ids.isdisjoint(v.test_ids) and v.validation_ids.isdisjoint(v.test_ids)
                   for v in views)
        assert all(v.test_ids == views[0].test_ids for v in views)

    def test_objective_never_sees_test_rows(self, separable_data, two_branch_tree):
        views = []
        spec = DatasetSpec(name="separable", path="s.csv", target="target", positive_label="yes")

        run_repeat(separable_data, random_opt("random", budget=4), 1, spec,
                   tree=two_branch_tree, observer=views.append)

        assert len(views) == 4
        for v in views:
            assert v.tune_ids.isdisjoint(v.test_ids)
            assert v.validation_ids.isdisjoint(v.test_ids)
            assert v.tune_ids.isdisjoint(v.validation_ids)

    def test_score_in_unit_interval(self, separable_data, two_branch_tree):
        spec = DatasetSpec(name="separable", path="s.csv", target="target", positive_label="yes",
                           effort="loc", goal="popt20")

        result = run_repeat(separable_data, OptimizerSpec(name="dodge", kind="dodge", n1=3, n2=3),
                            0, spec, tree=two_branch_tree)

        assert result.goal == "popt20"
        assert 0.0 <= result.score <= 1.0
        assert result.evaluations == 6
        assert result.config["learner_node"] in ("knn", "tree")

    def test_failure_scores_worst(self, two_branch_tree):
        spec = DatasetSpec(name="balanced", path="b.csv", target="target", positive_label="yes")

        result = run_repeat(balanced(9, 4), random_opt("random"), 0, spec, tree=two_branch_tree)

        assert result.failed is True
        assert result.score == 1.0
        assert "DatasetError" in result.diagnostic


class TestRunStudy:
    """Tests for whole studies."""

    def test_record_count_and_ties(self, study_spec):
        spec = study_spec([random_opt("left"), random_opt("right")], repeats=25)

        result = run_study(spec, n_jobs=1)

        assert len(result.records) == 50
        assert result.summary == {"left": (0, 1, 0), "right": (0, 1, 0)}
        assert result.verdicts["separable"][0].winner == "tie"

    def test_deterministic(self, study_spec):
        spec = study_spec([random_opt("random"), OptimizerSpec(name="dodge", kind="dodge",
                                                               n1=2, n2=2)])

        a = run_study(spec, n_jobs=1)
        b = run_study(spec, n_jobs=1)

        assert a.records == b.records
        assert a.summary == b.summary

    def test_worker_count_does_not_change_records(self, study_spec):
        spec = study_spec([random_opt("random")], repeats=2)

        assert run_study(spec, n_jobs=1).records == run_study(spec, n_jobs=2).records

    def test_observer_sees_no_leakage(self, study_spec):
        spec = study_spec([random_opt("random")], repeats=3)
        leaks = []

        def observer(view):
            leaks.append(bool(view.tune_ids & view.test_ids or view.validation_ids & view.test_ids))

        run_study(spec, observer=observer)

        assert len(leaks) == 6
        assert not any(leaks)

    def test_records_keyed_by_spec_name(self, separable_data, two_branch_tree, tmp_path):
        space = dump_option_space(two_branch_tree, tmp_path / "space.json")
        datasets = [
            DatasetSpec(name=name, path=write_csv(separable_data, tmp_path / folder / "data.csv"),
                        target="target", positive_label="yes")
            for name, folder in (("alpha", "a"), ("beta", "b"))
        ]
        spec = StudySpec(datasets=datasets, optimizers=[random_opt("random")], repeats=3,
                         option_space=space)

        result = run_study(spec, n_jobs=1)

        assert result.dataset_names == ["alpha", "beta"]
        assert {key: len(s.values) for key, s in result.samples.items()} == \
            {("alpha", "random"): 3, ("beta", "random"): 3}

    def test_assemble_orders_records(self, study_spec):
        result = run_study(study_spec([random_opt("b"), random_opt("a")], repeats=2), n_jobs=1)

        reassembled = assemble(list(reversed(result.records)), seed=0)

        assert [(r.optimizer, r.repeat) for r in reassembled.records] == \
            [("a", 0), ("a", 1), ("b", 0), ("b", 1)]
        assert set(median_table(reassembled)["separable"]) == {"a", "b"}


class TestLoadStudySpec:
    """Tests for reading study specifications."""

    def write_spec(self, tmp_path, body):
        path = tmp_path / "study.json"
        path.write_text(json.dumps(body), encoding="utf-8")
        return path

    def body(self, path="separable.csv", **extra):
        return {
            "datasets": [{"name": "separable", "path": path, "target": "target",
                          "positive_label": "yes"}],
            "optimizers": [{"name": "dodge", "kind": "dodge"}],
            **extra,
        }

    def test_relative_paths_resolve_against_spec(self, tmp_path, separable_data, csv_of):
        csv_of(separable_data)

        spec = load_study_spec(self.write_spec(tmp_path, self.body()))

        assert spec.datasets[0].path == tmp_path / "separable.csv"
        assert spec.repeats == 25
        assert spec.rig is RigKind.RIG1

    def test_repeats_default_follows_settings(self, tmp_path, separable_data, csv_of, mocker,
                                              monkeypatch):
        csv_of(separable_data)
        monkeypatch.setenv("DODGEKIT_REPEATS", "7")
        mocker.patch("dodgekit.services.rigs.settings", Settings(_env_file=None))

        spec = load_study_spec(self.write_spec(tmp_path, self.body()))

        assert spec.repeats == 7

    def test_missing_dataset_file(self, tmp_path):
        with pytest.raises(StudySpecError, match="file not found"):
            load_study_spec(self.write_spec(tmp_path, self.body("absent.csv")))

    def test_missing_spec_file(self, tmp_path):
        with pytest.raises(StudySpecError, match="not found"):
            load_study_spec(tmp_path / "nope.json")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "study.json"
        path.write_text("{not json", encoding="utf-8")

        with pytest.raises(StudySpecError, match="cannot parse"):
            load_study_spec(path)

    def test_unknown_optimizer_kind(self, tmp_path, separable_data, csv_of):
        csv_of(separable_data)
        body = self.body()
        body["optimizers"] = [{"name": "hb", "kind": "hyperband"}]

        with pytest.raises(StudySpecError, match="invalid study spec"):
            load_study_spec(self.write_spec(tmp_path, body))

    def test_rig0_needs_versions(self, tmp_path, separable_data, csv_of):
        csv_of(separable_data)

        with pytest.raises(StudySpecError, match="version column"):
            load_study_spec(self.write_spec(tmp_path, self.body(rig="rig0")))

    def test_popt20_needs_effort(self):
        with pytest.raises(ValueError, match="effort"):
            DatasetSpec(name="d", path="d.csv", target="t", positive_label="y", goal="popt20")

    def test_duplicate_optimizer_names(self, tmp_path, separable_data, csv_of):
        csv_of(separable_data)
        body = self.body()
        body["optimizers"] = [{"name": "x", "kind": "tpe"}, {"name": "x", "kind": "random"}]

        with pytest.raises(StudySpecError, match="unique"):
            load_study_spec(self.write_spec(tmp_path, body))


class TestBudgets:
    """Tests for optimizer budget resolution."""

    def test_dodge_defaults(self):
        budget = OptimizerSpec(name="d", kind="dodge").resolved_budget()

        assert (budget.n1, budget.n2) == (15, 15)

    def test_dodge_flat_budget_splits(self):
        budget = OptimizerSpec(name="d", kind="dodge", budget=9).resolved_budget()

        assert (budget.n1, budget.n2) == (4, 5)

    def test_baselines_get_dodge_total(self):
        assert OptimizerSpec(name="t", kind="tpe").resolved_budget() == 30


class TestLowDimensionalSanity:
    """DODGE against random search on a redundant low-dimensional family."""

    @pytest.mark.slow
    @pytest.mark.integration
    def test_dodge_median_not_worse_than_random(self):
        spec = DatasetSpec(name="redundant", path="redundant.csv", target="target",
                           positive_label="yes")
        dodge_scores, random_scores = [], []
        for seed in range(20):
            data = redundant_classification(n_rows=500, n_informative=3, n_copies=20, seed=seed)
            dodge_scores.append(run_repeat(data, OptimizerSpec(name="dodge", kind="dodge"), 0,
                                           spec, seed=seed).score)
            random_scores.append(run_repeat(data, random_opt("random", budget=30), 0,
                                            spec, seed=seed).score)

        # equal budgets; a small margin absorbs split noise at 20 seeds
        assert np.median(dodge_scores) <= np.median(random_scores) + 0.02
