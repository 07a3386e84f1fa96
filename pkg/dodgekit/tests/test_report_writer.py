import json

import numpy as np
import pytest

from dodgekit.logic.intrinsic_dim import intrinsic_dimension
from dodgekit.logic.metrics import GoalVector
from dodgekit.logic.optimizers import OptimizerError, random_search
from dodgekit.logic.synthetic import embedded_segment
from dodgekit.services.report_writer import (
    ReportError,
    format_summary,
    read_study_csv,
    read_trials_jsonl,
    write_intrinsic_report,
    write_study_csv,
    write_summary,
    write_trials_jsonl,
)
from dodgekit.services.rigs import RepeatResult, assemble


def flat(config):
    return GoalVector({"d2h": 0.5})


def by_learner(config):
    return GoalVector({"d2h": 0.2 if config.learner_node == "knn" else 0.7})


def records(scores_a, scores_b, dataset="ant"):
    out = [RepeatResult(dataset, "dodge", i, "d2h", s, 30, config={"learner_node": "knn"})
           for i, s in enumerate(scores_a)]
    out += [RepeatResult(dataset, "tpe", i, "d2h", s, 30) for i, s in enumerate(scores_b)]
    return out


class TestTrialsJsonl:
    """Tests for the JSON-lines trial report."""

    def test_one_line_per_trial_plus_header(self, two_branch_tree, tmp_path):
        report = random_search(two_branch_tree, by_learner, budget=6, seed=1)

        path = write_trials_jsonl(report, tmp_path / "out" / "trials.jsonl")

        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 7
        assert json.loads(lines[0])["record"] == "header"
        assert read_trials_jsonl(path).trials == report.trials

    def test_missing_report(self, tmp_path):
        with pytest.raises(ReportError, match="not found"):
            read_trials_jsonl(tmp_path / "absent.jsonl")

    def test_corrupt_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"record": "header"}\n{oops\n', encoding="utf-8")

        with pytest.raises(ReportError, match="bad.jsonl:2"):
            read_trials_jsonl(path)

    def test_truncated_report(self, one_by_one_tree, tmp_path):
        report = random_search(one_by_one_tree, flat, budget=3)
        path = write_trials_jsonl(report, tmp_path / "t.jsonl")
        path.write_text("\n".join(path.read_text().splitlines()[:2]) + "\n")

        with pytest.raises(OptimizerError, match="header declares 3"):
            read_trials_jsonl(path)


class TestStudyCsv:
    """Tests for study result tables."""

    def test_round_trip(self, tmp_path):
        original = records([0.1, 0.2], [0.3, 0.4])
        original[1] = RepeatResult("ant", "dodge", 1, "d2h", 1.0, 30, failed=True,
                                   diagnostic="DatasetError: too small")

        loaded = read_study_csv(write_study_csv(original, tmp_path / "results.csv"))

        assert loaded == original

    def test_scores_parse_back_exactly(self, tmp_path):
        scores = np.random.default_rng(5).uniform(0, 1, 100).tolist()
        original = records(scores, scores[::-1])

        loaded = read_study_csv(write_study_csv(original, tmp_path / "results.csv"))

        assert [r.score for r in loaded] == [r.score for r in original]

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "results.csv"
        path.write_text("dataset,optimizer\nant,dodge\n", encoding="utf-8")

        with pytest.raises(ReportError, match="lacks columns"):
            read_study_csv(path)


class TestSummary:
    """Tests for the plain-text study summary."""

    def test_contents(self):
        result = assemble(records([0.1] * 20, [0.6] * 20), seed=0, repeats=20)

        text = format_summary(result)

        assert text.startswith("rig=rig1 repeats=20 seed=0\n")
        assert "ant: dodge vs tpe -> dodge (a12=1.000, significant=true)" in text
        assert "0.100" in text and "0.600" in text

    def test_identical_on_rewrite(self, tmp_path):
        result = assemble(records([0.1, 0.3, 0.2], [0.2, 0.2, 0.5]), seed=4, repeats=3)

        first = write_summary(result, tmp_path / "a.txt").read_bytes()
        second = write_summary(result, tmp_path / "b.txt").read_bytes()

        assert first == second


class TestIntrinsicReport:
    """Tests for intrinsic-dimension report files."""

    def test_json_and_loglog_table(self, tmp_path):
        report = intrinsic_dimension(embedded_segment(200, 5, seed=0))

        json_path, table_path = write_intrinsic_report(report, tmp_path / "id.json")

        body = json.loads(json_path.read_text(encoding="utf-8"))
        assert body["recommendation"] == "recommended"
        assert body["dimension"] == pytest.approx(report.dimension)
        assert table_path.name == "id.loglog.csv"
        rows = table_path.read_text(encoding="utf-8").splitlines()
        assert rows[0] == "ln_r,ln_c"
        assert len(rows) - 1 == sum(report.used)
