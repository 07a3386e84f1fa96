import json

import numpy as np
import pytest

from dodgekit.logic.dataset_io import Dataset
from dodgekit.logic.option_space import dump_option_space
from dodgekit.logic.synthetic import embedded_segment
from dodgekit.main import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, build_parser, main
from dodgekit.services.report_writer import write_study_csv
from dodgekit.services.rigs import RepeatResult

QUIET = ["--log-level", "ERROR"]


@pytest.fixture
def separable_csv(separable_data, csv_of):
    return csv_of(separable_data)


@pytest.fixture
def space(two_branch_tree, tmp_path):
    return dump_option_space(two_branch_tree, tmp_path / "space.json")


def optimize_args(data_path, out, *extra):
    return QUIET + ["optimize", "--data", str(data_path), "--target", "target",
                    "--positive-label", "yes", "--out", str(out), *extra]


def trial_lines(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()
            if json.loads(line)["record"] == "trial"]


class TestParser:
    """Tests for argument parsing."""

    def test_subcommand_required(self, capsys):
        assert main(QUIET) == EXIT_USAGE

    def test_unknown_optimizer(self, separable_csv, tmp_path, capsys):
        code = main(optimize_args(separable_csv, tmp_path / "t.jsonl", "--optimizer", "hyperband"))

        assert code == EXIT_USAGE
        assert "invalid choice" in capsys.readouterr().err

    def test_log_level_case_insensitive(self):
        args = build_parser().parse_args(["--log-level", "debug", "compare", "--results", "r.csv",
                                          "--a", "x", "--b", "y"])

        assert args.log_level == "DEBUG"


class TestOptimize:
    """Tests for the optimize subcommand."""

    def test_writes_one_trial_per_evaluation(self, separable_csv, space, tmp_path, capsys):
        out = tmp_path / "trials.jsonl"

        code = main(optimize_args(separable_csv, out, "--optimizer", "dodge", "--budget", "30",
                                  "--option-space", str(space)))

        assert code == EXIT_OK
        assert len(trial_lines(out)) == 30
        assert "best d2h" in capsys.readouterr().out

    def test_same_seed_same_bytes(self, separable_csv, space, tmp_path, capsys):
        outputs = []
        for name in ("a.jsonl", "b.jsonl"):
            out = tmp_path / name
            main(optimize_args(separable_csv, out, "--optimizer", "tpe", "--budget", "12",
                               "--seed", "7", "--option-space", str(space)))
            outputs.append(out.read_bytes())

        assert outputs[0] == outputs[1]

    def test_popt20_with_effort(self, separable_csv, space, tmp_path, capsys):
        out = tmp_path / "t.jsonl"

        code = main(optimize_args(separable_csv, out, "--optimizer", "random", "--budget", "4",
                                  "--effort", "loc", "--goal", "popt20",
                                  "--option-space", str(space)))

        assert code == EXIT_OK
        assert set(trial_lines(out)[0]["goals"]) == {"d2h", "popt20"}

    def test_popt20_without_effort(self, separable_csv, tmp_path, capsys):
        code = main(optimize_args(separable_csv, tmp_path / "t.jsonl", "--optimizer", "dodge",
                                  "--goal", "popt20"))

        assert code == EXIT_USAGE
        assert "needs --effort" in capsys.readouterr().err

    def test_zero_budget(self, separable_csv, tmp_path, capsys):
        code = main(optimize_args(separable_csv, tmp_path / "t.jsonl", "--optimizer", "tpe",
                                  "--budget", "0"))

        assert code == EXIT_USAGE

    def test_missing_data_file(self, tmp_path, capsys):
        code = main(optimize_args(tmp_path / "absent.csv", tmp_path / "t.jsonl",
                                  "--optimizer", "random"))

        assert code == EXIT_RUNTIME
        assert capsys.readouterr().err.startswith("dodgekit optimize: DatasetError")

    def test_bad_option_space(self, separable_csv, tmp_path, capsys):
        code = main(optimize_args(separable_csv, tmp_path / "t.jsonl", "--optimizer", "random",
                                  "--option-space", str(tmp_path / "absent.json")))

        assert code == EXIT_USAGE


class TestIntrinsic:
    """Tests for the intrinsic subcommand."""

    def test_segment_is_recommended(self, csv_of, tmp_path, capsys):
        rows = embedded_segment(300, 6, seed=1)
        data = Dataset(features=rows, target=np.arange(300) % 2 == 0,
                       names=tuple(f"x{i}" for i in range(6)), name="segment")
        report = tmp_path / "id.json"

        code = main(QUIET + ["intrinsic", "--data", str(csv_of(data)), "--target", "target",
                             "--positive-label", "yes", "--out", str(report)])

        assert code == EXIT_OK
        assert "simple optimizer (DODGE) recommended" in capsys.readouterr().out
        assert json.loads(report.read_text())["recommendation"] == "recommended"
        assert (tmp_path / "id.loglog.csv").is_file()


class TestStudy:
    """Tests for the study subcommand."""

    def write_spec(self, tmp_path, dataset_path, space, repeats=25):
        spec = {
            "datasets": [{"name": "separable", "path": str(dataset_path), "target": "target",
                          "positive_label": "yes"}],
            "optimizers": [{"name": "dodge", "kind": "dodge", "n1": 1, "n2": 1},
                           {"name": "random", "kind": "random", "budget": 2}],
            "repeats": repeats,
            "option_space": str(space),
        }
        path = tmp_path / "study.json"
        path.write_text(json.dumps(spec), encoding="utf-8")
        return path

    def test_results_and_summary(self, separable_csv, space, tmp_path, capsys):
        spec = self.write_spec(tmp_path, separable_csv.name, space.name)

        code = main(QUIET + ["study", "--spec", str(spec), "--out", str(tmp_path / "out")])

        assert code == EXIT_OK
        rows = (tmp_path / "out" / "results.csv").read_text(encoding="utf-8").splitlines()
        assert len(rows) == 1 + 2 * 25
        assert (tmp_path / "out" / "summary.txt").read_text().startswith("rig=rig1 repeats=25")

    def test_rerun_gives_identical_summary(self, separable_csv, space, tmp_path, capsys):
        spec = self.write_spec(tmp_path, separable_csv, space, repeats=3)

        main(QUIET + ["study", "--spec", str(spec), "--out", str(tmp_path / "one")])
        main(QUIET + ["study", "--spec", str(spec), "--out", str(tmp_path / "two")])

        assert (tmp_path / "one" / "summary.txt").read_bytes() == \
            (tmp_path / "two" / "summary.txt").read_bytes()
        assert (tmp_path / "one" / "results.csv").read_bytes() == \
            (tmp_path / "two" / "results.csv").read_bytes()

    def test_missing_dataset(self, space, tmp_path, capsys):
        spec = self.write_spec(tmp_path, tmp_path / "absent.csv", space)

        code = main(QUIET + ["study", "--spec", str(spec), "--out", str(tmp_path / "out")])

        assert code == EXIT_USAGE
        assert "file not found" in capsys.readouterr().err


class TestCompare:
    """Tests for the compare subcommand."""

    @pytest.fixture
    def results(self, tmp_path):
        records = []
        for dataset, (a, b) in {"ant": (0.1, 0.6), "camel": (0.4, 0.4)}.items():
            records += [RepeatResult(dataset, "dodge", i, "d2h", a, 30) for i in range(20)]
            records += [RepeatResult(dataset, "tpe", i, "d2h", b, 30) for i in range(20)]
        return write_study_csv(records, tmp_path / "results.csv")

    def test_verdicts_and_tally(self, results, capsys):
        code = main(QUIET + ["compare", "--results", str(results), "--a", "dodge", "--b", "tpe"])

        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert "ant: dodge (a12=1.000, significant=true)" in out
        assert "camel: tie (a12=0.500, significant=false)" in out
        assert "dodge vs tpe: win=1 tie=1 loss=0" in out

    def test_unknown_optimizer_name(self, results, capsys):
        code = main(QUIET + ["compare", "--results", str(results), "--a", "dodge", "--b", "bohb"])

        assert code == EXIT_USAGE
        assert "'bohb'" in capsys.readouterr().err
