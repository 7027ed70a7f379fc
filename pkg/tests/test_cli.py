"""End-to-end tests for the command-line interface."""

import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner

from deepconv.cli import _read_data_csv, _write_data_csv, main
from deepconv.dcnn import deserialize, forward_batch
from deepconv.deepen import Dataset
from deepconv.errors import ValidationError
from deepconv.harness import SimSpec, simulate
from deepconv.trainer import init_net
from deepconv.dcnn import serialize

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _combined(result) -> str:
    """stdout plus stderr regardless of how this click version splits them."""
    out = result.output
    try:
        out += result.stderr
    except (ValueError, AttributeError):
        pass
    return out


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def data_files(tmp_path_factory):
    base = tmp_path_factory.mktemp("data")
    train, test = simulate(SimSpec(d=4, n=10, test_n=30, seed=3))
    train_path = base / "train.csv"
    test_path = base / "test.csv"
    _write_data_csv(train_path, train)
    _write_data_csv(test_path, test)
    return train_path, test_path


@pytest.fixture(scope="module")
def teacher_file(tmp_path_factory):
    base = tmp_path_factory.mktemp("net")
    teacher = init_net(4, 2, 2, seed=1)
    path = base / "teacher.json"
    path.write_text(serialize(teacher) + "\n", encoding="utf-8")
    return path


class TestDataCsvRoundtrip:
    def test_write_then_read_preserves_values(self, tmp_path):
        train, _ = simulate(SimSpec(d=3, n=8, test_n=5, seed=0))
        path = tmp_path / "d.csv"
        _write_data_csv(path, train)
        back = _read_data_csv(path)
        np.testing.assert_array_equal(back.xs, train.xs)
        np.testing.assert_array_equal(back.ys, train.ys)
        assert back.M == 2.0  # max(2, max|y|) with labels inside [-2, 2]

    def test_label_bound_override(self, tmp_path):
        path = tmp_path / "d.csv"
        _write_data_csv(path, Dataset([[1.0, 2.0]], [0.5], 2.0))
        back = _read_data_csv(path, label_bound=7.0)
        assert back.M == 7.0

    def test_header_is_required(self, tmp_path):
        path = tmp_path / "noheader.csv"
        path.write_text("1.0,2.0,3.0\n4.0,5.0,6.0\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="header"):
            _read_data_csv(path)

    def test_ragged_rows_are_rejected(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("x1,x2,y\n1.0,2.0,0.5\n1.0,2.0\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="line 3"):
            _read_data_csv(path)

    def test_non_numeric_cell_is_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x1,x2,y\n1.0,oops,0.5\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="line 2"):
            _read_data_csv(path)

    def test_missing_file_is_validation_error(self, tmp_path):
        with pytest.raises(ValidationError, match="cannot read"):
            _read_data_csv(tmp_path / "absent.csv")


class TestGroup:
    def test_help_lists_all_subcommands(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        for name in ("simulate", "train", "deepen", "bounds", "experiment", "pipeline"):
            assert name in result.output

    def test_every_subcommand_accepts_seed_and_out(self, runner):
        for name in ("simulate", "train", "deepen", "bounds", "experiment", "pipeline"):
            result = runner.invoke(main, [name, "--help"])
            assert result.exit_code == 0
            assert "--seed" in result.output, name
            assert "--out" in result.output, name


class TestSimulateCommand:
    def test_writes_train_and_test(self, runner, tmp_path):
        out = tmp_path / "train.csv"
        test_out = tmp_path / "test.csv"
        result = runner.invoke(
            main,
            [
                "simulate",
                "--d", "3",
                "--n", "7",
                "--test-n", "5",
                "--seed", "2",
                "--out", str(out),
                "--test-out", str(test_out),
            ],
        )
        assert result.exit_code == 0
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["x1", "x2", "x3", "y"]
        assert len(rows) == 1 + 7
        assert len(list(csv.reader(test_out.open()))) == 1 + 5

    def test_matches_library_simulation(self, runner, tmp_path):
        out = tmp_path / "train.csv"
        result = runner.invoke(
            main,
            ["simulate", "--d", "3", "--n", "7", "--seed", "2", "--out", str(out)],
        )
        assert result.exit_code == 0
        train, _ = simulate(SimSpec(d=3, n=7, seed=2))
        back = _read_data_csv(out)
        np.testing.assert_array_equal(back.xs, train.xs)
        np.testing.assert_array_equal(back.ys, train.ys)

    def test_validation_error_exits_2(self, runner, tmp_path):
        result = runner.invoke(
            main, ["simulate", "--d", "0", "--out", str(tmp_path / "x.csv")]
        )
        assert result.exit_code == 2
        assert "validation error" in _combined(result)


class TestTrainCommand:
    def test_full_run_writes_net_and_report(self, runner, data_files, tmp_path):
        train_path, test_path = data_files
        net_path = tmp_path / "net.json"
        report_path = tmp_path / "report.csv"
        result = runner.invoke(
            main,
            [
                "train",
                "--data", str(train_path),
                "--test", str(test_path),
                "--depth", "2",
                "--filter-len", "2",
                "--epochs", "15",
                "--seed", "1",
                "--out-net", str(net_path),
                "--out-report", str(report_path),
            ],
        )
        assert result.exit_code == 0, _combined(result)
        assert "test RMSE" in result.output
        net = deserialize(net_path.read_text(encoding="utf-8"))
        assert net.depth == 2 and net.input_dim == 4
        rows = list(csv.reader(report_path.open()))
        assert rows[0] == ["epoch", "train_mse"]
        assert len(rows) == 1 + 15
        assert [r[0] for r in rows[1:]] == [str(i) for i in range(1, 16)]
        png = report_path.with_suffix(".png")
        assert png.read_bytes()[:8] == PNG_MAGIC

    def test_out_is_an_alias_for_out_net(self, runner, data_files, tmp_path):
        train_path, test_path = data_files
        net_path = tmp_path / "alias.json"
        result = runner.invoke(
            main,
            [
                "train",
                "--data", str(train_path),
                "--test", str(test_path),
                "--depth", "1",
                "--epochs", "2",
                "--out", str(net_path),
            ],
        )
        assert result.exit_code == 0, _combined(result)
        assert json.loads(net_path.read_text(encoding="utf-8"))["input_dim"] == 4

    def test_conflicting_out_flags_exit_2(self, runner, data_files, tmp_path):
        train_path, test_path = data_files
        result = runner.invoke(
            main,
            [
                "train",
                "--data", str(train_path),
                "--test", str(test_path),
                "--depth", "1",
                "--epochs", "2",
                "--out", str(tmp_path / "a.json"),
                "--out-net", str(tmp_path / "b.json"),
            ],
        )
        assert result.exit_code == 2
        assert "disagree" in _combined(result)

    def test_divergence_exits_3(self, runner, data_files, tmp_path):
        train_path, test_path = data_files
        result = runner.invoke(
            main,
            [
                "train",
                "--data", str(train_path),
                "--test", str(test_path),
                "--depth", "2",
                "--epochs", "10",
                "--lr", "1e200",
            ],
        )
        assert result.exit_code == 3
        assert "numerical failure" in _combined(result)
        assert "diverged" in _combined(result)

    def test_missing_data_file_exits_2(self, runner, tmp_path):
        result = runner.invoke(
            main,
            [
                "train",
                "--data", str(tmp_path / "absent.csv"),
                "--test", str(tmp_path / "absent.csv"),
                "--depth", "1",
            ],
        )
        assert result.exit_code == 2


class TestDeepenCommand:
    def test_student_interpolates(self, runner, data_files, teacher_file, tmp_path):
        train_path, _ = data_files
        out = tmp_path / "student.json"
        result = runner.invoke(
            main,
            [
                "deepen",
                "--teacher", str(teacher_file),
                "--data", str(train_path),
                "--filter-len", "4",
                "--seed", "0",
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, _combined(result)
        assert "max interpolation residual" in result.output
        student = deserialize(out.read_text(encoding="utf-8"))
        data = _read_data_csv(train_path)
        resid = np.max(np.abs(forward_batch(student, data.xs) - data.ys))
        assert resid <= 1e-6

    def test_wrong_filter_len_exits_2(self, runner, data_files, teacher_file, tmp_path):
        train_path, _ = data_files
        result = runner.invoke(
            main,
            [
                "deepen",
                "--teacher", str(teacher_file),
                "--data", str(train_path),
                "--filter-len", "3",
                "--out", str(tmp_path / "s.json"),
            ],
        )
        assert result.exit_code == 2
        assert "validation error" in _combined(result)

    def test_missing_teacher_exits_2(self, runner, data_files, tmp_path):
        train_path, _ = data_files
        result = runner.invoke(
            main,
            [
                "deepen",
                "--teacher", str(tmp_path / "absent.json"),
                "--data", str(train_path),
                "--filter-len", "4",
                "--out", str(tmp_path / "s.json"),
            ],
        )
        assert result.exit_code == 2

    def test_corrupt_teacher_exits_2(self, runner, data_files, tmp_path):
        train_path, _ = data_files
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        result = runner.invoke(
            main,
            [
                "deepen",
                "--teacher", str(bad),
                "--data", str(train_path),
                "--filter-len", "4",
                "--out", str(tmp_path / "s.json"),
            ],
        )
        assert result.exit_code == 2


class TestBoundsCommand:
    def test_prints_all_rows(self, runner):
        result = runner.invoke(
            main, ["bounds", "--j", "2", "--s", "2", "--d", "2", "--n", "100"]
        )
        assert result.exit_code == 0
        for key in (
            "R",
            "pdim_general",
            "pdim_dcnn_explicit",
            "pdim_dcnn_c0",
            "rate_theorem2",
        ):
            assert key in result.output
        assert result.output.count("covering_log_eps_") == 6

    def test_out_writes_table_and_figure(self, runner, tmp_path):
        out = tmp_path / "bounds.csv"
        result = runner.invoke(
            main,
            ["bounds", "--j", "2", "--s", "2", "--d", "2", "--n", "100", "--out", str(out)],
        )
        assert result.exit_code == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "# deepconv-bounds-v1"
        assert lines[1] == "key,value"
        assert out.with_suffix(".png").read_bytes()[:8] == PNG_MAGIC

    def test_invalid_depth_exits_2(self, runner):
        result = runner.invoke(
            main, ["bounds", "--j", "1", "--s", "2", "--d", "2", "--n", "100"]
        )
        assert result.exit_code == 2

    def test_seed_is_accepted(self, runner):
        result = runner.invoke(
            main, ["bounds", "--j", "2", "--s", "2", "--d", "2", "--n", "100", "--seed", "9"]
        )
        assert result.exit_code == 0


class TestExperimentCommand:
    def test_sweep_writes_csv_and_figure(self, runner, tmp_path):
        out = tmp_path / "sweep.csv"
        args = [
            "experiment",
            "--d", "3",
            "--n-grid", "20,50",
            "--seeds", "0,1",
            "--epochs", "10",
            "--out", str(out),
        ]
        result = runner.invoke(main, args)
        assert result.exit_code == 0, _combined(result)
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "# deepconv-experiment-v1"
        assert len(lines) == 2 + 2 * 2 + 2  # header comment, header, runs, summaries
        assert out.with_suffix(".png").read_bytes()[:8] == PNG_MAGIC
        # byte-identical on repetition
        first = out.read_bytes()
        out2 = tmp_path / "sweep2.csv"
        args[-1] = str(out2)
        assert runner.invoke(main, args).exit_code == 0
        assert out2.read_bytes() == first

    def test_default_seed_list_comes_from_seed(self, runner, tmp_path):
        out = tmp_path / "sweep.csv"
        result = runner.invoke(
            main,
            [
                "experiment",
                "--d", "3",
                "--n-grid", "20",
                "--epochs", "2",
                "--seed", "7",
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, _combined(result)
        rows = [
            r
            for r in csv.reader(
                ln for ln in out.read_text(encoding="utf-8").splitlines()[1:]
            )
        ]
        seeds = [r[3] for r in rows[1:] if r[0] == "run"]
        assert seeds == ["7", "8", "9", "10", "11"]

    def test_bad_grid_exits_2(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["experiment", "--n-grid", "20,abc", "--out", str(tmp_path / "s.csv")],
        )
        assert result.exit_code == 2


class TestPipelineCommand:
    def test_writes_report_and_figure(self, runner, tmp_path):
        out = tmp_path / "pipe.csv"
        result = runner.invoke(
            main,
            [
                "pipeline",
                "--d", "4",
                "--n", "6",
                "--alpha", "0.33",
                "--teacher-epochs", "30",
                "--test-n", "80",
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, _combined(result)
        assert "max interpolation residual" in result.output
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "# deepconv-pipeline-v1"
        assert out.with_suffix(".png").read_bytes()[:8] == PNG_MAGIC

    def test_bad_alpha_exits_2(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["pipeline", "--alpha", "0.9", "--out", str(tmp_path / "p.csv")],
        )
        assert result.exit_code == 2
