"""Tests for the simulation / sweep / pipeline drivers."""

import math

import numpy as np
import pytest

from deepconv.errors import ValidationError
from deepconv.harness import (
    PipelineReport,
    SimSpec,
    experiment_csv,
    pipeline_csv,
    regression_values,
    render_experiment_figure,
    render_pipeline_figure,
    run_experiment,
    run_pipeline,
    simulate,
    write_experiment_csv,
    write_pipeline_csv,
)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@pytest.fixture(scope="module")
def sweep_rows():
    return run_experiment(3, [20, 50], [0, 1, 2], epochs=30)


@pytest.fixture(scope="module")
def tiny_pipeline():
    return run_pipeline(4, 6, 1.0 / 3.0, 0, teacher_epochs=50, test_n=200)


class TestSimSpec:
    def test_defaults(self):
        spec = SimSpec()
        assert spec.d == 10
        assert spec.n == 500
        assert spec.test_n == 2000
        assert spec.noise_sd == 0.1
        assert spec.domain_halfwidth == 10.0
        assert spec.seed == 0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"d": 0},
            {"d": -3},
            {"n": 0},
            {"test_n": 0},
            {"seed": -1},
            {"noise_sd": -0.5},
            {"noise_sd": float("nan")},
            {"domain_halfwidth": 0.0},
            {"domain_halfwidth": -1.0},
            {"d": True},
            {"seed": 2.5},
        ],
    )
    def test_rejects_bad_fields(self, kwargs):
        with pytest.raises(ValidationError):
            SimSpec(**kwargs)


class TestRegressionValues:
    def test_zero_input_gives_one(self):
        assert regression_values(np.zeros((1, 7)))[0] == 1.0

    def test_matches_scalar_formula(self, rng):
        X = rng.uniform(-3.0, 3.0, (40, 5))
        got = regression_values(X)
        for i in range(40):
            r = float(np.linalg.norm(X[i]) ** 4)
            assert got[i] == pytest.approx(math.sin(r) + math.cos(r), abs=1e-9)

    def test_range_is_within_label_bound(self, rng):
        X = rng.uniform(-10.0, 10.0, (500, 10))
        vals = regression_values(X)
        assert np.all(np.abs(vals) <= math.sqrt(2.0) + 1e-12)


class TestSimulate:
    def test_shapes_and_label_bound(self):
        train, test = simulate(SimSpec())
        assert train.xs.shape == (500, 10)
        assert train.ys.shape == (500,)
        assert test.xs.shape == (2000, 10)
        assert test.ys.shape == (2000,)
        assert train.M == 2.0 and test.M == 2.0

    def test_train_labels_clamped(self):
        train, _ = simulate(SimSpec(noise_sd=5.0, seed=3))
        assert np.all(np.abs(train.ys) <= 2.0)
        # with sd this large some labels must actually hit the clamp
        assert np.any(np.abs(train.ys) == 2.0)

    def test_test_labels_are_noiseless(self):
        _, test = simulate(SimSpec(seed=11))
        np.testing.assert_array_equal(test.ys, regression_values(test.xs))

    def test_zero_noise_train_labels_are_noiseless(self):
        train, _ = simulate(SimSpec(noise_sd=0.0, seed=5))
        np.testing.assert_array_equal(train.ys, regression_values(train.xs))

    def test_deterministic(self):
        a_train, a_test = simulate(SimSpec(seed=9))
        b_train, b_test = simulate(SimSpec(seed=9))
        np.testing.assert_array_equal(a_train.xs, b_train.xs)
        np.testing.assert_array_equal(a_train.ys, b_train.ys)
        np.testing.assert_array_equal(a_test.xs, b_test.xs)
        np.testing.assert_array_equal(a_test.ys, b_test.ys)

    def test_seed_changes_data(self):
        a_train, _ = simulate(SimSpec(seed=0))
        b_train, _ = simulate(SimSpec(seed=1))
        assert not np.array_equal(a_train.xs, b_train.xs)

    def test_inputs_fill_the_domain(self):
        train, _ = simulate(SimSpec(domain_halfwidth=4.0, seed=2))
        assert np.max(np.abs(train.xs)) <= 4.0
        assert np.max(np.abs(train.xs)) > 3.5

    def test_rejects_non_spec(self):
        with pytest.raises(ValidationError, match="SimSpec"):
            simulate({"d": 3})


class TestRunExperiment:
    def test_row_arithmetic(self, sweep_rows):
        assert len(sweep_rows) == 2 * 3 + 2
        kinds = [r["kind"] for r in sweep_rows]
        assert kinds == ["run"] * 3 + ["summary"] + ["run"] * 3 + ["summary"]

    def test_depth_column_on_every_row(self, sweep_rows):
        for r in sweep_rows:
            assert r["J"] == math.ceil(r["n"] ** (1.0 / 3.0))

    def test_summary_statistics_match(self, sweep_rows):
        for n in (20, 50):
            runs = [r for r in sweep_rows if r["kind"] == "run" and r["n"] == n]
            summary = next(
                r for r in sweep_rows if r["kind"] == "summary" and r["n"] == n
            )
            vals = [r["test_rmse"] for r in runs]
            assert summary["test_rmse"] == pytest.approx(np.mean(vals), rel=1e-12)
            assert summary["rmse_std"] == pytest.approx(np.std(vals, ddof=1), rel=1e-12)
            assert summary["status"] == "3/3"
            assert summary["seed"] is None

    def test_run_rows_have_finite_rmse(self, sweep_rows):
        for r in sweep_rows:
            if r["kind"] == "run":
                assert r["status"] == "ok"
                assert math.isfinite(r["test_rmse"]) and r["test_rmse"] >= 0.0

    def test_single_seed_summary_std_is_zero(self):
        rows = run_experiment(3, [20], [4], epochs=5)
        summary = rows[-1]
        assert summary["rmse_std"] == 0.0
        assert summary["status"] == "1/1"

    def test_csv_is_byte_identical_across_invocations(self, sweep_rows, tmp_path):
        again = run_experiment(3, [20, 50], [0, 1, 2], epochs=30)
        assert experiment_csv(sweep_rows) == experiment_csv(again)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_experiment_csv(sweep_rows, p1)
        write_experiment_csv(again, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_csv_layout(self, sweep_rows):
        lines = experiment_csv(sweep_rows).splitlines()
        assert lines[0] == "# deepconv-experiment-v1"
        assert lines[1] == "kind,d,n,seed,J,test_rmse,rmse_std,status"
        assert len(lines) == 2 + len(sweep_rows)
        first = lines[2].split(",")
        assert first[0] == "run" and first[-1] == "ok"
        assert first[6] == ""  # run rows carry no std

    def test_divergence_is_recorded_not_fatal(self):
        rows = run_experiment(3, [20], [0, 1], epochs=10, step_size=1e200)
        runs = [r for r in rows if r["kind"] == "run"]
        assert all(r["status"] == "diverged" for r in runs)
        assert all(r["test_rmse"] is None for r in runs)
        summary = rows[-1]
        assert summary["status"] == "0/2"
        assert summary["test_rmse"] is None and summary["rmse_std"] is None
        # and the CSV renders the missing cells as empty strings
        lines = experiment_csv(rows).splitlines()
        assert lines[2].split(",")[5] == ""

    @pytest.mark.parametrize(
        "args",
        [
            (1, [20], [0]),
            (3, [], [0]),
            (3, [20], []),
            (3, [0], [0]),
            (3, [20], [-1]),
        ],
    )
    def test_rejects_bad_arguments(self, args):
        with pytest.raises(ValidationError):
            run_experiment(*args, epochs=5)

    def test_figure_rendering(self, sweep_rows, tmp_path):
        path = tmp_path / "sweep.png"
        render_experiment_figure(sweep_rows, path)
        assert path.read_bytes()[:8] == PNG_MAGIC

    def test_figure_needs_successful_rows(self, tmp_path):
        rows = run_experiment(3, [20], [0], epochs=5, step_size=1e200)
        with pytest.raises(ValidationError, match="no successful runs"):
            render_experiment_figure(rows, tmp_path / "sweep.png")


class TestRunPipeline:
    def test_report_type_and_echoed_inputs(self, tiny_pipeline):
        assert isinstance(tiny_pipeline, PipelineReport)
        assert (tiny_pipeline.d, tiny_pipeline.n, tiny_pipeline.s, tiny_pipeline.seed) == (
            4,
            6,
            4,
            0,
        )
        assert tiny_pipeline.alpha == pytest.approx(1.0 / 3.0)

    def test_teacher_shape_and_parameter_bound(self, tiny_pipeline):
        assert tiny_pipeline.teacher_depth == math.ceil(6 ** (1.0 / 3.0))
        assert tiny_pipeline.teacher_param_bound == 5 * 4 * tiny_pipeline.teacher_depth + 2
        assert 0 < tiny_pipeline.teacher_params <= tiny_pipeline.teacher_param_bound

    def test_student_depth_decomposition(self, tiny_pipeline):
        assert (
            tiny_pipeline.student_depth
            == tiny_pipeline.j1 + tiny_pipeline.j2 + tiny_pipeline.j3
        )
        assert tiny_pipeline.j2 == tiny_pipeline.teacher_depth
        assert tiny_pipeline.j1 == math.ceil((2 * 16 - 1) / (4 - 1))

    def test_interpolation_residual(self, tiny_pipeline):
        assert tiny_pipeline.max_interp_residual <= 1e-6

    def test_rmse_fields(self, tiny_pipeline):
        assert math.isfinite(tiny_pipeline.teacher_rmse) and tiny_pipeline.teacher_rmse >= 0.0
        assert math.isfinite(tiny_pipeline.student_rmse) and tiny_pipeline.student_rmse >= 0.0
        assert tiny_pipeline.rmse_gap == pytest.approx(
            abs(tiny_pipeline.student_rmse - tiny_pipeline.teacher_rmse), rel=1e-12
        )

    def test_slab_fraction_is_a_probability(self, tiny_pipeline):
        assert 0.0 <= tiny_pipeline.slab_fraction <= 1.0

    def test_capacity_bounds_attached(self, tiny_pipeline):
        assert tiny_pipeline.bounds.R > 0
        assert tiny_pipeline.bounds.pdim_general > 0.0
        assert len(tiny_pipeline.bounds.covering_log) == 6
        assert tiny_pipeline.bounds.rate_bound > 0.0

    def test_student_params_grow_with_n(self, tiny_pipeline):
        bigger = run_pipeline(4, 10, 1.0 / 3.0, 0, teacher_epochs=50, test_n=200)
        assert bigger.added_params > tiny_pipeline.added_params
        assert bigger.student_width > tiny_pipeline.student_width

    def test_deterministic_csv(self, tiny_pipeline, tmp_path):
        again = run_pipeline(4, 6, 1.0 / 3.0, 0, teacher_epochs=50, test_n=200)
        assert pipeline_csv(tiny_pipeline) == pipeline_csv(again)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_pipeline_csv(tiny_pipeline, p1)
        write_pipeline_csv(again, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_csv_layout(self, tiny_pipeline):
        lines = pipeline_csv(tiny_pipeline).splitlines()
        assert lines[0] == "# deepconv-pipeline-v1"
        assert lines[1] == "key,value"
        keys = [ln.split(",")[0] for ln in lines[2:]]
        for expected in (
            "teacher_rmse",
            "student_rmse",
            "max_interp_residual",
            "student_depth",
            "added_params",
            "bound_rate_theorem2",
        ):
            assert expected in keys
        assert sum(k.startswith("bound_covering_log_eps_") for k in keys) == 6

    def test_figure_rendering(self, tiny_pipeline, tmp_path):
        path = tmp_path / "pipeline.png"
        render_pipeline_figure(tiny_pipeline, path)
        assert path.read_bytes()[:8] == PNG_MAGIC

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"alpha": 0.0},
            {"alpha": 0.5},
            {"alpha": 0.7},
            {"alpha": -0.1},
            {"s": 3},
            {"s": 2},
            {"s": 6},
            {"n": 0},
            {"d": 1},
            {"seed": -1},
        ],
    )
    def test_rejects_bad_arguments(self, kwargs):
        args = {"d": 4, "n": 6, "alpha": 1.0 / 3.0, "seed": 0}
        args.update(kwargs)
        with pytest.raises(ValidationError):
            run_pipeline(
                args["d"],
                args["n"],
                args["alpha"],
                args["seed"],
                s=args.get("s", 4),
                teacher_epochs=5,
                test_n=50,
            )
