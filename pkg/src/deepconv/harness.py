"""Experiment orchestration: data simulation, RMSE sweeps, and the
train-then-deepen pipeline.

The simulated regression task draws inputs uniformly from a hypercube and
labels them with sin(r) + cos(r) where r is the fourth power of the Euclidean
norm, adding Gaussian noise to training labels only.  The noiseless regression
values lie in [-sqrt(2), sqrt(2)], so every dataset carries the label bound
M = 2 and noisy training labels are clamped to that range.

Two experiment drivers are provided.  ``run_experiment`` sweeps sample sizes
and seeds, training a fresh network per cell (depth = ceil(n^(1/3)), filter
length 2, untied biases) and recording truncated test RMSE; per-n mean and
standard-deviation summary rows are appended.  ``run_pipeline`` trains a
shallow teacher of depth ceil(n^alpha), deepens it to an interpolant of the
training data, and reports both nets' test RMSE together with the
interpolation residual, the added depth/width/parameter accounting, and the
capacity-bound values for the teacher architecture.

Every cell derives its randomness from the documented splitting rule
``SeedSequence([seed, n, d])`` so runs are reproducible row by row and whole
CSV files are byte-identical across repeated invocations.  Figure rendering
(PNG, via the non-interactive backend) is attached to the same report data so
a report path always gains a plot alongside the delimited output.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .capacity import BoundReport, evaluate_bounds
from .dcnn import count_free_params, forward_batch
from .deepen import Dataset, in_slab, interpolate
from .errors import NumericalError, ValidationError
from .trainer import TrainConfig, fit, init_net

__all__ = [
    "SimSpec",
    "PipelineReport",
    "simulate",
    "regression_values",
    "run_experiment",
    "experiment_csv",
    "write_experiment_csv",
    "render_experiment_figure",
    "run_pipeline",
    "pipeline_csv",
    "write_pipeline_csv",
    "render_pipeline_figure",
]

_EXPERIMENT_SCHEMA = "# deepconv-experiment-v1"
_PIPELINE_SCHEMA = "# deepconv-pipeline-v1"
_EXPERIMENT_COLUMNS = ("kind", "d", "n", "seed", "J", "test_rmse", "rmse_std", "status")


# ------------------------------------------------------------------ simulation


@dataclass(frozen=True)
class SimSpec:
    """Shape of one simulated regression problem."""

    d: int = 10
    n: int = 500
    test_n: int = 2000
    noise_sd: float = 0.1
    domain_halfwidth: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("d", "n", "test_n"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError("seed must be a nonnegative integer")
        sd = float(self.noise_sd)
        if not math.isfinite(sd) or sd < 0.0:
            raise ValidationError("noise_sd must be a finite nonnegative number")
        hw = float(self.domain_halfwidth)
        if not math.isfinite(hw) or hw <= 0.0:
            raise ValidationError("domain_halfwidth must be a positive number")


def regression_values(X: np.ndarray) -> np.ndarray:
    """Noiseless labels: sin(r) + cos(r) with r = squared-norm squared."""
    r = np.sum(np.asarray(X, dtype=float) ** 2, axis=1) ** 2
    return np.sin(r) + np.cos(r)


def simulate(spec: SimSpec):
    """Draw (train, test) datasets for the simulated regression task.

    Training labels add N(0, noise_sd^2) noise and are clamped to the label
    bound [-2, 2]; test labels are the noiseless regression values, which lie
    inside the bound already.  Draw order (train inputs, train noise, test
    inputs) is fixed so identical specs give identical datasets.
    """
    if not isinstance(spec, SimSpec):
        raise ValidationError("spec must be a SimSpec")
    rng = np.random.default_rng(spec.seed)
    hw = float(spec.domain_halfwidth)
    X = rng.uniform(-hw, hw, (spec.n, spec.d))
    noise = spec.noise_sd * rng.standard_normal(spec.n)
    y = np.clip(regression_values(X) + noise, -2.0, 2.0)
    Xt = rng.uniform(-hw, hw, (spec.test_n, spec.d))
    yt = regression_values(Xt)
    return Dataset(X, y, 2.0), Dataset(Xt, yt, 2.0)


# ------------------------------------------------------------------ experiment


def _cell_seeds(seed: int, n: int, d: int):
    """Documented splitting rule: three integer seeds per sweep cell."""
    ss = np.random.SeedSequence([seed, n, d])
    data_seed, net_seed, fit_seed = (int(v) for v in ss.generate_state(3))
    return data_seed, net_seed, fit_seed


def run_experiment(
    d: int,
    n_grid,
    seeds,
    *,
    epochs: int = 200,
    step_size: float = 1e-3,
    test_n: int = 2000,
    noise_sd: float = 0.1,
    domain_halfwidth: float = 10.0,
) -> list:
    """RMSE sweep over sample sizes and seeds; returns CSV-ready row dicts.

    One ``run`` row per (n, seed) in grid order, each training a fresh
    untied-bias network of depth ceil(n^(1/3)) and filter length 2 on its own
    simulated dataset; a ``summary`` row per n holds the mean and standard
    deviation (ddof=1 when at least two runs succeeded) of the successful
    runs' RMSE.  A diverging cell is recorded with status ``diverged`` and an
    empty RMSE rather than aborting the sweep.
    """
    if isinstance(d, bool) or not isinstance(d, int) or d < 2:
        raise ValidationError("d must be an integer >= 2")
    n_grid = [int(n) for n in n_grid]
    seeds = [int(s) for s in seeds]
    if not n_grid or not seeds:
        raise ValidationError("n_grid and seeds must be non-empty")
    if any(n < 1 for n in n_grid):
        raise ValidationError("sample sizes must be positive")
    if any(s < 0 for s in seeds):
        raise ValidationError("seeds must be nonnegative")
    rows = []
    for n in n_grid:
        J = math.ceil(n ** (1.0 / 3.0))
        values = []
        for seed in seeds:
            data_seed, net_seed, fit_seed = _cell_seeds(seed, n, d)
            spec = SimSpec(
                d=d,
                n=n,
                test_n=test_n,
                noise_sd=noise_sd,
                domain_halfwidth=domain_halfwidth,
                seed=data_seed,
            )
            train, test = simulate(spec)
            net = init_net(d, 2, J, seed=net_seed, tied_bias=False)
            cfg = TrainConfig(epochs=epochs, step_size=step_size, seed=fit_seed)
            row = {
                "kind": "run",
                "d": d,
                "n": n,
                "seed": seed,
                "J": J,
                "test_rmse": None,
                "rmse_std": None,
                "status": "ok",
            }
            try:
                _, report = fit(net, train, test, cfg)
            except NumericalError:
                row["status"] = "diverged"
            else:
                row["test_rmse"] = report.test_rmse
                values.append(report.test_rmse)
            rows.append(row)
        mean = float(np.mean(values)) if values else None
        std = float(np.std(values, ddof=1)) if len(values) >= 2 else (
            0.0 if values else None
        )
        rows.append(
            {
                "kind": "summary",
                "d": d,
                "n": n,
                "seed": None,
                "J": J,
                "test_rmse": mean,
                "rmse_std": std,
                "status": f"{len(values)}/{len(seeds)}",
            }
        )
    return rows


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def experiment_csv(rows) -> str:
    """Render sweep rows to the versioned delimited format."""
    buf = io.StringIO()
    buf.write(_EXPERIMENT_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_EXPERIMENT_COLUMNS)
    for row in rows:
        writer.writerow([_format_cell(row[c]) for c in _EXPERIMENT_COLUMNS])
    return buf.getvalue()


def write_experiment_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(experiment_csv(rows))


def render_experiment_figure(rows, path) -> None:
    """Mean test RMSE vs n with standard-deviation error bars (PNG)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    summaries = [r for r in rows if r["kind"] == "summary" and r["test_rmse"] is not None]
    if not summaries:
        raise ValidationError("no successful runs to plot")
    ns = [r["n"] for r in summaries]
    means = [r["test_rmse"] for r in summaries]
    stds = [r["rmse_std"] if r["rmse_std"] is not None else 0.0 for r in summaries]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(ns, means, yerr=stds, marker="o", capsize=4.0)
    ax.set_xlabel("training sample size n")
    ax.set_ylabel("test RMSE (truncated at M = 2)")
    ax.set_title(f"RMSE sweep, d = {summaries[0]['d']}")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# -------------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class PipelineReport:
    """Everything the train-then-deepen pipeline measured."""

    d: int
    n: int
    alpha: float
    s: int
    seed: int
    teacher_depth: int
    teacher_params: int
    teacher_param_bound: int
    teacher_rmse: float
    student_rmse: float
    rmse_gap: float
    max_interp_residual: float
    j1: int
    j2: int
    j3: int
    student_depth: int
    student_width: int
    added_params: int
    slab_fraction: float
    bounds: BoundReport


def run_pipeline(
    d: int,
    n: int,
    alpha: float,
    seed: int,
    *,
    s: int = 4,
    teacher_epochs: int = 400,
    test_n: int = 2000,
    delta: float = 0.1,
    noise_sd: float = 0.1,
    domain_halfwidth: float = 10.0,
) -> PipelineReport:
    """Train a shallow teacher, deepen it to an interpolant, measure both.

    The teacher has depth ceil(n^alpha) and filter length s/2 with tied
    interior biases (its free-parameter count is checked against the closed
    bound 5*d*depth + 2).  Deepening uses replication count 4n+1.  Test RMSE
    for both nets clamps predictions to the label bound 2; the interpolation
    residual is measured on raw student outputs.  Capacity bounds are
    evaluated for the teacher architecture (depth clamped up to 2, where the
    bound formulas need it) at the same n and delta.
    """
    if isinstance(d, bool) or not isinstance(d, int) or d < 2:
        raise ValidationError("d must be an integer >= 2")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ValidationError("n must be a positive integer")
    alpha = float(alpha)
    if not (0.0 < alpha < 0.5):
        raise ValidationError("alpha must lie in (0, 1/2)")
    if isinstance(s, bool) or not isinstance(s, int) or s % 2 != 0 or not (4 <= s <= d):
        raise ValidationError("s must be an even integer with 4 <= s <= d")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ValidationError("seed must be a nonnegative integer")

    data_seed, net_seed, fit_seed = _cell_seeds(seed, n, d)
    spec = SimSpec(
        d=d,
        n=n,
        test_n=test_n,
        noise_sd=noise_sd,
        domain_halfwidth=domain_halfwidth,
        seed=data_seed,
    )
    train, test = simulate(spec)

    j2 = math.ceil(n**alpha)
    teacher0 = init_net(d, s // 2, j2, seed=net_seed, tied_bias=True)
    teacher, teach_report = fit(
        teacher0, train, test, TrainConfig(epochs=teacher_epochs, seed=fit_seed)
    )
    teacher_params = count_free_params(teacher)
    param_bound = 5 * d * j2 + 2

    student, plan = interpolate(teacher, train, s, seed=seed, n_rep=4 * n + 1)

    resid = float(np.max(np.abs(forward_batch(student, train.xs) - train.ys)))
    preds = np.clip(forward_batch(student, test.xs), -2.0, 2.0)
    student_rmse = float(np.sqrt(np.mean((preds - test.ys) ** 2)))
    teacher_rmse = teach_report.test_rmse
    slab_fraction = float(np.mean(in_slab(plan, test.xs)))

    bounds = evaluate_bounds(max(2, j2), s // 2, d, n, delta)

    return PipelineReport(
        d=d,
        n=n,
        alpha=alpha,
        s=s,
        seed=seed,
        teacher_depth=j2,
        teacher_params=teacher_params,
        teacher_param_bound=param_bound,
        teacher_rmse=teacher_rmse,
        student_rmse=student_rmse,
        rmse_gap=abs(student_rmse - teacher_rmse),
        max_interp_residual=resid,
        j1=plan.j1,
        j2=plan.j2,
        j3=plan.j3,
        student_depth=student.depth,
        student_width=plan.final_width,
        added_params=plan.added_free_params(),
        slab_fraction=slab_fraction,
        bounds=bounds,
    )


def pipeline_csv(report: PipelineReport) -> str:
    """Render a pipeline report as versioned key,value rows."""
    pairs = [
        ("d", report.d),
        ("n", report.n),
        ("alpha", report.alpha),
        ("s", report.s),
        ("seed", report.seed),
        ("teacher_depth", report.teacher_depth),
        ("teacher_params", report.teacher_params),
        ("teacher_param_bound", report.teacher_param_bound),
        ("teacher_rmse", report.teacher_rmse),
        ("student_rmse", report.student_rmse),
        ("rmse_gap", report.rmse_gap),
        ("max_interp_residual", report.max_interp_residual),
        ("j1", report.j1),
        ("j2", report.j2),
        ("j3", report.j3),
        ("student_depth", report.student_depth),
        ("student_width", report.student_width),
        ("added_params", report.added_params),
        ("slab_fraction", report.slab_fraction),
        ("bound_R", report.bounds.R),
        ("bound_pdim_general", report.bounds.pdim_general),
        ("bound_pdim_dcnn_explicit", report.bounds.pdim_dcnn_explicit),
        ("bound_pdim_dcnn_c0", report.bounds.pdim_dcnn_c0),
        ("bound_rate_theorem2", report.bounds.rate_bound),
    ]
    buf = io.StringIO()
    buf.write(_PIPELINE_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("key", "value"))
    for key, value in pairs:
        writer.writerow((key, _format_cell(value)))
    for eps, logv in report.bounds.covering_log:
        writer.writerow((f"bound_covering_log_eps_{_format_cell(eps)}", _format_cell(logv)))
    return buf.getvalue()


def write_pipeline_csv(report: PipelineReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(pipeline_csv(report))


def render_pipeline_figure(report: PipelineReport, path) -> None:
    """Two-panel PNG: RMSE comparison and the interpolation picture."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    ax1.bar(
        ["teacher", "student"],
        [report.teacher_rmse, report.student_rmse],
        color=["#4878d0", "#ee854a"],
    )
    ax1.set_ylabel("test RMSE (truncated at M = 2)")
    ax1.set_title(f"d={report.d}, n={report.n}, alpha={report.alpha:g}")
    for idx, v in enumerate([report.teacher_rmse, report.student_rmse]):
        ax1.text(idx, v, f"{v:.4f}", ha="center", va="bottom")
    ax2.bar(
        ["J1", "J2", "J3"],
        [report.j1, report.j2, report.j3],
        color="#6acc64",
    )
    ax2.set_ylabel("layers")
    ax2.set_title(
        f"student depth {report.student_depth}, "
        f"residual {report.max_interp_residual:.2e}"
    )
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
