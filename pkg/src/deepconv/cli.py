"""Command-line interface.

Subcommands: ``simulate``, ``train``, ``deepen``, ``bounds``, ``experiment``,
``pipeline``.  Every subcommand accepts ``--seed`` and ``--out``.  Exit codes:
0 on success, 2 on a validation error (including bad flags), 3 on a numerical
failure such as diverging training.

File formats: datasets travel as CSV with a required header row, one row per
sample, the feature columns first and the label column last.  Networks travel
as one-line JSON produced by :func:`deepconv.dcnn.serialize`.  Report-style
outputs (``train --out-report``, ``experiment``, ``pipeline``, ``bounds``)
additionally render a PNG figure next to the delimited file, named after it.
"""

from __future__ import annotations

import csv
import functools
import math
import sys
from pathlib import Path

import click
import numpy as np

from .capacity import evaluate_bounds
from .dcnn import count_free_params, deserialize, forward_batch, serialize
from .deepen import Dataset, interpolate
from .errors import NumericalError, ValidationError
from .harness import (
    SimSpec,
    pipeline_csv,
    render_experiment_figure,
    render_pipeline_figure,
    run_experiment,
    run_pipeline,
    simulate as simulate_data,
    write_experiment_csv,
    write_pipeline_csv,
)
from .trainer import TrainConfig, fit, init_net

__all__ = ["main"]


def _exit_codes(fn):
    """Map library exceptions onto the documented process exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"validation error: {exc}", err=True)
            sys.exit(2)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(3)

    return wrapper


def _write_data_csv(path, data: Dataset) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(data.d)] + ["y"])
        for row, label in zip(data.xs, data.ys):
            writer.writerow([f"{v:.17g}" for v in row] + [f"{label:.17g}"])


def _read_data_csv(path, label_bound: float | None = None) -> Dataset:
    """Parse a dataset CSV (header row required, label column last)."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ValidationError(f"cannot read data CSV {path}: {exc}") from exc
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise ValidationError(f"data CSV {path} needs a header row and at least one sample")
    header = rows[0]
    if len(header) < 2:
        raise ValidationError(f"data CSV {path} needs at least one feature column and a label")
    try:
        float(header[-1])
    except ValueError:
        pass
    else:
        raise ValidationError(f"data CSV {path} must start with a non-numeric header row")
    width = len(header)
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ValidationError(
                f"data CSV {path} line {lineno}: expected {width} columns, got {len(row)}"
            )
        try:
            values.append([float(v) for v in row])
        except ValueError as exc:
            raise ValidationError(f"data CSV {path} line {lineno}: {exc}") from exc
    arr = np.asarray(values, dtype=float)
    X, y = arr[:, :-1], arr[:, -1]
    if label_bound is None:
        label_bound = max(2.0, float(np.max(np.abs(y))))
    return Dataset(X, y, label_bound)


def _figure_path(out) -> Path:
    return Path(out).with_suffix(".png")


def _render_train_report_figure(trace, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(range(1, len(trace) + 1), trace)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training MSE")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_bounds_figure(report, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    eps = [e for e, _ in report.covering_log]
    logs = [v for _, v in report.covering_log]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogx(eps, logs, marker="o")
    ax.set_xlabel("covering radius")
    ax.set_ylabel("log covering-number bound")
    ax.grid(True, alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


@click.group()
@click.version_option(package_name="deepconv")
def main() -> None:
    """Zero-padded 1-D convolutional networks: build, train, deepen, bound."""


@main.command(name="simulate")
@click.option("--d", type=int, default=10, show_default=True, help="Input dimension.")
@click.option("--n", type=int, default=500, show_default=True, help="Training sample size.")
@click.option("--test-n", type=int, default=2000, show_default=True, help="Test sample size.")
@click.option("--noise-sd", type=float, default=0.1, show_default=True, help="Label noise SD.")
@click.option(
    "--halfwidth", type=float, default=10.0, show_default=True, help="Input cube half-width."
)
@click.option("--seed", type=int, default=0, show_default=True, help="RNG seed.")
@click.option(
    "--out", required=True, type=click.Path(dir_okay=False), help="Training data CSV path."
)
@click.option(
    "--test-out",
    type=click.Path(dir_okay=False),
    default=None,
    help="Optional test data CSV path.",
)
@_exit_codes
def simulate_cmd(d, n, test_n, noise_sd, halfwidth, seed, out, test_out) -> None:
    """Draw the simulated regression task and write it as data CSV."""
    spec = SimSpec(
        d=d, n=n, test_n=test_n, noise_sd=noise_sd, domain_halfwidth=halfwidth, seed=seed
    )
    train, test = simulate_data(spec)
    _write_data_csv(out, train)
    click.echo(f"wrote {train.n} training samples (d={train.d}) to {out}")
    if test_out is not None:
        _write_data_csv(test_out, test)
        click.echo(f"wrote {test.n} test samples to {test_out}")


@main.command(name="train")
@click.option("--data", required=True, type=click.Path(dir_okay=False), help="Training CSV.")
@click.option("--test", required=True, type=click.Path(dir_okay=False), help="Test CSV.")
@click.option("--depth", type=int, required=True, help="Number of convolutional layers.")
@click.option("--filter-len", type=int, default=2, show_default=True, help="Filter length.")
@click.option("--epochs", type=int, default=200, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True, help="Step size.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--tied-bias/--untied-bias",
    default=True,
    show_default=True,
    help="Share interior bias entries in each layer's middle block.",
)
@click.option(
    "--label-bound", type=float, default=None, help="Label bound M (default: max(2, max |y|))."
)
@click.option("--out-net", type=click.Path(dir_okay=False), default=None, help="Net JSON path.")
@click.option(
    "--out-report",
    type=click.Path(dir_okay=False),
    default=None,
    help="Training report CSV (epoch, train_mse); also renders a PNG alongside.",
)
@click.option(
    "--out",
    type=click.Path(dir_okay=False),
    default=None,
    help="Alias for --out-net.",
)
@_exit_codes
def train_cmd(
    data, test, depth, filter_len, epochs, lr, seed, tied_bias, label_bound, out_net, out_report, out
) -> None:
    """Train a fresh network on a dataset and report truncated test RMSE."""
    if out is not None and out_net is not None and out != out_net:
        raise ValidationError("--out and --out-net disagree; pass only one")
    net_path = out_net if out_net is not None else out
    train_data = _read_data_csv(data, label_bound)
    test_data = _read_data_csv(test, label_bound)
    net = init_net(train_data.d, filter_len, depth, seed=seed, tied_bias=tied_bias)
    cfg = TrainConfig(epochs=epochs, step_size=lr, seed=seed)
    trained, report = fit(net, train_data, test_data, cfg)
    click.echo(f"free parameters: {count_free_params(trained)}")
    click.echo(f"final train MSE: {report.train_mse[-1]:.6g}")
    click.echo(f"test RMSE (truncated): {report.test_rmse:.6g}")
    if net_path is not None:
        with open(net_path, "w", encoding="utf-8") as fh:
            fh.write(serialize(trained) + "\n")
        click.echo(f"wrote trained net to {net_path}")
    if out_report is not None:
        with open(out_report, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("epoch", "train_mse"))
            for epoch, mse in enumerate(report.train_mse, start=1):
                writer.writerow((epoch, f"{mse:.12g}"))
        fig_path = _figure_path(out_report)
        _render_train_report_figure(report.train_mse, fig_path)
        click.echo(f"wrote training report to {out_report} and {fig_path}")


@main.command(name="deepen")
@click.option("--teacher", required=True, type=click.Path(dir_okay=False), help="Teacher JSON.")
@click.option("--data", required=True, type=click.Path(dir_okay=False), help="Data CSV.")
@click.option("--filter-len", "filter_len", type=int, required=True, help="Student filter length s.")
@click.option("--eps-frac", type=float, default=0.5, show_default=True, help="Slab width fraction.")
@click.option("--n-rep", type=int, default=None, help="Replication count N (odd, >= 3n).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--label-bound", type=float, default=None, help="Label bound M (default: max(2, max |y|))."
)
@click.option(
    "--out", required=True, type=click.Path(dir_okay=False), help="Student net JSON path."
)
@_exit_codes
def deepen_cmd(teacher, data, filter_len, eps_frac, n_rep, seed, label_bound, out) -> None:
    """Deepen a teacher net into a student that interpolates the data."""
    try:
        text = Path(teacher).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read teacher JSON {teacher}: {exc}") from exc
    teacher_net = deserialize(text)
    dataset = _read_data_csv(data, label_bound)
    student, plan = interpolate(
        teacher_net, dataset, filter_len, seed, eps_frac=eps_frac, n_rep=n_rep
    )
    residual = float(np.max(np.abs(forward_batch(student, dataset.xs) - dataset.ys)))
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(serialize(student) + "\n")
    click.echo(f"student depth: {student.depth} (J1={plan.j1}, J2={plan.j2}, J3={plan.j3})")
    click.echo(f"student width: {plan.final_width}")
    click.echo(f"added free parameters: {plan.added_free_params()}")
    click.echo(f"max interpolation residual: {residual:.6g}")
    click.echo(f"wrote student net to {out}")


@main.command(name="bounds")
@click.option("--j", type=int, required=True, help="Network depth J.")
@click.option("--s", type=int, required=True, help="Filter length parameter S.")
@click.option("--d", type=int, required=True, help="Input dimension.")
@click.option("--n", type=int, required=True, help="Sample size.")
@click.option("--delta", type=float, default=0.1, show_default=True, help="Confidence level.")
@click.option("--c0", type=float, default=1.0, show_default=True, help="Depth-scaling constant.")
@click.option("--C", "big_c", type=float, default=1.0, show_default=True, help="Rate constant.")
@click.option("--m", type=float, default=2.0, show_default=True, help="Truncation level M.")
@click.option("--seed", type=int, default=0, show_default=True, help="Unused; bounds are exact.")
@click.option(
    "--out",
    type=click.Path(dir_okay=False),
    default=None,
    help="Optional key,value CSV path; also renders a PNG alongside.",
)
@_exit_codes
def bounds_cmd(j, s, d, n, delta, c0, big_c, m, seed, out) -> None:
    """Evaluate every capacity bound for one architecture and sample size."""
    report = evaluate_bounds(j, s, d, n, delta, c0=c0, C=big_c, M=m)
    pairs = [
        ("R", f"{report.R:.12g}"),
        ("pdim_general", f"{report.pdim_general:.12g}"),
        ("pdim_dcnn_explicit", f"{report.pdim_dcnn_explicit:.12g}"),
        ("pdim_dcnn_c0", f"{report.pdim_dcnn_c0:.12g}"),
        ("rate_theorem2", f"{report.rate_bound:.12g}"),
    ]
    for eps, logv in report.covering_log:
        pairs.append((f"covering_log_eps_{eps:.12g}", f"{logv:.12g}"))
    width = max(len(k) for k, _ in pairs)
    for key, value in pairs:
        click.echo(f"{key.ljust(width)}  {value}")
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write("# deepconv-bounds-v1\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("key", "value"))
            writer.writerows(pairs)
        fig_path = _figure_path(out)
        _render_bounds_figure(report, fig_path)
        click.echo(f"wrote bounds table to {out} and {fig_path}")


@main.command(name="experiment")
@click.option("--d", type=int, default=10, show_default=True, help="Input dimension.")
@click.option(
    "--n-grid",
    default="100,300,500,1000",
    show_default=True,
    help="Comma-separated training sample sizes.",
)
@click.option(
    "--seeds",
    default=None,
    help="Comma-separated seeds (default: five consecutive seeds starting at --seed).",
)
@click.option("--epochs", type=int, default=200, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True, help="Step size.")
@click.option("--test-n", type=int, default=2000, show_default=True)
@click.option("--noise-sd", type=float, default=0.1, show_default=True)
@click.option("--halfwidth", type=float, default=10.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="First default seed.")
@click.option(
    "--out", required=True, type=click.Path(dir_okay=False), help="Sweep CSV path."
)
@_exit_codes
def experiment_cmd(
    d, n_grid, seeds, epochs, lr, test_n, noise_sd, halfwidth, seed, out
) -> None:
    """RMSE sweep over sample sizes and seeds; writes CSV plus a PNG."""
    try:
        grid = [int(v) for v in n_grid.split(",") if v.strip()]
        seed_list = (
            [int(v) for v in seeds.split(",") if v.strip()]
            if seeds is not None
            else [seed + i for i in range(5)]
        )
    except ValueError as exc:
        raise ValidationError(f"could not parse grid/seeds: {exc}") from exc
    rows = run_experiment(
        d,
        grid,
        seed_list,
        epochs=epochs,
        step_size=lr,
        test_n=test_n,
        noise_sd=noise_sd,
        domain_halfwidth=halfwidth,
    )
    write_experiment_csv(rows, out)
    fig_path = _figure_path(out)
    render_experiment_figure(rows, fig_path)
    for r in rows:
        if r["kind"] == "summary":
            mean = "-" if r["test_rmse"] is None else f"{r['test_rmse']:.6f}"
            std = "-" if r["rmse_std"] is None else f"{r['rmse_std']:.6f}"
            click.echo(
                f"n={r['n']:>6} J={r['J']:>3} mean RMSE={mean} std={std} ({r['status']} ok)"
            )
    click.echo(f"wrote sweep to {out} and {fig_path}")


@main.command(name="pipeline")
@click.option("--d", type=int, default=4, show_default=True, help="Input dimension.")
@click.option("--n", type=int, default=20, show_default=True, help="Training sample size.")
@click.option("--alpha", type=float, default=1.0 / 3.0, help="Teacher depth exponent (0, 1/2).")
@click.option("--filter-len", "filter_len", type=int, default=4, show_default=True, help="Student filter length s.")
@click.option("--teacher-epochs", type=int, default=400, show_default=True)
@click.option("--test-n", type=int, default=2000, show_default=True)
@click.option("--delta", type=float, default=0.1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--out", required=True, type=click.Path(dir_okay=False), help="Report CSV path."
)
@_exit_codes
def pipeline_cmd(d, n, alpha, filter_len, teacher_epochs, test_n, delta, seed, out) -> None:
    """Train a teacher, deepen it to an interpolant, measure both nets."""
    report = run_pipeline(
        d,
        n,
        alpha,
        seed,
        s=filter_len,
        teacher_epochs=teacher_epochs,
        test_n=test_n,
        delta=delta,
    )
    write_pipeline_csv(report, out)
    fig_path = _figure_path(out)
    render_pipeline_figure(report, fig_path)
    click.echo(f"teacher: depth {report.teacher_depth}, {report.teacher_params} params "
               f"(bound {report.teacher_param_bound}), test RMSE {report.teacher_rmse:.6f}")
    click.echo(f"student: depth {report.student_depth} "
               f"(J1={report.j1}, J2={report.j2}, J3={report.j3}), "
               f"width {report.student_width}, +{report.added_params} params, "
               f"test RMSE {report.student_rmse:.6f}")
    click.echo(f"max interpolation residual: {report.max_interp_residual:.6g}")
    click.echo(f"wrote report to {out} and {fig_path}")


if __name__ == "__main__":
    main()
