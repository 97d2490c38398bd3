"""Report rendering: SVG figures plus a markdown summary for completed runs.

Figures are written deterministically (fixed hash salt, no embedded
timestamps) so that rerunning a report on identical inputs reproduces the
files byte for byte.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python 3.10
    import tomli as _toml

from .analysis import fit_inverse_eps  # noqa: E402
from .errors import ValidationError  # noqa: E402
from .training import TrainingTrace  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "bcp-distill"
matplotlib.rcParams["figure.figsize"] = (7.0, 4.5)

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def _save(fig, path) -> None:
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_learning_curves(curves, reference, path) -> None:
    """Generalization error vs iteration, one line per (label, trace)."""
    fig, ax = plt.subplots()
    for label, trace in curves:
        ax.plot(trace.iterations, trace.gen_error, label=label, linewidth=1.0)
    if reference is not None:
        ax.axhline(reference, color="black", linestyle="--", linewidth=1.0,
                   label="bayes risk")
    ax.set_xlabel("iteration")
    ax.set_ylabel("generalization error (nats)")
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)


def render_accuracy_curves(curves, path) -> None:
    fig, ax = plt.subplots()
    for label, trace in curves:
        ax.plot(trace.iterations, trace.accuracy, label=label, linewidth=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("test accuracy")
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)


def render_distance_curves(curves, path) -> None:
    """log-scale squared parameter distance to the tracked optimum."""
    fig, ax = plt.subplots()
    for label, trace in curves:
        if trace.has_distance:
            ax.semilogy(trace.iterations, np.maximum(trace.sq_dist, 1e-300),
                        label=label, linewidth=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("squared distance to optimum")
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)


def render_sweep_fit(eps_points, path) -> tuple[float, float]:
    """Scatter avg_gap against epsilon with the fitted c/(1+eps) overlay."""
    c, r2 = fit_inverse_eps(eps_points)
    eps = np.array(sorted({e for e, _ in eps_points}))
    fig, ax = plt.subplots()
    ax.scatter([e for e, _ in eps_points], [g for _, g in eps_points],
               s=18, label="measured avg_gap")
    grid = np.linspace(eps.min(), eps.max(), 200)
    ax.plot(grid, c / (1.0 + grid), color="black", linewidth=1.0,
            label=f"c/(1+eps), c={c:.4g}, R^2={r2:.4f}")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("avg_gap (nats)")
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)
    return c, r2


def render_sweep_points(xs, ys, xlabel, path) -> None:
    fig, ax = plt.subplots()
    ax.scatter(xs, ys, s=18)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("avg_gap (nats)")
    _save(fig, path)


def _load_run_dir(path: Path):
    trace = TrainingTrace.load_csv(path / "trace.csv")
    meta = {}
    meta_path = path / "run.toml"
    if meta_path.exists():
        with open(meta_path, "rb") as fh:
            meta = _toml.load(fh)
    return trace, meta


def _read_summary_csv(path: Path):
    with open(path) as fh:
        return [{k: float(v) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def build_report(inputs, out_dir) -> Path:
    """Collect train-run and sweep directories into figures plus report.md.

    A train-run directory holds trace.csv (and optionally run.toml with
    reference values); a sweep directory holds summary.csv. Directories
    missing both are rejected.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs, sweeps = [], []
    for raw in inputs:
        path = Path(raw)
        if (path / "trace.csv").exists():
            runs.append((path.name, *_load_run_dir(path)))
        elif (path / "summary.csv").exists():
            sweeps.append((path.name, _read_summary_csv(path / "summary.csv")))
        else:
            raise ValidationError(f"{path} holds neither trace.csv nor summary.csv")
    if not runs and not sweeps:
        raise ValidationError("no run or sweep directories given")

    lines = ["# Run report", ""]
    if runs:
        reference = next((meta.get("reference", {}).get("bayes_risk")
                          for _, _, meta in runs
                          if meta.get("reference", {}).get("bayes_risk") is not None),
                         None)
        curves = [(label, trace) for label, trace, _ in runs]
        render_learning_curves(curves, reference, out_dir / "learning_curves.svg")
        render_accuracy_curves(curves, out_dir / "accuracy.svg")
        lines += ["## Training runs", "",
                  "![learning curves](learning_curves.svg)", "",
                  "![accuracy](accuracy.svg)", ""]
        if any(trace.has_distance for _, trace in curves):
            render_distance_curves(curves, out_dir / "distance.svg")
            lines += ["![distance to optimum](distance.svg)", ""]
        lines += ["| run | final iteration | gen error | accuracy | bayes risk |",
                  "| --- | --- | --- | --- | --- |"]
        for label, trace, meta in runs:
            bayes = meta.get("reference", {}).get("bayes_risk")
            bayes_cell = f"{bayes:.6f}" if bayes is not None else "-"
            lines.append(f"| {label} | {int(trace.iterations[-1])} | "
                         f"{trace.gen_error[-1]:.6f} | {trace.accuracy[-1]:.4f} | "
                         f"{bayes_cell} |")
        lines.append("")

    for label, rows in sweeps:
        lines += [f"## Sweep: {label}", ""]
        eps_points = [(row["epsilon"], row["avg_gap"]) for row in rows
                      if np.isfinite(row.get("epsilon", float("nan")))]
        if len({e for e, _ in eps_points}) >= 2:
            fig_name = f"sweep_{label}.svg"
            c, r2 = render_sweep_fit(eps_points, out_dir / fig_name)
            lines += [f"![sweep fit]({fig_name})", "",
                      f"Fitted avg_gap = c/(1+epsilon) with c = {c:.6g}, "
                      f"R^2 = {r2:.4f}.", ""]
        else:
            lams = [row["lambda"] for row in rows]
            if len(set(lams)) >= 2:
                fig_name = f"sweep_{label}.svg"
                render_sweep_points(lams, [row["avg_gap"] for row in rows],
                                    "lambda", out_dir / fig_name)
                lines += [f"![sweep points]({fig_name})", ""]
        lines += ["| epsilon | lambda | L_avg | sigma_L | avg_gap | "
                  "noise formula | noise direct |",
                  "| --- | --- | --- | --- | --- | --- | --- |"]
        for row in rows:
            lines.append(f"| {row['epsilon']:g} | {row['lambda']:g} | "
                         f"{row['L_avg']:.6f} | {row['sigma_L']:.6f} | "
                         f"{row['avg_gap']:.6f} | {row['grad_noise_formula']:.6g} | "
                         f"{row['grad_noise_mc']:.6g} |")
        lines.append("")

    report_path = out_dir / "report.md"
    with open(report_path, "w") as fh:
        fh.write("\n".join(lines))
    return report_path
