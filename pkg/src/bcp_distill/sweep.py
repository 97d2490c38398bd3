"""Parameter sweeps: fan out seeded training runs over a grid, aggregate
tail statistics per grid point, and emit a flat summary CSV plus per-run
traces and a structured summary text file.

Runs are parallelized with a process pool when workers > 1; with workers = 1
everything executes inline in the calling process. Each worker loads the
dataset from disk once and caches the split, so jobs stay picklable and
cheap to ship. All derived seeds come from labeled child streams, which
makes reruns with identical configs byte-identical.

Per grid point the summary also reports closed-form gradient noise and its
Monte Carlo twin, both evaluated at the closed-form linear optimum on a
fixed subsample of the evaluation split. Teacher supervision has no closed
form, and its Monte Carlo value depends on per-rep teachers, so both noise
columns are nan in that case.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .analysis import avg_gap, fit_inverse_eps, grad_noise_formula_for, \
    grad_noise_mc, tail_metrics
from .config import ExperimentConfig, TeachersConfig
from .data import (Dataset, bayes_optimum_linear, bayes_risk, load_dataset,
                   oracle_error, split, subset)
from .errors import ConfigError
from .network import Architecture
from .rng import RngStream, new_stream
from .supervision import Dirichlet, Mixture, OneHot, SupervisionSpec, Teacher, \
    TrueBCP
from .teachers import (Deterministic, Ensemble, Oracle, TeacherKind,
                       TeacherRegistry, train_teacher)
from .training import TrainConfig, train

SUMMARY_COLUMNS = ("epsilon", "lambda", "L_avg", "ACC_avg", "sigma_L",
                   "sigma_ACC", "avg_gap", "grad_noise_formula",
                   "grad_noise_mc", "L_avg_std", "ACC_avg_std", "sigma_L_std",
                   "sigma_ACC_std", "avg_gap_std")


@dataclass(frozen=True)
class RunJob:
    """Picklable description of one training run inside a sweep."""

    dataset_path: str
    data_seed: int
    split_fraction: float
    eval_subset: int | None
    hidden: tuple[int, ...]
    alpha: float
    iterations: int
    batch_size: int
    eval_interval: int
    temperature_student: float
    supervision: SupervisionSpec
    teachers: TeachersConfig | None
    run_seed: int
    teacher_seed: int
    value: float
    rep: int
    t0: int
    n_tail: int | None
    w: int
    trace_path: str | None


@dataclass
class RunResult:
    value: float
    rep: int
    l_avg: float
    acc_avg: float
    sigma_l: float
    sigma_acc: float
    gap: float


@lru_cache(maxsize=4)
def _load_split(dataset_path: str, data_seed: int, split_fraction: float,
                eval_subset: int | None):
    dataset = load_dataset(dataset_path)
    train_ds, test_ds = split(dataset, split_fraction,
                              new_stream(data_seed).child("split"))
    eval_ds = test_ds
    if eval_subset is not None:
        eval_ds = subset(test_ds, np.arange(min(eval_subset, len(test_ds))))
    return train_ds, eval_ds


def build_teacher_kind(tcfg: TeachersConfig, train_ds: Dataset,
                       stream: RngStream) -> TeacherKind:
    """Materialize the configured teacher: the exact-posterior oracle needs
    no training; network teachers are fit on hard labels, one child stream
    per member."""
    if tcfg.kind == "oracle":
        return Oracle()
    arch = Architecture(train_ds.spec.input_dim, tcfg.hidden,
                        train_ds.spec.num_classes)
    tt = tcfg.training
    base = TrainConfig(learning_rate=tt.alpha, iterations=tt.iterations,
                       supervision=OneHot(), seed=0, batch_size=tt.batch_size,
                       eval_interval=max(1, tt.iterations))
    if tcfg.kind == "deterministic":
        return Deterministic(train_teacher(train_ds, arch, base,
                                           stream.child("member/0")))
    members = tuple(train_teacher(train_ds, arch, base,
                                  stream.child(f"member/{m}"))
                    for m in range(tcfg.members))
    return Ensemble(members)


def _involves_teacher(spec: SupervisionSpec) -> bool:
    if isinstance(spec, Teacher):
        return True
    return isinstance(spec, Mixture) and isinstance(spec.soft, Teacher)


def apply_sweep_value(supervision: SupervisionSpec,
                      teachers: TeachersConfig | None, alpha: float,
                      parameter: str, value: float):
    """Return (supervision, teachers, alpha) with one knob set to value."""
    if parameter == "epsilon":
        if isinstance(supervision, Mixture):
            supervision = replace(supervision,
                                  soft=replace(supervision.soft, epsilon=value))
        else:
            supervision = replace(supervision, epsilon=value)
    elif parameter == "lambda":
        supervision = replace(supervision, lam=value)
    elif parameter == "alpha":
        alpha = value
    elif parameter == "members":
        teachers = replace(teachers, members=int(value))
    else:
        raise ConfigError(f"unknown sweep parameter '{parameter}'")
    return supervision, teachers, alpha


def execute_run(job: RunJob) -> RunResult:
    """Train one student per the job and reduce its trace to tail metrics."""
    train_ds, eval_ds = _load_split(job.dataset_path, job.data_seed,
                                    job.split_fraction, job.eval_subset)
    registry = None
    if _involves_teacher(job.supervision):
        kind = build_teacher_kind(job.teachers, train_ds,
                                  new_stream(job.teacher_seed))
        registry = TeacherRegistry(task=train_ds.spec, kind=kind)
    arch = Architecture(train_ds.spec.input_dim, job.hidden,
                        train_ds.spec.num_classes)
    config = TrainConfig(learning_rate=job.alpha, iterations=job.iterations,
                         supervision=job.supervision, seed=job.run_seed,
                         batch_size=job.batch_size,
                         eval_interval=job.eval_interval,
                         temperature_student=job.temperature_student)
    _, trace = train(train_ds, eval_ds, arch, config, teachers=registry)
    if job.trace_path is not None:
        Path(job.trace_path).parent.mkdir(parents=True, exist_ok=True)
        trace.save_csv(job.trace_path)
    n_tail = job.n_tail if job.n_tail is not None else max(1, len(trace) // 5)
    tm = tail_metrics(trace, n_tail, min(job.w, n_tail))
    gap = avg_gap(trace, job.t0, oracle_error(eval_ds))
    return RunResult(job.value, job.rep, tm.l_avg, tm.acc_avg, tm.sigma_l,
                     tm.sigma_acc, gap)


def _eps_lambda(spec: SupervisionSpec) -> tuple[float, float]:
    """(epsilon, lambda) summary coordinates: lambda is the soft-target
    weight (0 for pure hard labels, 1 for pure soft), epsilon is nan unless
    simplex noise is in play."""
    if isinstance(spec, OneHot):
        return float("nan"), 0.0
    if isinstance(spec, Mixture):
        eps = spec.soft.epsilon if isinstance(spec.soft, Dirichlet) else float("nan")
        return eps, spec.lam
    eps = spec.epsilon if isinstance(spec, Dirichlet) else float("nan")
    return eps, 1.0


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def run_sweep(config: ExperimentConfig, dataset_path, out_dir, workers: int = 1):
    """Execute the configured sweep; return the list of summary-row dicts.

    Writes out_dir/summary.csv, out_dir/summary.txt, and per-run traces
    under out_dir/runs/.
    """
    if config.sweep is None:
        raise ConfigError("config has no [sweep] block")
    sw = config.sweep
    if sw.t0 > config.training.iterations:
        raise ConfigError("sweep.t0 must not exceed training.iterations")
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset_path = str(dataset_path)

    dataset = load_dataset(dataset_path)
    _check_task_matches(config, dataset)
    base = new_stream(config.training.seed)
    tbase = new_stream(config.teachers.seed) if config.teachers else base

    jobs = []
    for value in sw.values:
        supervision, teachers, alpha = apply_sweep_value(
            config.supervision, config.teachers, config.training.alpha,
            sw.parameter, value)
        for rep in range(sw.seeds_per_point):
            tag = f"{sw.parameter}={value:g}/rep={rep}"
            trace_path = out_dir / "runs" / f"{sw.parameter}={value:g}" / \
                f"rep{rep}" / "trace.csv"
            jobs.append(RunJob(
                dataset_path=dataset_path, data_seed=config.task.data_seed,
                split_fraction=config.task.split,
                eval_subset=config.training.eval_subset,
                hidden=config.student.hidden, alpha=alpha,
                iterations=config.training.iterations,
                batch_size=config.training.batch_size,
                eval_interval=config.training.eval_interval,
                temperature_student=config.training.temperature_student,
                supervision=supervision, teachers=teachers,
                run_seed=base.child("sweep/" + tag).seed,
                teacher_seed=tbase.child("sweep-teacher/" + tag).seed,
                value=value, rep=rep, t0=sw.t0, n_tail=sw.n_tail, w=sw.w,
                trace_path=str(trace_path)))

    if workers == 1:
        results = [execute_run(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(execute_run, jobs))

    train_ds, eval_ds = _load_split(dataset_path, config.task.data_seed,
                                    config.task.split,
                                    config.training.eval_subset)
    spec = dataset.spec
    optimum = bayes_optimum_linear(spec)
    noise_ds = subset(eval_ds, np.arange(min(sw.noise_samples, len(eval_ds))))

    summary_rows = []
    by_value = {value: [r for r in results if r.value == value]
                for value in sw.values}
    for value in sw.values:
        supervision, _, _ = apply_sweep_value(
            config.supervision, config.teachers, config.training.alpha,
            sw.parameter, value)
        if _involves_teacher(supervision):
            formula = mc = float("nan")
        else:
            formula = grad_noise_formula_for(supervision, optimum, noise_ds)
            mc = grad_noise_mc(
                supervision, optimum, noise_ds, sw.noise_draws,
                base.child(f"sweep-noise/{sw.parameter}={value:g}")).value
        eps, lam = _eps_lambda(supervision)
        got = by_value[value]
        l_mean, l_std = _mean_std([r.l_avg for r in got])
        a_mean, a_std = _mean_std([r.acc_avg for r in got])
        sl_mean, sl_std = _mean_std([r.sigma_l for r in got])
        sa_mean, sa_std = _mean_std([r.sigma_acc for r in got])
        g_mean, g_std = _mean_std([r.gap for r in got])
        summary_rows.append({
            "epsilon": eps, "lambda": lam, "L_avg": l_mean, "ACC_avg": a_mean,
            "sigma_L": sl_mean, "sigma_ACC": sa_mean, "avg_gap": g_mean,
            "grad_noise_formula": formula, "grad_noise_mc": mc,
            "L_avg_std": l_std, "ACC_avg_std": a_std, "sigma_L_std": sl_std,
            "sigma_ACC_std": sa_std, "avg_gap_std": g_std,
            "value": value})

    write_summary_csv(out_dir / "summary.csv", summary_rows)
    _write_summary_text(out_dir / "summary.txt", config, summary_rows,
                        bayes_risk(spec, eval_ds), oracle_error(eval_ds))
    return summary_rows


def _check_task_matches(config: ExperimentConfig, dataset: Dataset):
    spec, task = dataset.spec, config.task
    if (spec.num_classes != task.num_classes
            or spec.input_dim != task.input_dim
            or spec.noise_variance != task.noise_variance):
        raise ConfigError(
            f"dataset task (K={spec.num_classes}, d={spec.input_dim}, "
            f"sigma2={spec.noise_variance}) does not match the config task "
            f"(K={task.num_classes}, d={task.input_dim}, "
            f"sigma2={task.noise_variance})")


def write_summary_csv(path, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(f"{row[c]:.17g}" for c in SUMMARY_COLUMNS) + "\n")


def _write_summary_text(path, config: ExperimentConfig, rows,
                        bayes: float, l_perf: float) -> None:
    sw = config.sweep
    lines = ["[sweep]",
             f'parameter = "{sw.parameter}"',
             "values = [" + ", ".join(f"{v:g}" for v in sw.values) + "]",
             f"seeds_per_point = {sw.seeds_per_point}",
             f"t0 = {sw.t0}",
             "",
             "[reference]",
             f"bayes_risk = {bayes:.17g}",
             f"oracle_error = {l_perf:.17g}",
             ""]
    if sw.parameter == "epsilon" and len(sw.values) >= 2:
        c, r2 = fit_inverse_eps([(row["value"], row["avg_gap"]) for row in rows])
        lines += ["[fit]",
                  'model = "avg_gap ~ c / (1 + epsilon)"',
                  f"c = {c:.17g}",
                  f"r_squared = {r2:.17g}",
                  ""]
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
