"""Command-line interface.

Subcommands: gen (sample a task and dataset), train (one training run),
sweep (seeded grid of runs with a summary CSV), verify (numerical
self-checks), report (figures plus markdown from finished runs), and
print-defaults (a complete starting config).

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
failure during a run, 3 verification failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import DEFAULT_TOML, load_config
from .data import (bayes_optimum_linear, bayes_risk, generate, load_dataset,
                   oracle_error, sample_task, save_dataset, split, subset)
from .errors import ConfigError, NumericError, ValidationError, \
    VerificationError
from .network import Architecture, save_checkpoint
from .rng import new_stream
from .training import TrainConfig, train

WORKERS_ENV = "BCP_DISTILL_WORKERS"


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad usage through the normal error path
    (exit code 1) instead of its built-in exit(2)."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bcp-distill",
                     description="Train softmax classifiers against exact, "
                                 "noisy, or teacher-derived class posteriors "
                                 "on a synthetic Gaussian-mixture task, and "
                                 "analyze the resulting gradient noise.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="sample a task and dataset to a file")
    gen.add_argument("--config", required=True, help="experiment TOML")
    gen.add_argument("--out", required=True, help="output dataset path")
    gen.set_defaults(func=cmd_gen)

    tr = sub.add_parser("train", help="run one training configuration")
    tr.add_argument("--config", required=True, help="experiment TOML")
    tr.add_argument("--data", required=True, help="dataset file from gen")
    tr.add_argument("--out", required=True, help="output directory")
    tr.set_defaults(func=cmd_train)

    sw = sub.add_parser("sweep", help="run the configured parameter sweep")
    sw.add_argument("--config", required=True, help="experiment TOML with [sweep]")
    sw.add_argument("--data", required=True, help="dataset file from gen")
    sw.add_argument("--out", required=True, help="output directory")
    sw.add_argument("--workers", type=int, default=None,
                    help=f"parallel processes (default: ${WORKERS_ENV} "
                         f"or the CPU count)")
    sw.set_defaults(func=cmd_sweep)

    ver = sub.add_parser("verify", help="run numerical self-checks")
    ver.add_argument("--level", choices=("quick", "full"), default="quick",
                     help="quick: identity checks (<1 min); full: adds "
                          "multi-seed training orderings")
    ver.set_defaults(func=cmd_verify)

    rep = sub.add_parser("report", help="render figures and a markdown summary")
    rep.add_argument("dirs", nargs="+",
                     help="train-run directories (trace.csv) or sweep "
                          "directories (summary.csv)")
    rep.add_argument("--out", required=True, help="output directory")
    rep.set_defaults(func=cmd_report)

    pd = sub.add_parser("print-defaults",
                        help="write a complete default config to stdout")
    pd.set_defaults(func=cmd_print_defaults)
    return parser


def _resolve_workers(requested) -> int:
    if requested is not None:
        value = requested
    elif os.environ.get(WORKERS_ENV):
        try:
            value = int(os.environ[WORKERS_ENV])
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got "
                              f"{os.environ[WORKERS_ENV]!r}")
    else:
        value = os.cpu_count() or 1
    if value < 1:
        raise ConfigError(f"workers must be >= 1, got {value}")
    return value


def cmd_gen(args) -> int:
    config = load_config(args.config)
    task = config.task
    stream = new_stream(task.data_seed)
    spec = sample_task(task.num_classes, task.input_dim, task.noise_variance,
                       stream.child("task"))
    dataset = generate(spec, task.n, stream.child("data"))
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, out)
    print(f"wrote {out}: n={task.n} K={task.num_classes} d={task.input_dim} "
          f"sigma2={task.noise_variance:g} "
          f"bayes_risk~{bayes_risk(spec, dataset):.4f}")
    return 0


def _prepare_run(config, data_path):
    from .sweep import _check_task_matches
    dataset = load_dataset(data_path)
    _check_task_matches(config, dataset)
    train_ds, test_ds = split(dataset, config.task.split,
                              new_stream(config.task.data_seed).child("split"))
    eval_ds = test_ds
    if config.training.eval_subset is not None:
        eval_ds = subset(test_ds, np.arange(min(config.training.eval_subset,
                                                len(test_ds))))
    return dataset, train_ds, eval_ds


def cmd_train(args) -> int:
    from .sweep import _involves_teacher, build_teacher_kind
    from .teachers import TeacherRegistry, save_teacher, teacher_quality

    config = load_config(args.config)
    dataset, train_ds, eval_ds = _prepare_run(config, args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    registry = None
    quality = None
    if _involves_teacher(config.supervision):
        if config.teachers is None:
            raise ConfigError("teacher supervision requires a [teachers] block")
        kind = build_teacher_kind(config.teachers, train_ds,
                                  new_stream(config.teachers.seed))
        registry = TeacherRegistry(task=dataset.spec, kind=kind)
        save_teacher(kind, out_dir / "teacher")
        quality = teacher_quality(kind, dataset.spec, eval_ds)

    ref = bayes_optimum_linear(dataset.spec) if config.training.track_distance \
        else None
    train_config = TrainConfig(
        learning_rate=config.training.alpha,
        iterations=config.training.iterations,
        supervision=config.supervision,
        seed=config.training.seed,
        batch_size=config.training.batch_size,
        eval_interval=config.training.eval_interval,
        temperature_student=config.training.temperature_student,
        track_distance_to=ref)
    arch = Architecture(dataset.spec.input_dim, config.student.hidden,
                        dataset.spec.num_classes)
    try:
        params, trace = train(train_ds, eval_ds, arch, train_config,
                              teachers=registry)
    except NumericError as exc:
        partial = getattr(exc, "partial_trace", None)
        if partial is not None and len(partial):
            partial.save_csv(out_dir / "trace.csv")
        raise
    trace.save_csv(out_dir / "trace.csv")
    save_checkpoint(params, out_dir / "checkpoint.bin")

    risk = bayes_risk(dataset.spec, eval_ds)
    l_perf = oracle_error(eval_ds)
    _write_run_toml(out_dir / "run.toml", trace, risk, l_perf, quality)
    with open(args.config) as fh:
        (out_dir / "config.toml").write_text(fh.read())

    print(f"wrote {out_dir}: final gen_error {trace.gen_error[-1]:.6f} "
          f"(bayes risk {risk:.6f}), accuracy {trace.accuracy[-1]:.4f}")
    return 0


def _write_run_toml(path, trace, risk, l_perf, quality) -> None:
    lines = ["[reference]",
             f"bayes_risk = {risk:.17g}",
             f"oracle_error = {l_perf:.17g}"]
    if quality is not None:
        lines.append(f"teacher_quality = {quality:.17g}")
    lines += ["",
              "[result]",
              f"final_iteration = {int(trace.iterations[-1])}",
              f"final_train_loss = {trace.train_loss[-1]:.17g}",
              f"final_gen_error = {trace.gen_error[-1]:.17g}",
              f"final_accuracy = {trace.accuracy[-1]:.17g}"]
    if trace.has_distance:
        lines.append(f"final_sq_dist = {trace.sq_dist[-1]:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_sweep(args) -> int:
    from .sweep import run_sweep
    config = load_config(args.config)
    workers = _resolve_workers(args.workers)
    rows = run_sweep(config, args.data, args.out, workers=workers)
    print(f"wrote {Path(args.out) / 'summary.csv'}: {len(rows)} grid points, "
          f"{config.sweep.seeds_per_point} seeds each, workers={workers}")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_checks
    started = time.perf_counter()
    results = run_checks(args.level)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status} {result.name}: {result.detail}")
    elapsed = time.perf_counter() - started
    failures = sum(not r.passed for r in results)
    print(f"{len(results) - failures}/{len(results)} checks passed "
          f"in {elapsed:.1f} s")
    if failures:
        raise VerificationError(f"{failures} of {len(results)} checks failed")
    return 0


def cmd_report(args) -> int:
    from .report import build_report
    path = build_report(args.dirs, args.out)
    print(f"wrote {path}")
    return 0


def cmd_print_defaults(args) -> int:
    sys.stdout.write(DEFAULT_TOML)
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except VerificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
