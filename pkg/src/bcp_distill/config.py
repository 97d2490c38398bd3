"""TOML experiment configuration: parsing, validation, and printable
defaults.

Every seed must be stated explicitly; a config without seeds is rejected so
that no run depends on hidden state. Validation errors name the offending
dotted key (TOML syntax errors already carry line numbers).
"""

from __future__ import annotations

from dataclasses import dataclass, field

try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python 3.10
    import tomli as _toml

from .errors import ConfigError
from .supervision import (AdditiveNoise, Dirichlet, Mixture, OneHot,
                          SupervisionSpec, Teacher, TrueBCP)

_REQUIRED = object()

SWEEP_PARAMETERS = ("epsilon", "lambda", "alpha", "members")


@dataclass(frozen=True)
class TaskConfig:
    num_classes: int
    input_dim: int
    noise_variance: float
    n: int
    split: float
    data_seed: int


@dataclass(frozen=True)
class StudentConfig:
    hidden: tuple[int, ...]


@dataclass(frozen=True)
class TrainingConfigSection:
    alpha: float
    iterations: int
    seed: int
    batch_size: int = 1
    eval_interval: int = 500
    temperature_student: float = 1.0
    track_distance: bool = False
    eval_subset: int | None = None


@dataclass(frozen=True)
class TeacherTrainingSection:
    alpha: float
    iterations: int
    batch_size: int = 1


@dataclass(frozen=True)
class TeachersConfig:
    kind: str
    seed: int
    members: int = 1
    hidden: tuple[int, ...] = ()
    training: TeacherTrainingSection | None = None


@dataclass(frozen=True)
class SweepConfig:
    parameter: str
    values: tuple[float, ...]
    seeds_per_point: int
    t0: int = 20000
    w: int = 500
    n_tail: int | None = None
    noise_samples: int = 2000
    noise_draws: int = 50


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskConfig
    student: StudentConfig
    training: TrainingConfigSection
    supervision: SupervisionSpec
    teachers: TeachersConfig | None = None
    sweep: SweepConfig | None = None


def _get(table: dict, key: str, kinds, path: str, default=_REQUIRED):
    if key not in table:
        if default is _REQUIRED:
            raise ConfigError(f"missing required key '{path}.{key}'")
        return default
    value = table[key]
    if kinds is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kinds) or isinstance(value, bool) and kinds is not bool:
        raise ConfigError(f"key '{path}.{key}' has the wrong type "
                          f"({type(value).__name__})")
    return value


def _no_extras(table: dict, known, path: str):
    for key in table:
        if key not in known:
            raise ConfigError(f"unknown key '{path}.{key}'")


def _parse_hidden(table: dict, path: str):
    hidden = _get(table, "hidden", list, path, default=[])
    if not all(isinstance(h, int) and not isinstance(h, bool) and h >= 1 for h in hidden):
        raise ConfigError(f"key '{path}.hidden' must be a list of positive integers")
    return tuple(hidden)


def _parse_supervision(table: dict, path: str = "supervision",
                       nested: bool = False) -> SupervisionSpec:
    kind = _get(table, "kind", str, path)
    if kind == "onehot":
        _no_extras(table, {"kind"}, path)
        if nested:
            raise ConfigError(f"'{path}' must be a soft (non-one-hot) source")
        return OneHot()
    if kind == "true_bcp":
        _no_extras(table, {"kind"}, path)
        return TrueBCP()
    if kind == "additive":
        _no_extras(table, {"kind", "nu", "freeze_noise"}, path)
        return AdditiveNoise(_get(table, "nu", float, path),
                             _get(table, "freeze_noise", bool, path, default=False))
    if kind == "dirichlet":
        _no_extras(table, {"kind", "epsilon", "freeze_noise"}, path)
        return Dirichlet(_get(table, "epsilon", float, path),
                         _get(table, "freeze_noise", bool, path, default=False))
    if kind == "mixture":
        if nested:
            raise ConfigError(f"'{path}' cannot nest another mixture")
        _no_extras(table, {"kind", "lambda", "soft"}, path)
        soft_table = _get(table, "soft", dict, path)
        soft = _parse_supervision(soft_table, path + ".soft", nested=True)
        return Mixture(_get(table, "lambda", float, path), soft)
    if kind == "teacher":
        _no_extras(table, {"kind", "temperature"}, path)
        return Teacher(_get(table, "temperature", float, path, default=1.0))
    raise ConfigError(f"key '{path}.kind' must be one of onehot, true_bcp, "
                      f"additive, dirichlet, mixture, teacher (got '{kind}')")


def _parse_teachers(table: dict) -> TeachersConfig:
    path = "teachers"
    _no_extras(table, {"kind", "seed", "members", "hidden", "training"}, path)
    kind = _get(table, "kind", str, path)
    if kind not in ("oracle", "deterministic", "ensemble"):
        raise ConfigError(f"key '{path}.kind' must be oracle, deterministic, "
                          f"or ensemble (got '{kind}')")
    members = _get(table, "members", int, path, default=1)
    if members < 1:
        raise ConfigError(f"key '{path}.members' must be >= 1")
    seed = _get(table, "seed", int, path, default=None)
    training = None
    if kind != "oracle":
        if seed is None:
            raise ConfigError(f"missing required key '{path}.seed'")
        ttable = _get(table, "training", dict, path)
        tpath = path + ".training"
        _no_extras(ttable, {"alpha", "iterations", "batch_size"}, tpath)
        training = TeacherTrainingSection(
            alpha=_get(ttable, "alpha", float, tpath),
            iterations=_get(ttable, "iterations", int, tpath),
            batch_size=_get(ttable, "batch_size", int, tpath, default=1))
    return TeachersConfig(kind, seed if seed is not None else 0, members,
                          _parse_hidden(table, path), training)


def _parse_sweep(table: dict) -> SweepConfig:
    path = "sweep"
    _no_extras(table, {"parameter", "values", "seeds_per_point", "t0", "w",
                       "n_tail", "noise_samples", "noise_draws"}, path)
    parameter = _get(table, "parameter", str, path)
    if parameter == "S":
        parameter = "members"
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"key '{path}.parameter' must be one of "
                          f"{', '.join(SWEEP_PARAMETERS)} (got '{parameter}')")
    raw_values = _get(table, "values", list, path)
    if not raw_values:
        raise ConfigError(f"key '{path}.values' must be non-empty")
    values = []
    for v in raw_values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"key '{path}.values' must contain numbers")
        values.append(float(v))
    seeds_per_point = _get(table, "seeds_per_point", int, path)
    if seeds_per_point < 1:
        raise ConfigError(f"key '{path}.seeds_per_point' must be >= 1")
    n_tail = _get(table, "n_tail", int, path, default=None)
    return SweepConfig(parameter, tuple(values), seeds_per_point,
                       t0=_get(table, "t0", int, path, default=20000),
                       w=_get(table, "w", int, path, default=500),
                       n_tail=n_tail,
                       noise_samples=_get(table, "noise_samples", int, path, default=2000),
                       noise_draws=_get(table, "noise_draws", int, path, default=50))


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc
    _no_extras(doc, {"task", "student", "training", "supervision", "teachers",
                     "sweep"}, "config")

    t = _get(doc, "task", dict, "config")
    _no_extras(t, {"num_classes", "input_dim", "noise_variance", "n", "split",
                   "data_seed"}, "task")
    task = TaskConfig(
        num_classes=_get(t, "num_classes", int, "task"),
        input_dim=_get(t, "input_dim", int, "task"),
        noise_variance=_get(t, "noise_variance", float, "task"),
        n=_get(t, "n", int, "task"),
        split=_get(t, "split", float, "task", default=0.5),
        data_seed=_get(t, "data_seed", int, "task"))
    if task.num_classes < 2 or task.input_dim < 1 or task.n < 2:
        raise ConfigError("task requires num_classes >= 2, input_dim >= 1, n >= 2")
    if not task.noise_variance > 0:
        raise ConfigError("key 'task.noise_variance' must be > 0")
    if not 0 < task.split < 1:
        raise ConfigError("key 'task.split' must lie in (0, 1)")

    student = StudentConfig(_parse_hidden(_get(doc, "student", dict, "config",
                                               default={}), "student"))

    tr = _get(doc, "training", dict, "config")
    _no_extras(tr, {"alpha", "iterations", "seed", "batch_size", "eval_interval",
                    "temperature_student", "track_distance", "eval_subset"},
               "training")
    eval_subset = _get(tr, "eval_subset", int, "training", default=None)
    training = TrainingConfigSection(
        alpha=_get(tr, "alpha", float, "training"),
        iterations=_get(tr, "iterations", int, "training"),
        seed=_get(tr, "seed", int, "training"),
        batch_size=_get(tr, "batch_size", int, "training", default=1),
        eval_interval=_get(tr, "eval_interval", int, "training", default=500),
        temperature_student=_get(tr, "temperature_student", float, "training",
                                 default=1.0),
        track_distance=_get(tr, "track_distance", bool, "training", default=False),
        eval_subset=eval_subset)
    if not training.alpha > 0:
        raise ConfigError("key 'training.alpha' must be > 0")
    if training.iterations < 1:
        raise ConfigError("key 'training.iterations' must be >= 1")
    if training.track_distance and student.hidden:
        raise ConfigError("training.track_distance requires a linear student "
                          "(student.hidden = [])")

    supervision = _parse_supervision(_get(doc, "supervision", dict, "config"))

    teachers = None
    if "teachers" in doc:
        teachers = _parse_teachers(doc["teachers"])
    if isinstance(supervision, Teacher) and teachers is None:
        raise ConfigError("supervision.kind = 'teacher' requires a [teachers] block")

    sweep = _parse_sweep(doc["sweep"]) if "sweep" in doc else None
    if sweep is not None:
        _check_sweep_compatibility(sweep, supervision, teachers)
    return ExperimentConfig(task, student, training, supervision, teachers, sweep)


def _check_sweep_compatibility(sweep: SweepConfig, supervision: SupervisionSpec,
                               teachers: TeachersConfig | None):
    if sweep.parameter == "epsilon":
        soft = supervision.soft if isinstance(supervision, Mixture) else supervision
        if not isinstance(soft, Dirichlet):
            raise ConfigError("an epsilon sweep requires dirichlet supervision "
                              "(possibly inside a mixture)")
        if any(v <= 0 for v in sweep.values):
            raise ConfigError("epsilon sweep values must be > 0")
    elif sweep.parameter == "lambda":
        if not isinstance(supervision, Mixture):
            raise ConfigError("a lambda sweep requires mixture supervision")
        if any(not 0 <= v <= 1 for v in sweep.values):
            raise ConfigError("lambda sweep values must lie in [0, 1]")
    elif sweep.parameter == "alpha":
        if any(v <= 0 for v in sweep.values):
            raise ConfigError("alpha sweep values must be > 0")
    elif sweep.parameter == "members":
        if teachers is None or teachers.kind != "ensemble":
            raise ConfigError("a members sweep requires an ensemble [teachers] block")
        if any(v < 1 or v != int(v) for v in sweep.values):
            raise ConfigError("members sweep values must be positive integers")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


DEFAULT_TOML = """\
# Default experiment configuration. Seeds are mandatory: a config that
# omits task.data_seed or training.seed is rejected.

[task]
num_classes = 5
input_dim = 30
noise_variance = 2.5
n = 50000
split = 0.5
data_seed = 1

[student]
hidden = [128, 128]    # [] gives the linear-softmax student

[training]
alpha = 5e-4
iterations = 45000
batch_size = 1
eval_interval = 500
temperature_student = 1.0
seed = 11
track_distance = false # linear students only: log squared distance to the
                       # closed-form optimum
# eval_subset = 2000   # evaluate on the first k test rows only

[supervision]
kind = "true_bcp"      # onehot | true_bcp | additive | dirichlet | mixture | teacher
# kind = "dirichlet"; epsilon = 0.5; freeze_noise = false
# kind = "additive"; nu = 0.01
# kind = "mixture" needs `lambda` here plus a [supervision.soft] table:
# lambda = 0.474
# [supervision.soft]
# kind = "dirichlet"
# epsilon = 5.0

# Teacher-distilled supervision ('kind = "teacher"' above plus temperature):
# [teachers]
# kind = "ensemble"    # oracle | deterministic | ensemble
# members = 5
# hidden = []
# seed = 21
# [teachers.training]
# alpha = 5e-3
# iterations = 4000
# batch_size = 1

# Parameter sweep (used by the sweep subcommand):
# [sweep]
# parameter = "epsilon"  # epsilon | lambda | alpha | members
# values = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0]
# seeds_per_point = 5
# t0 = 20000
# w = 500
# noise_samples = 2000
# noise_draws = 50
"""
