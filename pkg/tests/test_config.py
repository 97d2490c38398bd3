import pytest

from bcp_distill import (ConfigError, DEFAULT_TOML, Dirichlet, Mixture,
                         OneHot, Teacher, TrueBCP, load_config, parse_config)
from bcp_distill.supervision import AdditiveNoise

BASE = """\
[task]
num_classes = 3
input_dim = 4
noise_variance = 2.0
n = 100
data_seed = 7

[training]
alpha = 0.01
iterations = 100
seed = 9

[supervision]
kind = "true_bcp"
"""

TEACHER_BLOCK = """
[teachers]
kind = "ensemble"
members = 3
seed = 21
[teachers.training]
alpha = 0.005
iterations = 50
"""


def swap(text, old, new):
    assert old in text
    return text.replace(old, new)


def expect_error(text, fragment):
    with pytest.raises(ConfigError) as excinfo:
        parse_config(text)
    assert fragment in str(excinfo.value)


# ---------------------------------------------------------------- happy path

def test_default_toml_parses():
    cfg = parse_config(DEFAULT_TOML)
    assert cfg.task.num_classes == 5
    assert cfg.task.input_dim == 30
    assert cfg.task.noise_variance == 2.5
    assert cfg.task.data_seed == 1
    assert cfg.student.hidden == (128, 128)
    assert cfg.training.alpha == 5e-4
    assert cfg.training.seed == 11
    assert isinstance(cfg.supervision, TrueBCP)
    assert cfg.teachers is None
    assert cfg.sweep is None


def test_minimal_config_defaults():
    cfg = parse_config(BASE)
    assert cfg.student.hidden == ()
    assert cfg.task.split == 0.5
    assert cfg.training.batch_size == 1
    assert cfg.training.eval_interval == 500
    assert cfg.training.eval_subset is None
    assert not cfg.training.track_distance


def test_integer_accepted_where_float_expected():
    cfg = parse_config(swap(BASE, "noise_variance = 2.0", "noise_variance = 2"))
    assert cfg.task.noise_variance == 2.0


# ---------------------------------------------------------------- key errors

def test_missing_seeds_are_named():
    expect_error(swap(BASE, "data_seed = 7\n", ""), "task.data_seed")
    expect_error(swap(BASE, "seed = 9\n", ""), "training.seed")


def test_wrong_type_is_named():
    expect_error(swap(BASE, "num_classes = 3", 'num_classes = "three"'),
                 "task.num_classes")
    expect_error(swap(BASE, "alpha = 0.01", "alpha = true"), "training.alpha")


def test_unknown_keys_rejected_at_every_level():
    expect_error(BASE + "\n[extra]\nx = 1\n", "config.extra")
    expect_error(swap(BASE, "data_seed = 7", "data_seed = 7\nwhatever = 1"),
                 "task.whatever")
    expect_error(swap(BASE, "seed = 9", "seed = 9\nmomentum = 0.9"),
                 "training.momentum")
    expect_error(swap(BASE, 'kind = "true_bcp"', 'kind = "true_bcp"\nnu = 1.0'),
                 "supervision.nu")


def test_toml_syntax_error_wrapped():
    expect_error("[task\nnum_classes = 3", "TOML syntax error")


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


# ---------------------------------------------------------------- validation

def test_task_bounds():
    expect_error(swap(BASE, "num_classes = 3", "num_classes = 1"), "task")
    expect_error(swap(BASE, "noise_variance = 2.0", "noise_variance = 0.0"),
                 "task.noise_variance")
    expect_error(swap(BASE, "data_seed = 7", "data_seed = 7\nsplit = 1.0"),
                 "task.split")


def test_training_bounds():
    expect_error(swap(BASE, "alpha = 0.01", "alpha = 0.0"), "training.alpha")
    expect_error(swap(BASE, "iterations = 100", "iterations = 0"),
                 "training.iterations")


def test_track_distance_requires_linear_student():
    text = swap(BASE, "seed = 9", "seed = 9\ntrack_distance = true")
    assert parse_config(text).training.track_distance
    expect_error(text + "\n[student]\nhidden = [8]\n", "track_distance")


# ---------------------------------------------------------------- supervision

def test_supervision_kinds_parse():
    for kind, extra, expected in (
            ("onehot", "", OneHot()),
            ("additive", "nu = 0.01", AdditiveNoise(0.01)),
            ("dirichlet", "epsilon = 0.5", Dirichlet(0.5)),
            ("dirichlet", "epsilon = 0.5\nfreeze_noise = true",
             Dirichlet(0.5, freeze_noise=True))):
        text = swap(BASE, 'kind = "true_bcp"', f'kind = "{kind}"\n{extra}')
        assert parse_config(text).supervision == expected


def test_supervision_missing_parameter_named():
    expect_error(swap(BASE, 'kind = "true_bcp"', 'kind = "additive"'),
                 "supervision.nu")
    expect_error(swap(BASE, 'kind = "true_bcp"', 'kind = "dirichlet"'),
                 "supervision.epsilon")
    expect_error(swap(BASE, 'kind = "true_bcp"', 'kind = "bogus"'),
                 "supervision.kind")


def test_mixture_parses_with_soft_table():
    text = swap(BASE, 'kind = "true_bcp"',
                'kind = "mixture"\nlambda = 0.4\n[supervision.soft]\n'
                'kind = "dirichlet"\nepsilon = 5.0')
    sup = parse_config(text).supervision
    assert sup == Mixture(0.4, Dirichlet(5.0))


def test_mixture_rejects_one_hot_and_nested_mixture_soft():
    expect_error(swap(BASE, 'kind = "true_bcp"',
                      'kind = "mixture"\nlambda = 0.4\n[supervision.soft]\n'
                      'kind = "onehot"'), "supervision.soft")
    expect_error(swap(BASE, 'kind = "true_bcp"',
                      'kind = "mixture"\nlambda = 0.4\n[supervision.soft]\n'
                      'kind = "mixture"'), "supervision.soft")


def test_teacher_supervision_requires_teachers_block():
    text = swap(BASE, 'kind = "true_bcp"', 'kind = "teacher"\ntemperature = 2.0')
    expect_error(text, "[teachers]")
    cfg = parse_config(text + TEACHER_BLOCK)
    assert isinstance(cfg.supervision, Teacher)
    assert cfg.supervision.temperature == 2.0
    assert cfg.teachers.kind == "ensemble"
    assert cfg.teachers.members == 3
    assert cfg.teachers.training.alpha == 0.005


def test_oracle_teachers_need_no_seed_or_training():
    text = BASE + "\n[teachers]\nkind = \"oracle\"\n"
    cfg = parse_config(text)
    assert cfg.teachers.kind == "oracle"
    assert cfg.teachers.training is None


def test_trained_teachers_need_seed_and_training():
    expect_error(BASE + '\n[teachers]\nkind = "deterministic"\n'
                 '[teachers.training]\nalpha = 0.01\niterations = 10\n',
                 "teachers.seed")
    expect_error(BASE + '\n[teachers]\nkind = "deterministic"\nseed = 3\n',
                 "teachers.training")
    expect_error(BASE + '\n[teachers]\nkind = "parrot"\nseed = 3\n',
                 "teachers.kind")
    expect_error(BASE + '\n[teachers]\nkind = "ensemble"\nseed = 3\nmembers = 0\n',
                 "teachers.members")


# ---------------------------------------------------------------- sweep

def sweep_text(parameter, values, supervision='kind = "dirichlet"\nepsilon = 1.0',
               tail=""):
    text = swap(BASE, 'kind = "true_bcp"', supervision)
    return text + (f"\n[sweep]\nparameter = \"{parameter}\"\n"
                   f"values = {values}\nseeds_per_point = 2\n") + tail


def test_epsilon_sweep_parses():
    cfg = parse_config(sweep_text("epsilon", "[0.5, 1.0, 2.0]"))
    assert cfg.sweep.parameter == "epsilon"
    assert cfg.sweep.values == (0.5, 1.0, 2.0)
    assert cfg.sweep.t0 == 20000
    assert cfg.sweep.w == 500


def test_sweep_parameter_alias_s_means_members():
    text = sweep_text("S", "[1, 3, 5]",
                      supervision='kind = "teacher"\ntemperature = 1.0',
                      tail=TEACHER_BLOCK)
    assert parse_config(text).sweep.parameter == "members"


def test_sweep_validation():
    expect_error(sweep_text("epsilon", "[0.5]",
                            supervision='kind = "onehot"'), "epsilon sweep")
    expect_error(sweep_text("epsilon", "[0.5, -1.0]"), "must be > 0")
    expect_error(sweep_text("lambda", "[0.0, 0.5]"), "lambda sweep")
    expect_error(sweep_text("lambda", "[0.0, 1.5]",
                            supervision='kind = "mixture"\nlambda = 0.4\n'
                            '[supervision.soft]\nkind = "true_bcp"'),
                 "lambda sweep values")
    expect_error(sweep_text("alpha", "[0.1, 0.0]"), "alpha sweep")
    expect_error(sweep_text("members", "[1, 2]"), "members sweep")
    expect_error(sweep_text("members", "[1, 2.5]",
                            supervision='kind = "teacher"\ntemperature = 1.0',
                            tail=TEACHER_BLOCK), "members sweep values")
    expect_error(sweep_text("bogus", "[1, 2]"), "sweep.parameter")
    expect_error(sweep_text("epsilon", "[]"), "non-empty")
    expect_error(sweep_text("epsilon", '["a"]'), "numbers")
    expect_error(sweep_text("epsilon", "[0.5, 1.0]").replace(
        "seeds_per_point = 2", "seeds_per_point = 0"), "seeds_per_point")


def test_lambda_sweep_on_mixture_parses():
    text = sweep_text("lambda", "[0.0, 0.5, 1.0]",
                      supervision='kind = "mixture"\nlambda = 0.4\n'
                      '[supervision.soft]\nkind = "true_bcp"')
    assert parse_config(text).sweep.values == (0.0, 0.5, 1.0)
