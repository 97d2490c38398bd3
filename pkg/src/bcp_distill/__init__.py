"""Deterministic study of SGD trained against class-posterior targets.

Softmax classifiers are trained on a synthetic Gaussian-mixture task whose
posteriors are known in closed form, under supervision ranging from sampled
one-hot labels through noisy or exact posteriors to distilled teacher
outputs. The analysis half quantifies the gradient noise each supervision
injects at the optimum, both in closed form and by direct simulation, and
reduces training traces to plateau and convergence statistics.
"""

from .analysis import (BoundConstants, GradientNoiseEstimate, TailMetrics,
                       avg_gap, bound_overlay, fit_inverse_eps, fit_mu,
                       grad_noise_additive_formula,
                       grad_noise_dirichlet_formula, grad_noise_formula_for,
                       grad_noise_mc, grad_noise_onehot_formula, tail_metrics)
from .config import (DEFAULT_TOML, ExperimentConfig, load_config,
                     parse_config)
from .data import (Dataset, TaskSpec, bayes_optimum_linear, bayes_risk,
                   export_csv, generate, load_dataset, oracle_error,
                   sample_task, save_dataset, split, subset, true_bcp,
                   true_bcp_batch)
from .errors import (BcpDistillError, ConfigError, NumericError, ShapeError,
                     ValidationError, VerificationError)
from .network import (Architecture, NetworkParams, backward, ce_loss, forward,
                      forward_batch, grad_sq_norms, init_params,
                      jacobian_columns, load_checkpoint, save_checkpoint,
                      squared_distance)
from .rng import RngStream, new_stream, sample_dirichlet, sample_gaussian
from .supervision import (AdditiveNoise, Dirichlet, Mixture, OneHot,
                          SupervisionSpec, Teacher, TrueBCP, batch_targets,
                          next_target)
from .teachers import (Deterministic, Ensemble, Oracle, TeacherRegistry,
                       load_teacher, predict, predict_batch, save_teacher,
                       teacher_quality, train_teacher)
from .training import TrainConfig, TrainingTrace, evaluate, sgd_step, train

__version__ = "0.1.0"

__all__ = [
    "AdditiveNoise", "Architecture", "BcpDistillError", "BoundConstants",
    "ConfigError", "DEFAULT_TOML", "Dataset", "Deterministic", "Dirichlet",
    "Ensemble", "ExperimentConfig", "GradientNoiseEstimate", "Mixture",
    "NetworkParams", "NumericError", "OneHot", "Oracle", "RngStream",
    "ShapeError", "SupervisionSpec", "TailMetrics", "TaskSpec", "Teacher",
    "TeacherRegistry", "TrainConfig", "TrainingTrace", "TrueBCP",
    "ValidationError", "VerificationError", "avg_gap", "backward",
    "batch_targets", "bayes_optimum_linear", "bayes_risk", "bound_overlay",
    "ce_loss", "evaluate", "export_csv", "fit_inverse_eps", "fit_mu",
    "forward", "forward_batch", "generate", "grad_noise_additive_formula",
    "grad_noise_dirichlet_formula", "grad_noise_formula_for", "grad_noise_mc",
    "grad_noise_onehot_formula", "grad_sq_norms", "init_params",
    "jacobian_columns", "load_checkpoint", "load_config", "load_dataset",
    "load_teacher", "new_stream", "next_target", "oracle_error",
    "parse_config", "predict", "predict_batch", "sample_dirichlet",
    "sample_gaussian", "sample_task", "save_checkpoint", "save_dataset",
    "save_teacher", "sgd_step", "split", "squared_distance", "subset",
    "tail_metrics", "teacher_quality", "train", "train_teacher", "true_bcp",
    "true_bcp_batch",
]
