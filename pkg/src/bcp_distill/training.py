"""Plain-SGD training loop over any supervision spec, with periodic
evaluation, trace capture, and optional distance-to-reference logging.

One run is strictly sequential. Three child streams of the config seed keep
the sources of randomness independent: "init" (weights), "batch" (sample
indices, drawn as one block up front), and "noise" (supervision draws). A
mixture with lambda = 0 therefore reproduces the one-hot trace bit for bit:
noise draws never perturb batch selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import NumericError, ValidationError
from .network import (Architecture, NetworkParams, P_MIN, forward_batch,
                      init_params, mean_gradient, squared_distance)
from .rng import RngStream, new_stream
from .supervision import (AdditiveNoise, Dirichlet, Mixture, OneHot,
                          SupervisionSpec, Teacher, TrueBCP, batch_targets,
                          dirichlet_target)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    iterations: int
    supervision: SupervisionSpec
    seed: int
    batch_size: int = 1
    eval_interval: int = 500
    temperature_student: float = 1.0
    track_distance_to: NetworkParams | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.iterations < 0:
            raise ValidationError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.eval_interval < 1:
            raise ValidationError(f"eval_interval must be >= 1, got {self.eval_interval}")
        if self.iterations > 0 and self.eval_interval > self.iterations:
            raise ValidationError("eval_interval must not exceed iterations")
        if not self.temperature_student > 0:
            raise ValidationError("temperature_student must be > 0")


@dataclass
class TrainingTrace:
    """Columns of the learning curve; sq_dist present only when tracked."""

    iterations: np.ndarray
    train_loss: np.ndarray
    gen_error: np.ndarray
    accuracy: np.ndarray
    sq_dist: np.ndarray | None = None

    def __post_init__(self):
        if np.any(np.diff(self.iterations) <= 0):
            raise ValidationError("trace iterations must be strictly increasing")
        if not np.all(np.isfinite(self.gen_error)):
            raise ValidationError("generalization error must be finite at every row")

    def __len__(self) -> int:
        return len(self.iterations)

    @property
    def has_distance(self) -> bool:
        return self.sq_dist is not None

    def save_csv(self, path) -> None:
        cols = ["iteration", "train_loss", "gen_error", "accuracy"]
        if self.has_distance:
            cols.append("sq_dist")
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for i in range(len(self)):
                cells = [str(int(self.iterations[i])),
                         f"{self.train_loss[i]:.17g}",
                         f"{self.gen_error[i]:.17g}",
                         f"{self.accuracy[i]:.17g}"]
                if self.has_distance:
                    cells.append(f"{self.sq_dist[i]:.17g}")
                fh.write(",".join(cells) + "\n")

    @classmethod
    def load_csv(cls, path) -> "TrainingTrace":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            body = [line.strip().split(",") for line in fh if line.strip()]
        want = ["iteration", "train_loss", "gen_error", "accuracy"]
        if header[:4] != want or len(header) > 5 or (len(header) == 5 and header[4] != "sq_dist"):
            raise ValidationError(f"{path}: unexpected trace columns {header}")
        arr = np.array([[float(c) for c in row] for row in body])
        if arr.ndim != 2 or arr.shape[1] != len(header):
            raise ValidationError(f"{path}: ragged trace rows")
        sq = arr[:, 4] if len(header) == 5 else None
        return cls(arr[:, 0].astype(np.int64), arr[:, 1], arr[:, 2], arr[:, 3], sq)


def evaluate(params: NetworkParams, dataset: Dataset,
             temperature: float = 1.0) -> tuple[float, float]:
    """Mean one-hot CE and argmax accuracy on the dataset.

    argmax breaks ties toward the lowest class index.
    """
    if len(dataset) == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    q = forward_batch(params, dataset.inputs, temperature)
    picked = q[np.arange(len(dataset)), dataset.labels]
    gen_error = float(-np.log(np.clip(picked, P_MIN, None)).mean())
    accuracy = float((q.argmax(axis=1) == dataset.labels).mean())
    return gen_error, accuracy


def sgd_step(params: NetworkParams, batch, spec: SupervisionSpec, alpha: float,
             temperature_student: float, teachers, stream: RngStream) -> NetworkParams:
    """One update: params minus alpha times the mean per-sample gradient.

    batch is (X, labels, bcps) or (X, labels, bcps, indices); returns new
    params, leaving the input untouched.
    """
    x_batch, labels, bcps = batch[0], batch[1], batch[2]
    indices = batch[3] if len(batch) > 3 else None
    x_batch = np.atleast_2d(np.asarray(x_batch, dtype=np.float64))
    if x_batch.shape[0] == 0:
        raise ValidationError("empty batch")
    labels = np.atleast_1d(labels)
    bcps = np.atleast_2d(bcps)
    targets = batch_targets(spec, x_batch, labels, bcps, teachers, stream, indices)
    grads = mean_gradient(params, x_batch, targets, temperature_student)
    new_layers = []
    for (w, b), (gw, gb) in zip(params.layers, grads):
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericError("non-finite gradient in sgd_step")
        new_layers.append((w - alpha * gw, b - alpha * gb))
    return NetworkParams(params.arch, new_layers)


def _target_closure(spec: SupervisionSpec, x_train, y_train, p_train,
                    teachers, noise: RngStream):
    """Per-sample target function i -> vector, matching next_target draws.

    Specialized per variant so the hot loop pays no dispatch cost; teacher
    labels are produced on the fly (not precomputed) so memory stays flat.
    """
    k = p_train.shape[1]
    eye = np.eye(k)
    if isinstance(spec, TrueBCP):
        return lambda i: p_train[i]
    if isinstance(spec, OneHot):
        return lambda i: eye[y_train[i]]
    if isinstance(spec, AdditiveNoise):
        if spec.nu == 0.0:
            return lambda i: p_train[i]
        std = math.sqrt(spec.nu)
        if spec.freeze_noise:
            return lambda i: p_train[i] + noise.child(f"sample/{i}").normal(0.0, std, k)
        gen = noise.gen
        return lambda i: p_train[i] + gen.normal(0.0, std, k)
    if isinstance(spec, Dirichlet):
        if spec.freeze_noise:
            return lambda i: dirichlet_target(p_train[i], spec.epsilon,
                                              noise.child(f"sample/{i}"))
        conc = spec.epsilon * np.maximum(p_train, P_MIN)
        gen = noise.gen

        def dirichlet_fn(i):
            g = gen.standard_gamma(conc[i])
            total = g.sum()
            if total <= 0.0:
                raise NumericError("all Gamma variates underflowed to zero")
            g /= total
            if g.min() < P_MIN:
                g = np.maximum(g, P_MIN)
                g /= g.sum()
            return g

        return dirichlet_fn
    if isinstance(spec, Mixture):
        soft_fn = _target_closure(spec.soft, x_train, y_train, p_train, teachers, noise)
        lam = spec.lam
        return lambda i: (1.0 - lam) * eye[y_train[i]] + lam * soft_fn(i)
    if isinstance(spec, Teacher):
        from .teachers import predict, resolve_teacher
        kind, task = resolve_teacher(spec, teachers)
        temp = spec.temperature
        return lambda i: predict(kind, task, x_train[i], temp)
    raise ValidationError(f"unknown supervision spec {spec!r}")


def train(dataset_train: Dataset, dataset_test: Dataset, arch: Architecture,
          config: TrainConfig, teachers=None) -> tuple[NetworkParams, TrainingTrace]:
    """Run T iterations of SGD, evaluating every eval_interval iterations.

    Batches are drawn uniformly with replacement. Evaluation always uses
    temperature 1 (reported risk/accuracy are unsmoothed). On a numeric
    failure a NumericError is raised carrying the failing iteration and the
    partial trace in its `partial_trace` attribute.
    """
    if config.batch_size > len(dataset_train):
        raise ValidationError("batch_size exceeds the training set size")
    ref = config.track_distance_to
    if ref is not None and ref.arch != arch:
        raise ValidationError("track_distance_to architecture does not match the student")

    base = new_stream(config.seed)
    params = init_params(arch, base.child("init"))
    noise = base.child("noise")
    n_train = len(dataset_train)
    t_total, batch_size = config.iterations, config.batch_size
    idx = base.child("batch").integers(0, n_train, size=(max(t_total, 1), batch_size))

    x_train = dataset_train.inputs
    y_train = dataset_train.labels
    p_train = dataset_train.true_bcps
    alpha, temp = config.learning_rate, config.temperature_student

    rows_iter, rows_loss, rows_ge, rows_acc, rows_sq = [], [], [], [], []

    def partial() -> TrainingTrace:
        return TrainingTrace(
            np.array(rows_iter, dtype=np.int64), np.array(rows_loss),
            np.array(rows_ge), np.array(rows_acc),
            np.array(rows_sq) if ref is not None else None)

    def record(iteration: int, batch_loss: float):
        gen_error, accuracy = evaluate(params, dataset_test, 1.0)
        if not np.isfinite(gen_error):
            err = NumericError(f"non-finite generalization error at iteration {iteration}",
                               iteration=iteration)
            err.partial_trace = partial()
            raise err
        rows_iter.append(iteration)
        rows_loss.append(batch_loss)
        rows_ge.append(gen_error)
        rows_acc.append(accuracy)
        if ref is not None:
            rows_sq.append(squared_distance(params, ref))

    record(0, float("nan"))

    if batch_size == 1 and arch.is_linear:
        # Flat per-step path for the convex sub-case; the generic path below
        # computes the identical update.
        target_fn = _target_closure(config.supervision, x_train, y_train,
                                    p_train, teachers, noise)
        w, b = params.layers[0]
        interval = config.eval_interval
        flat_idx = idx[:, 0]
        for step in range(1, t_total + 1):
            i = flat_idx[step - 1]
            x = x_train[i]
            z = w @ x + b
            if temp != 1.0:
                z /= temp
            z -= z.max()
            np.exp(z, out=z)
            z /= z.sum()
            tg = target_fn(i)
            on_row = step % interval == 0
            if on_row:
                batch_loss = float(-(tg * np.log(np.clip(z, P_MIN, None))).sum())
            dz = z * tg.sum() - tg
            if temp != 1.0:
                dz /= temp
            w -= alpha * np.outer(dz, x)
            b -= alpha * dz
            if on_row:
                record(step, batch_loss)
        return params, partial()

    from .network import _forward_pass
    interval = config.eval_interval
    for step in range(1, t_total + 1):
        rows = idx[step - 1]
        xb = x_train[rows]
        targets = batch_targets(config.supervision, xb, y_train[rows],
                                p_train[rows], teachers, noise, indices=rows)
        acts, pres, q = _forward_pass(params, xb, temp)
        on_row = step % interval == 0
        if on_row:
            batch_loss = float(-(targets * np.log(np.clip(q, P_MIN, None))).sum()
                               / batch_size)
        d_logits = (q * targets.sum(axis=1, keepdims=True) - targets) / (temp * batch_size)
        deltas = [d_logits]
        for li in range(len(params.layers) - 1, 0, -1):
            deltas.append((deltas[-1] @ params.layers[li][0]) * (pres[li - 1] > 0))
        deltas.reverse()
        for (w, b), h, d in zip(params.layers, acts, deltas):
            w -= alpha * (d.T @ h)
            b -= alpha * d.sum(axis=0)
        if on_row:
            record(step, batch_loss)
    return params, partial()
