"""Gaussian-mixture classification task with closed-form posteriors.

Classes have uniform priors and isotropic Gaussian class conditionals
N(mu_k, sigma^2 I) whose means have entries in {-1, 0, 1}. The posterior
P(y=k|x) is then a softmax over -||x - mu_k||^2 / (2 sigma^2), which a
linear-softmax model realizes exactly; `bayes_optimum_linear` returns that
realization in weight space. Datasets carry the posterior of every sample so
supervision providers and analysis never recompute it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError
from .network import Architecture, NetworkParams, P_MIN
from .rng import RngStream

_MAGIC = b"BCPD"
_VERSION = 1


@dataclass(eq=False)
class TaskSpec:
    """Mixture geometry: K class means in R^d plus the shared noise variance."""

    num_classes: int
    input_dim: int
    noise_variance: float
    class_means: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.class_means = np.asarray(self.class_means, dtype=np.float64)
        if self.num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_dim < 1:
            raise ValidationError(f"input_dim must be >= 1, got {self.input_dim}")
        if not self.noise_variance > 0:
            raise ValidationError(f"noise_variance must be > 0, got {self.noise_variance}")
        if self.class_means.shape != (self.num_classes, self.input_dim):
            raise ShapeError(
                f"class_means must have shape {(self.num_classes, self.input_dim)}, "
                f"got {self.class_means.shape}"
            )
        if not np.all(np.isin(self.class_means, (-1.0, 0.0, 1.0))):
            raise ValidationError("class mean entries must lie in {-1, 0, 1}")


@dataclass(eq=False)
class Dataset:
    """Aligned rows of inputs, integer labels, and true posteriors."""

    inputs: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    true_bcps: np.ndarray = field(repr=False)
    spec: TaskSpec

    def __post_init__(self):
        n = self.inputs.shape[0]
        if self.inputs.shape != (n, self.spec.input_dim):
            raise ShapeError(f"inputs shape {self.inputs.shape} does not match task")
        if self.labels.shape != (n,) or self.true_bcps.shape != (n, self.spec.num_classes):
            raise ShapeError("labels/true_bcps are not aligned with inputs")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def sample_task(num_classes: int, input_dim: int, noise_variance: float,
                stream: RngStream) -> TaskSpec:
    """Draw K mean vectors with entries uniform over {-1, 0, 1}."""
    if num_classes < 2 or input_dim < 1:
        raise ValidationError("need num_classes >= 2 and input_dim >= 1")
    if not noise_variance > 0:
        raise ValidationError(f"noise_variance must be > 0, got {noise_variance}")
    means = stream.integers(-1, 2, size=(num_classes, input_dim)).astype(np.float64)
    return TaskSpec(num_classes, input_dim, noise_variance, means)


def true_bcp_batch(spec: TaskSpec, X) -> np.ndarray:
    """Posterior rows for a batch, computed in log space with max subtraction."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ShapeError(f"inputs of dimension {spec.input_dim} expected, got {X.shape}")
    sq_dist = ((X[:, None, :] - spec.class_means[None, :, :]) ** 2).sum(axis=2)
    log_p = -sq_dist / (2.0 * spec.noise_variance)
    log_p -= log_p.max(axis=1, keepdims=True)
    p = np.exp(log_p)
    p /= p.sum(axis=1, keepdims=True)
    return p


def true_bcp(spec: TaskSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != spec.input_dim:
        raise ShapeError(f"input of dimension {spec.input_dim} expected, got {x.shape}")
    return true_bcp_batch(spec, x[None, :])[0]


def generate(spec: TaskSpec, n: int, stream: RngStream) -> Dataset:
    """label ~ Uniform(K); input ~ N(mu_label, sigma^2 I); posteriors attached."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    labels = stream.integers(0, spec.num_classes, size=n)
    noise = stream.normal(0.0, np.sqrt(spec.noise_variance), size=(n, spec.input_dim))
    inputs = spec.class_means[labels] + noise
    return Dataset(inputs, labels, true_bcp_batch(spec, inputs), spec)


def bayes_optimum_linear(spec: TaskSpec) -> NetworkParams:
    """Linear-softmax weights realizing the posterior exactly.

    Expanding -||x - mu_k||^2 / (2 s2) and dropping the class-independent
    ||x||^2 term gives logits W_k x + b_k with W_k = mu_k / s2 and
    b_k = -||mu_k||^2 / (2 s2).
    """
    s2 = spec.noise_variance
    w = spec.class_means / s2
    b = -(spec.class_means ** 2).sum(axis=1) / (2.0 * s2)
    arch = Architecture(spec.input_dim, (), spec.num_classes)
    return NetworkParams(arch, [(w, b)])


def bayes_risk(spec: TaskSpec, dataset: Dataset) -> float:
    """Monte-Carlo estimate of the conditional label entropy H(y|x)."""
    p = dataset.true_bcps
    ent = -(p * np.log(np.clip(p, 1e-300, None))).sum(axis=1)
    return float(ent.mean())


def oracle_error(dataset: Dataset) -> float:
    """Realized test cross-entropy of the perfect (posterior) predictor.

    This is the floor an ideal model attains on this particular sample; it
    estimates bayes_risk but shares the dataset's label draws, which makes it
    the right reference when differencing against a model evaluated on the
    same rows.
    """
    n = len(dataset)
    picked = dataset.true_bcps[np.arange(n), dataset.labels]
    return float(-np.log(np.clip(picked, P_MIN, None)).mean())


def split(dataset: Dataset, train_fraction: float, stream: RngStream):
    """Disjoint random partition preserving row alignment."""
    n = len(dataset)
    n_train = int(round(train_fraction * n))
    if not 0 < train_fraction < 1 or not 1 <= n_train <= n - 1:
        raise ValidationError(
            f"train_fraction {train_fraction} leaves an empty side for n={n}"
        )
    perm = stream.permutation(n)
    return subset(dataset, perm[:n_train]), subset(dataset, perm[n_train:])


def subset(dataset: Dataset, indices) -> Dataset:
    return Dataset(
        dataset.inputs[indices],
        dataset.labels[indices],
        dataset.true_bcps[indices],
        dataset.spec,
    )


def save_dataset(dataset: Dataset, path) -> None:
    """magic 'BCPD', u32 version, u32 K, u32 d, u64 N, f64 sigma2,
    then f64-LE means, inputs, i64-LE labels, f64-LE posteriors."""
    spec = dataset.spec
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIQd", _VERSION, spec.num_classes, spec.input_dim,
                             len(dataset), spec.noise_variance))
        fh.write(spec.class_means.astype("<f8").tobytes())
        fh.write(dataset.inputs.astype("<f8").tobytes())
        fh.write(dataset.labels.astype("<i8").tobytes())
        fh.write(dataset.true_bcps.astype("<f8").tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValidationError(f"{path}: not a dataset file")
        header = fh.read(struct.calcsize("<IIIQd"))
        version, k, d, n, s2 = struct.unpack("<IIIQd", header)
        if version != _VERSION:
            raise ValidationError(f"{path}: unsupported dataset version {version}")

        def block(count, dtype):
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValidationError(f"{path}: truncated dataset")
            return np.frombuffer(raw, dtype=dtype).astype(dtype.replace("<", "="))

        means = block(k * d, "<f8").reshape(k, d)
        inputs = block(n * d, "<f8").reshape(n, d)
        labels = block(n, "<i8")
        bcps = block(n * k, "<f8").reshape(n, k)
    spec = TaskSpec(k, d, s2, means)
    return Dataset(inputs, labels, bcps, spec)


def export_csv(dataset: Dataset, path) -> None:
    """Inspection-friendly CSV: x0..x{d-1}, label, p0..p{K-1}."""
    d, k = dataset.spec.input_dim, dataset.spec.num_classes
    header = ",".join([f"x{i}" for i in range(d)] + ["label"] + [f"p{i}" for i in range(k)])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(len(dataset)):
            cells = [f"{v:.17g}" for v in dataset.inputs[i]]
            cells.append(str(int(dataset.labels[i])))
            cells.extend(f"{v:.17g}" for v in dataset.true_bcps[i])
            fh.write(",".join(cells) + "\n")
