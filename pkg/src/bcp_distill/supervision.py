"""Training-target providers: one-hot labels, true posteriors, noisy
posteriors (additive Gaussian or Dirichlet), convex mixtures, and
temperature-scaled teacher outputs.

Noisy variants resample fresh noise at every visit of a sample by default;
setting `freeze_noise` pins each sample's noise by drawing it from a child
stream keyed on the sample index, so the same index always sees the same
target. Targets are plain real vectors: additive noise may leave the simplex,
which is fine because cross-entropy is linear in its second argument.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ValidationError
from .network import P_MIN
from .rng import RngStream, sample_dirichlet


class SupervisionSpec:
    """Marker base class for the tagged supervision variants."""


@dataclass(frozen=True)
class OneHot(SupervisionSpec):
    pass


@dataclass(frozen=True)
class TrueBCP(SupervisionSpec):
    pass


@dataclass(frozen=True)
class AdditiveNoise(SupervisionSpec):
    nu: float
    freeze_noise: bool = False

    def __post_init__(self):
        if not self.nu >= 0:
            raise ValidationError(f"nu must be >= 0, got {self.nu}")


@dataclass(frozen=True)
class Dirichlet(SupervisionSpec):
    epsilon: float
    freeze_noise: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True)
class Mixture(SupervisionSpec):
    lam: float
    soft: SupervisionSpec

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValidationError(f"lambda must lie in [0, 1], got {self.lam}")
        if isinstance(self.soft, (OneHot, Mixture)):
            raise ValidationError("mixture nests exactly one soft (non-one-hot) source")


@dataclass(eq=False, frozen=True)
class Teacher(SupervisionSpec):
    temperature: float
    kind: object = field(default=None)  # TeacherKind, or None to use the registry's

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValidationError(f"temperature must be > 0, got {self.temperature}")


def one_hot(label: int, num_classes: int) -> np.ndarray:
    if num_classes < 2:
        raise ValidationError(f"num_classes must be >= 2, got {num_classes}")
    if not 0 <= label < num_classes:
        raise ValidationError(f"label {label} out of range for K={num_classes}")
    t = np.zeros(num_classes)
    t[label] = 1.0
    return t


def additive_noise_target(bcp, nu: float, stream: RngStream) -> np.ndarray:
    """bcp + iid N(0, nu) per entry; may leave the simplex."""
    if not nu >= 0:
        raise ValidationError(f"nu must be >= 0, got {nu}")
    bcp = np.asarray(bcp, dtype=np.float64)
    if nu == 0.0:
        return bcp.copy()
    return bcp + stream.normal(0.0, np.sqrt(nu), size=bcp.shape[0])


def dirichlet_target(bcp, epsilon: float, stream: RngStream) -> np.ndarray:
    """One draw from Dir(epsilon * bcp); unbiased, floored at P_MIN."""
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon}")
    bcp = np.maximum(np.asarray(bcp, dtype=np.float64), P_MIN)
    draw = sample_dirichlet(stream, epsilon * bcp)
    if draw.min() < P_MIN:
        draw = np.maximum(draw, P_MIN)
        draw /= draw.sum()
    return draw


def mixture_target(label: int, soft, lam: float) -> np.ndarray:
    """(1 - lambda) * one_hot(label) + lambda * soft."""
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda must lie in [0, 1], got {lam}")
    soft = np.asarray(soft, dtype=np.float64)
    return (1.0 - lam) * one_hot(label, soft.shape[0]) + lam * soft


def _frozen_stream(stream: RngStream, index) -> RngStream:
    if index is None:
        raise ConfigError("freeze_noise requires a sample index")
    return stream.child(f"sample/{int(index)}")


def next_target(spec: SupervisionSpec, sample, teachers, stream: RngStream,
                index=None) -> np.ndarray:
    """Dispatch one target draw for sample = (x, label, bcp).

    `teachers` is a TeacherRegistry (may be None for teacher-free specs);
    `index` identifies the sample for freeze_noise.
    """
    x, label, bcp = sample
    if isinstance(spec, OneHot):
        return one_hot(int(label), np.asarray(bcp).shape[0])
    if isinstance(spec, TrueBCP):
        return np.array(bcp, dtype=np.float64, copy=True)
    if isinstance(spec, AdditiveNoise):
        src = _frozen_stream(stream, index) if spec.freeze_noise else stream
        return additive_noise_target(bcp, spec.nu, src)
    if isinstance(spec, Dirichlet):
        src = _frozen_stream(stream, index) if spec.freeze_noise else stream
        return dirichlet_target(bcp, spec.epsilon, src)
    if isinstance(spec, Mixture):
        soft = next_target(spec.soft, sample, teachers, stream, index)
        return mixture_target(int(label), soft, spec.lam)
    if isinstance(spec, Teacher):
        from .teachers import predict, resolve_teacher
        kind, task = resolve_teacher(spec, teachers)
        return predict(kind, task, np.asarray(x, dtype=np.float64), spec.temperature)
    raise ValidationError(f"unknown supervision spec {spec!r}")


def _resampled_labels(bcps: np.ndarray, stream: RngStream) -> np.ndarray:
    """Draw labels ~ Categorical(bcp row) for each row."""
    u = stream.uniform(bcps.shape[0])
    cum = np.cumsum(bcps, axis=1)
    return np.minimum((cum < u[:, None]).sum(axis=1), bcps.shape[1] - 1)


def batch_targets(spec: SupervisionSpec, X, labels, bcps, teachers,
                  stream: RngStream, indices=None,
                  resample_labels: bool = False) -> np.ndarray:
    """Vectorized targets for a batch of samples.

    With resample_labels=True the one-hot (and mixture hard-part) labels are
    redrawn from each sample's posterior instead of using the stored label;
    this is what a Monte-Carlo estimate of the expected gradient noise needs,
    since the expectation runs over the data law at fixed inputs.
    """
    bcps = np.asarray(bcps, dtype=np.float64)
    n, k = bcps.shape
    eye = np.eye(k)
    if isinstance(spec, OneHot):
        y = _resampled_labels(bcps, stream) if resample_labels else np.asarray(labels)
        return eye[y].copy()
    if isinstance(spec, TrueBCP):
        return bcps.copy()
    if isinstance(spec, AdditiveNoise):
        if spec.freeze_noise:
            return np.stack([
                additive_noise_target(bcps[i], spec.nu, _frozen_stream(stream, idx))
                for i, idx in enumerate(_require_indices(indices, n))
            ])
        if spec.nu == 0.0:
            return bcps.copy()
        return bcps + stream.normal(0.0, np.sqrt(spec.nu), size=(n, k))
    if isinstance(spec, Dirichlet):
        if spec.freeze_noise:
            return np.stack([
                dirichlet_target(bcps[i], spec.epsilon, _frozen_stream(stream, idx))
                for i, idx in enumerate(_require_indices(indices, n))
            ])
        conc = spec.epsilon * np.maximum(bcps, P_MIN)
        draws = stream.standard_gamma(conc)
        totals = draws.sum(axis=1, keepdims=True)
        if np.any(totals <= 0.0):
            from .errors import NumericError
            raise NumericError("all Gamma variates underflowed to zero")
        draws /= totals
        low = draws.min(axis=1) < P_MIN
        if np.any(low):
            draws[low] = np.maximum(draws[low], P_MIN)
            draws[low] /= draws[low].sum(axis=1, keepdims=True)
        return draws
    if isinstance(spec, Mixture):
        soft = batch_targets(spec.soft, X, labels, bcps, teachers, stream,
                             indices, resample_labels)
        y = _resampled_labels(bcps, stream) if resample_labels else np.asarray(labels)
        return (1.0 - spec.lam) * eye[y] + spec.lam * soft
    if isinstance(spec, Teacher):
        from .teachers import predict_batch, resolve_teacher
        kind, task = resolve_teacher(spec, teachers)
        return predict_batch(kind, task, np.asarray(X, dtype=np.float64), spec.temperature)
    raise ValidationError(f"unknown supervision spec {spec!r}")


def _require_indices(indices, n):
    if indices is None:
        raise ConfigError("freeze_noise requires sample indices")
    indices = np.asarray(indices)
    if indices.shape != (n,):
        raise ValidationError(f"expected {n} sample indices, got shape {indices.shape}")
    return indices
