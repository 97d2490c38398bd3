"""Teacher models for distillation: the posterior oracle, a single trained
network, and an ensemble that averages member probabilities.

Ensemble predictions average member outputs after the softmax, which is what
a Monte-Carlo average over stochastic forward passes produces; the ensemble
is therefore the desk-scale stand-in for a stochastic teacher.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, TaskSpec, true_bcp, true_bcp_batch
from .errors import ConfigError, ValidationError
from .network import (Architecture, NetworkParams, forward, forward_batch,
                      load_checkpoint, save_checkpoint)
from .rng import RngStream


class TeacherKind:
    """Marker base class for teacher variants."""


@dataclass(frozen=True)
class Oracle(TeacherKind):
    """Emits the true posterior; temperature is ignored (the idealized
    teacher is analyzed unsmoothed)."""


@dataclass(eq=False, frozen=True)
class Deterministic(TeacherKind):
    params: NetworkParams


@dataclass(eq=False, frozen=True)
class Ensemble(TeacherKind):
    members: tuple = field()

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if len(self.members) < 1:
            raise ValidationError("ensemble needs at least one member")
        arch = self.members[0].arch
        if any(m.arch != arch for m in self.members):
            raise ValidationError("ensemble members must share one architecture")

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class TeacherRegistry:
    """Context for resolving Teacher supervision: the task (needed by the
    oracle) and an optional default teacher kind."""

    task: TaskSpec | None = None
    kind: TeacherKind | None = None


def resolve_teacher(spec, registry) -> tuple[TeacherKind, TaskSpec | None]:
    kind = spec.kind if spec.kind is not None else (registry.kind if registry else None)
    if kind is None:
        raise ConfigError("teacher supervision requested but no teacher registered")
    task = registry.task if registry else None
    if isinstance(kind, Oracle) and task is None:
        raise ConfigError("oracle teacher requires the task in the registry")
    return kind, task


def train_teacher(dataset: Dataset, arch: Architecture, config,
                  stream: RngStream) -> NetworkParams:
    """Train a network with one-hot supervision and return it frozen.

    The passed stream's seed drives initialization and batch sampling;
    supervision in `config` is overridden to one-hot. Zero iterations returns
    the initialization untouched.
    """
    from dataclasses import replace

    from .supervision import OneHot
    from .training import train

    cfg = replace(config, supervision=OneHot(), seed=stream.seed,
                  track_distance_to=None)
    params, _ = train(dataset, dataset, arch, cfg)
    return params


def predict(kind: TeacherKind, spec: TaskSpec | None, x,
            temperature: float = 1.0) -> np.ndarray:
    """One soft-label vector for input x."""
    if isinstance(kind, Oracle):
        return true_bcp(spec, x)
    if isinstance(kind, Deterministic):
        return forward(kind.params, x, temperature)
    if isinstance(kind, Ensemble):
        acc = forward(kind.members[0], x, temperature).copy()
        for m in kind.members[1:]:
            acc += forward(m, x, temperature)
        acc /= len(kind.members)
        return acc / acc.sum()
    raise ValidationError(f"unknown teacher kind {kind!r}")


def predict_batch(kind: TeacherKind, spec: TaskSpec | None, X,
                  temperature: float = 1.0) -> np.ndarray:
    if isinstance(kind, Oracle):
        return true_bcp_batch(spec, X)
    if isinstance(kind, Deterministic):
        return forward_batch(kind.params, X, temperature)
    if isinstance(kind, Ensemble):
        acc = forward_batch(kind.members[0], X, temperature).copy()
        for m in kind.members[1:]:
            acc += forward_batch(m, X, temperature)
        acc /= len(kind.members)
        return acc / acc.sum(axis=1, keepdims=True)
    raise ValidationError(f"unknown teacher kind {kind!r}")


def teacher_quality(kind: TeacherKind, spec: TaskSpec | None,
                    dataset: Dataset) -> float:
    """Mean squared L2 distance between predictions and true posteriors.

    The empirical analogue of the teacher's noise level; 0 for the oracle.
    """
    q = predict_batch(kind, spec, dataset.inputs, 1.0)
    return float(((q - dataset.true_bcps) ** 2).sum(axis=1).mean())


_MANIFEST = "ensemble.manifest"


def save_teacher(kind: TeacherKind, out_dir) -> None:
    """Checkpoints plus, for ensembles, a manifest listing member files."""
    os.makedirs(out_dir, exist_ok=True)
    if isinstance(kind, Oracle):
        with open(os.path.join(out_dir, "oracle.marker"), "w") as fh:
            fh.write("oracle\n")
        return
    if isinstance(kind, Deterministic):
        save_checkpoint(kind.params, os.path.join(out_dir, "teacher.ckpt"))
        return
    if isinstance(kind, Ensemble):
        names = []
        for i, m in enumerate(kind.members):
            name = f"member_{i:03d}.ckpt"
            save_checkpoint(m, os.path.join(out_dir, name))
            names.append(name)
        with open(os.path.join(out_dir, _MANIFEST), "w") as fh:
            fh.write("\n".join(names) + "\n")
        return
    raise ValidationError(f"unknown teacher kind {kind!r}")


def load_teacher(out_dir) -> TeacherKind:
    if os.path.exists(os.path.join(out_dir, "oracle.marker")):
        return Oracle()
    manifest = os.path.join(out_dir, _MANIFEST)
    if os.path.exists(manifest):
        with open(manifest) as fh:
            names = [line.strip() for line in fh if line.strip()]
        return Ensemble(tuple(load_checkpoint(os.path.join(out_dir, n)) for n in names))
    single = os.path.join(out_dir, "teacher.ckpt")
    if os.path.exists(single):
        return Deterministic(load_checkpoint(single))
    raise ValidationError(f"{out_dir}: no teacher artifacts found")
