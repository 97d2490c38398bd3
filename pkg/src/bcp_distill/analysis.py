"""Derived quantities: gradient-noise estimators (closed forms and the
Monte-Carlo oracle), tail-window metrics, the average-gap metric,
inverse-epsilon curve fitting, and convergence-bound overlays.

The closed forms weight per-class Jacobian-column norms by inverse (squared)
posterior probabilities; probabilities are clamped at P_MIN before inverting
because the weights are otherwise unbounded on tail inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ValidationError
from .network import NetworkParams, P_MIN, grad_sq_norms, jacobian_sq_norms
from .rng import RngStream
from .supervision import (AdditiveNoise, Dirichlet, Mixture, OneHot,
                          SupervisionSpec, Teacher, TrueBCP, batch_targets)
from .training import TrainingTrace

_CHUNK = 8192


@dataclass(frozen=True)
class OneHotFormula:
    pass


@dataclass(frozen=True)
class NoisyFormula:
    nu: float


@dataclass(frozen=True)
class DirichletFormula:
    epsilon: float


@dataclass(eq=False, frozen=True)
class MonteCarlo:
    spec: SupervisionSpec
    draws: int


@dataclass(eq=False)
class GradientNoiseEstimate:
    value: float
    estimator: object
    params_at: str | None
    samples_used: int

    def __post_init__(self):
        if not self.value >= 0:
            raise ValidationError(f"gradient noise must be >= 0, got {self.value}")
        if isinstance(self.estimator, MonteCarlo) and self.estimator.draws < 1:
            raise ValidationError("Monte-Carlo draws must be >= 1")


@dataclass
class TailMetrics:
    l_avg: float
    acc_avg: float
    sigma_l: float
    sigma_acc: float
    n_tail: int
    w: int


@dataclass
class BoundConstants:
    """Curvature/smoothness constants for bound overlays.

    mu: strong-(quasi-)convexity constant; l_smooth: smoothness of the risk;
    l_smooth_exp: smoothness in expectation. The experiments never supply
    these, so they are user-supplied or empirically fitted (see fit_mu).
    """

    mu: float
    l_smooth: float = 1.0
    l_smooth_exp: float = 1.0
    provenance: str = "user-supplied"

    def __post_init__(self):
        if not (self.mu > 0 and self.l_smooth > 0 and self.l_smooth_exp > 0):
            raise ValidationError("bound constants must all be positive")


@dataclass
class BoundReport:
    iterations: np.ndarray
    measured: np.ndarray
    bound: np.ndarray
    fraction: float


def _weighted_jacobian_sum(params: NetworkParams, dataset: Dataset,
                           power: int) -> float:
    """(1/N) sum_n sum_k ||J_k(x_n)||^2 / P(y_k|x_n)^power, clamped."""
    total = 0.0
    n = len(dataset)
    for start in range(0, n, _CHUNK):
        rows = slice(start, min(start + _CHUNK, n))
        sq = jacobian_sq_norms(params, dataset.inputs[rows])
        p = np.maximum(dataset.true_bcps[rows], P_MIN)
        total += float((sq / p ** power).sum())
    return total / n


def grad_noise_onehot_formula(params: NetworkParams, dataset: Dataset) -> GradientNoiseEstimate:
    """Closed form for one-hot supervision: E[sum_k ||J_k||^2 / P(y_k|x)]."""
    value = _weighted_jacobian_sum(params, dataset, 1)
    return GradientNoiseEstimate(value, OneHotFormula(), None, len(dataset))


def grad_noise_additive_formula(params: NetworkParams, dataset: Dataset,
                                nu: float) -> GradientNoiseEstimate:
    """Closed form for additive noise: nu * E[sum_k ||J_k||^2 / P(y_k|x)^2]."""
    if not nu >= 0:
        raise ValidationError(f"nu must be >= 0, got {nu}")
    value = 0.0 if nu == 0.0 else nu * _weighted_jacobian_sum(params, dataset, 2)
    return GradientNoiseEstimate(value, NoisyFormula(nu), None, len(dataset))


def grad_noise_dirichlet_formula(params: NetworkParams, dataset: Dataset,
                                 epsilon: float) -> GradientNoiseEstimate:
    """Closed form for Dirichlet noise: the one-hot sum scaled by 1/(eps+1).

    Computed as literally that quotient so the identity with the one-hot
    formula holds to machine precision on equal inputs.
    """
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon}")
    value = _weighted_jacobian_sum(params, dataset, 1) / (epsilon + 1.0)
    return GradientNoiseEstimate(value, DirichletFormula(epsilon), None, len(dataset))


def grad_noise_formula_for(spec: SupervisionSpec, params: NetworkParams,
                           dataset: Dataset) -> float:
    """Closed-form gradient noise for any spec that has one, else nan.

    For mixtures, the hard and soft deviations are independent and zero-mean
    given x, so the cross term vanishes and
    sigma(mix) = (1-lam)^2 * sigma(one-hot) + lam^2 * sigma(soft).
    """
    if isinstance(spec, TrueBCP):
        return 0.0
    if isinstance(spec, OneHot):
        return grad_noise_onehot_formula(params, dataset).value
    if isinstance(spec, AdditiveNoise):
        return grad_noise_additive_formula(params, dataset, spec.nu).value
    if isinstance(spec, Dirichlet):
        return grad_noise_dirichlet_formula(params, dataset, spec.epsilon).value
    if isinstance(spec, Mixture):
        soft = grad_noise_formula_for(spec.soft, params, dataset)
        hard = grad_noise_onehot_formula(params, dataset).value
        return (1.0 - spec.lam) ** 2 * hard + spec.lam ** 2 * soft
    return float("nan")


def grad_noise_mc(spec: SupervisionSpec, params: NetworkParams, dataset: Dataset,
                  draws: int, stream: RngStream, teachers=None) -> GradientNoiseEstimate:
    """Direct estimator: average ||per-sample gradient||^2 over fresh target
    draws at fixed inputs.

    One-hot labels (also inside mixtures) are redrawn from each sample's
    posterior on every draw; the estimated expectation runs over the data
    law, not over the dataset's single label realization.
    """
    if draws < 1:
        raise ValidationError(f"draws must be >= 1, got {draws}")
    n = len(dataset)
    total = 0.0
    for _ in range(draws):
        for start in range(0, n, _CHUNK):
            rows = slice(start, min(start + _CHUNK, n))
            targets = batch_targets(spec, dataset.inputs[rows], dataset.labels[rows],
                                    dataset.true_bcps[rows], teachers, stream,
                                    indices=np.arange(rows.start, rows.stop),
                                    resample_labels=True)
            total += float(grad_sq_norms(params, dataset.inputs[rows], targets).sum())
    value = total / (draws * n)
    return GradientNoiseEstimate(value, MonteCarlo(spec, draws), None, n)


def _moving_average(vals: np.ndarray, w: int) -> np.ndarray:
    """Centered moving average spanning w//2 rows on each side, shrinking at
    the edges."""
    n = len(vals)
    half = w // 2
    csum = np.concatenate(([0.0], np.cumsum(vals)))
    lo = np.maximum(0, np.arange(n) - half)
    hi = np.minimum(n, np.arange(n) + half + 1)
    return (csum[hi] - csum[lo]) / (hi - lo)


def tail_metrics(trace: TrainingTrace, n_tail: int, w: int) -> TailMetrics:
    """Averages and moving-average RMS deviations over the last n_tail rows."""
    if not 1 <= w <= n_tail <= len(trace):
        raise ValidationError(
            f"need trace length ({len(trace)}) >= n_tail ({n_tail}) >= w ({w}) >= 1")
    losses = trace.gen_error[-n_tail:]
    accs = trace.accuracy[-n_tail:]
    sigma_l = float(np.sqrt(((losses - _moving_average(losses, w)) ** 2).mean()))
    sigma_acc = float(np.sqrt(((accs - _moving_average(accs, w)) ** 2).mean()))
    return TailMetrics(float(losses.mean()), float(accs.mean()),
                       sigma_l, sigma_acc, n_tail, w)


def avg_gap(trace: TrainingTrace, t0: int, bayes_risk: float) -> float:
    """Mean of (gen_error - bayes_risk) over rows with iteration >= t0."""
    mask = trace.iterations >= t0
    if not mask.any():
        raise ValidationError(f"t0={t0} lies beyond the trace")
    return float((trace.gen_error[mask] - bayes_risk).mean())


def fit_inverse_eps(points) -> tuple[float, float]:
    """Least-squares c for metric ~ c/(1+eps), plus R^2 against that model."""
    pts = [(float(e), float(m)) for e, m in points]
    if len(pts) < 2 or len({e for e, _ in pts}) < 2:
        raise ValidationError("need >= 2 points with distinct epsilon")
    eps = np.array([e for e, _ in pts])
    y = np.array([m for _, m in pts])
    if np.any(eps <= -1):
        raise ValidationError("epsilon must exceed -1")
    x = 1.0 / (1.0 + eps)
    c = float((x * y).sum() / (x * x).sum())
    ss_res = float(((y - c * x) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:  # constant metric: perfect iff residual-free
        return c, 1.0 if ss_res == 0.0 else 0.0
    return c, 1.0 - ss_res / ss_tot


def fit_mu(trace: TrainingTrace, alpha: float, method: str = "secant") -> float:
    """Empirical contraction constant from a tracked distance curve.

    "secant": the single rate connecting the first row to the tail mean.
    The measured curve is a sum of decaying exponentials, so its log is
    convex and the secant bounds it from above everywhere between the
    endpoints; this is the fit a trace-wide overlay needs. "early": log-
    linear fit over the initial descent (steeper; valid only early).
    """
    if not trace.has_distance:
        raise ValidationError("trace has no sq_dist column")
    sq = trace.sq_dist
    t = trace.iterations.astype(np.float64)
    d0 = sq[0]
    if d0 <= 0:
        raise ValidationError("initial distance must be positive")
    if method == "secant":
        tail_n = max(2, len(sq) // 50)
        d_end = float(sq[-tail_n:].mean())
        if not 0 < d_end < d0:
            raise ValidationError("distance curve shows no decay to fit")
        rate = (d_end / d0) ** (1.0 / t[-1])
        return (1.0 - rate) / alpha
    if method == "early":
        descent = sq >= 0.01 * d0
        if descent.sum() < 2:
            raise ValidationError("no early descent region to fit")
        tt, ls = t[descent], np.log(sq[descent])
        slope = float(np.polyfit(tt, ls, 1)[0])
        if slope >= 0:
            raise ValidationError("distance curve shows no decay to fit")
        return (1.0 - np.exp(slope)) / alpha
    raise ValidationError(f"unknown fit method {method!r}")


def bound_overlay(trace: TrainingTrace, alpha: float, constants: BoundConstants,
                  neighborhood: float = 0.0) -> BoundReport:
    """Per-row bound (1 - alpha*mu)^t * d0 + neighborhood, and the fraction
    of rows where the measured distance stays at or below it."""
    if not trace.has_distance:
        raise ValidationError("trace has no sq_dist column")
    if not neighborhood >= 0:
        raise ValidationError(f"neighborhood must be >= 0, got {neighborhood}")
    if not 0 < alpha * constants.mu < 1:
        raise ValidationError(
            f"need 0 < alpha*mu < 1, got {alpha * constants.mu}")
    t = trace.iterations.astype(np.float64)
    bound = (1.0 - alpha * constants.mu) ** t * trace.sq_dist[0] + neighborhood
    fraction = float((trace.sq_dist <= bound).mean())
    return BoundReport(trace.iterations.copy(), trace.sq_dist.copy(), bound, fraction)
