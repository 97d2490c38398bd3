"""Dense ReLU-softmax classifier with exact manual backpropagation.

All arithmetic is 64-bit. Probabilities are floored at P_MIN (then
renormalized) so cross-entropy and 1/p weights stay finite; the floor choice
keeps the per-class weights used by the gradient-noise estimators bounded.

Besides single-sample `forward`/`backward`, batched helpers compute
per-sample squared gradient norms and per-class Jacobian-column norms
without materializing full D-dimensional gradients: a per-sample gradient
with respect to a layer is the rank-1 outer product of its backpropagated
delta and the layer input, so its squared norm is
sum_l ||delta_l||^2 * (1 + ||h_{l-1}||^2).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError
from .rng import RngStream

P_MIN = 1e-12

_MAGIC = b"BCPN"
_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    """Layer sizes of a dense classifier; empty hidden_layers = linear softmax."""

    input_dim: int
    hidden_layers: tuple[int, ...]
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.input_dim < 1:
            raise ValidationError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {self.num_classes}")
        if any(h < 1 for h in self.hidden_layers):
            raise ValidationError("hidden layer sizes must be >= 1")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_layers, self.num_classes)

    @property
    def num_params(self) -> int:
        d = self.dims
        return sum(d[i + 1] * d[i] + d[i + 1] for i in range(len(d) - 1))

    @property
    def is_linear(self) -> bool:
        return not self.hidden_layers


@dataclass
class NetworkParams:
    """Per-layer (weight, bias) arrays, flattenable to a single vector."""

    arch: Architecture
    layers: list[tuple[np.ndarray, np.ndarray]] = field(repr=False)

    def __post_init__(self):
        d = self.arch.dims
        if len(self.layers) != len(d) - 1:
            raise ShapeError(f"expected {len(d) - 1} layers, got {len(self.layers)}")
        for i, (w, b) in enumerate(self.layers):
            if w.shape != (d[i + 1], d[i]) or b.shape != (d[i + 1],):
                raise ShapeError(
                    f"layer {i}: expected W {(d[i + 1], d[i])} and b {(d[i + 1],)}, "
                    f"got {w.shape} and {b.shape}"
                )

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in self.layers])

    @classmethod
    def from_flat(cls, arch: Architecture, theta: np.ndarray) -> "NetworkParams":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (arch.num_params,):
            raise ShapeError(f"expected {arch.num_params} parameters, got {theta.shape}")
        d = arch.dims
        layers, pos = [], 0
        for i in range(len(d) - 1):
            n_w = d[i + 1] * d[i]
            w = theta[pos:pos + n_w].reshape(d[i + 1], d[i]).copy()
            pos += n_w
            b = theta[pos:pos + d[i + 1]].copy()
            pos += d[i + 1]
            layers.append((w, b))
        return cls(arch, layers)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.arch, [(w.copy(), b.copy()) for w, b in self.layers])


def init_params(arch: Architecture, stream: RngStream) -> NetworkParams:
    """He-scaled Gaussian weights, zero biases; deterministic given the seed."""
    layers = []
    d = arch.dims
    for i in range(len(d) - 1):
        std = np.sqrt(2.0 / d[i])
        w = stream.gen.normal(0.0, std, size=(d[i + 1], d[i]))
        layers.append((w, np.zeros(d[i + 1])))
    return NetworkParams(arch, layers)


def zero_params(arch: Architecture) -> NetworkParams:
    layers = [(np.zeros((o, i)), np.zeros(o)) for i, o in zip(arch.dims, arch.dims[1:])]
    return NetworkParams(arch, layers)


def _clamp_probs(q: np.ndarray) -> np.ndarray:
    """Floor entries at P_MIN and renormalize (only when the floor bites)."""
    if q.min() < P_MIN:
        q = np.maximum(q, P_MIN)
        q = q / q.sum(axis=-1, keepdims=True)
    return q


def _check_input(arch: Architecture, x: np.ndarray, batched: bool) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    want = 2 if batched else 1
    if x.ndim != want or x.shape[-1] != arch.input_dim:
        raise ShapeError(f"input of dimension {arch.input_dim} expected, got shape {x.shape}")
    return x


def _forward_pass(params: NetworkParams, X: np.ndarray, temperature: float):
    """Return (hidden activations [H0..H_{L-1}], pre-activations, probs)."""
    acts = [X]
    pres = []
    h = X
    n_layers = len(params.layers)
    for i, (w, b) in enumerate(params.layers):
        a = h @ w.T + b
        if i < n_layers - 1:
            pres.append(a)
            h = np.maximum(a, 0.0)
            acts.append(h)
        else:
            z = a / temperature
    z = z - z.max(axis=-1, keepdims=True)
    q = np.exp(z)
    q /= q.sum(axis=-1, keepdims=True)
    return acts, pres, _clamp_probs(q)


def forward(params: NetworkParams, x, temperature: float = 1.0) -> np.ndarray:
    """softmax(logits / temperature), floored and renormalized."""
    if not temperature > 0:
        raise ValidationError(f"temperature must be > 0, got {temperature}")
    x = _check_input(params.arch, x, batched=False)
    _, _, q = _forward_pass(params, x[None, :], temperature)
    return q[0]

def forward_batch(params: NetworkParams, X, temperature: float = 1.0) -> np.ndarray:
    if not temperature > 0:
        raise ValidationError(f"temperature must be > 0, got {temperature}")
    X = _check_input(params.arch, X, batched=True)
    _, _, q = _forward_pass(params, X, temperature)
    return q


def ce_loss(probs, target) -> float:
    """Cross-entropy -sum_k target_k log probs_k; linear in the target."""
    p = np.clip(np.asarray(probs, dtype=np.float64), P_MIN, None)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"probs shape {p.shape} != target shape {t.shape}")
    return float(-(t * np.log(p)).sum())


def _backprop_deltas(params: NetworkParams, pres, d_logits):
    """Backpropagate logit-space deltas; yields per-layer deltas top-down."""
    deltas = [d_logits]
    for i in range(len(params.layers) - 1, 0, -1):
        w, _ = params.layers[i]
        d_prev = (deltas[-1] @ w) * (pres[i - 1] > 0)
        deltas.append(d_prev)
    deltas.reverse()
    return deltas


def backward(params: NetworkParams, x, target, temperature: float = 1.0) -> np.ndarray:
    """Exact gradient of ce_loss(forward(params, x, T), target) w.r.t. flat params.

    Uses the softmax shortcut d_z = (q * sum(t) - t) / T, valid for any real
    target vector because cross-entropy is linear in its second argument.
    """
    if not temperature > 0:
        raise ValidationError(f"temperature must be > 0, got {temperature}")
    x = _check_input(params.arch, x, batched=False)
    t = np.asarray(target, dtype=np.float64)
    if t.shape != (params.arch.num_classes,):
        raise ShapeError(f"target of length {params.arch.num_classes} expected, got {t.shape}")
    acts, pres, q = _forward_pass(params, x[None, :], temperature)
    d_logits = (q * t.sum() - t[None, :]) / temperature
    deltas = _backprop_deltas(params, pres, d_logits)
    pieces = []
    for h, d in zip(acts, deltas):
        pieces.append(np.outer(d[0], h[0]).ravel())
        pieces.append(d[0])
    return np.concatenate(pieces)


def mean_gradient(params: NetworkParams, X, targets, temperature: float = 1.0):
    """Mean per-sample gradient over a batch, as per-layer (gW, gb) arrays."""
    X = _check_input(params.arch, X, batched=True)
    t = np.asarray(targets, dtype=np.float64)
    acts, pres, q = _forward_pass(params, X, temperature)
    n = X.shape[0]
    d_logits = (q * t.sum(axis=1, keepdims=True) - t) / (temperature * n)
    deltas = _backprop_deltas(params, pres, d_logits)
    return [(d.T @ h, d.sum(axis=0)) for h, d in zip(acts, deltas)]


def grad_sq_norms(params: NetworkParams, X, targets, temperature: float = 1.0) -> np.ndarray:
    """Per-sample squared gradient norms ||grad ce_loss||^2, batched."""
    X = _check_input(params.arch, X, batched=True)
    t = np.asarray(targets, dtype=np.float64)
    acts, pres, q = _forward_pass(params, X, temperature)
    d_logits = (q * t.sum(axis=1, keepdims=True) - t) / temperature
    deltas = _backprop_deltas(params, pres, d_logits)
    out = np.zeros(X.shape[0])
    for h, d in zip(acts, deltas):
        out += (d ** 2).sum(axis=1) * (1.0 + (h ** 2).sum(axis=1))
    return out


def jacobian_columns(params: NetworkParams, x) -> np.ndarray:
    """(K, D) array; row k is the gradient of output probability k, at T=1.

    K reverse passes seeded with grad_z q_k = q_k (e_k - q); reverse mode wins
    because D >> K.
    """
    x = _check_input(params.arch, x, batched=False)
    acts, pres, q = _forward_pass(params, x[None, :], 1.0)
    k_classes = params.arch.num_classes
    cols = np.empty((k_classes, params.arch.num_params))
    for k in range(k_classes):
        seed = -q[0, k] * q
        seed[0, k] += q[0, k]
        deltas = _backprop_deltas(params, pres, seed)
        pieces = []
        for h, d in zip(acts, deltas):
            pieces.append(np.outer(d[0], h[0]).ravel())
            pieces.append(d[0])
        cols[k] = np.concatenate(pieces)
    return cols


def jacobian_sq_norms(params: NetworkParams, X) -> np.ndarray:
    """(N, K) array of per-class Jacobian-column squared norms, at T=1."""
    X = _check_input(params.arch, X, batched=True)
    acts, pres, q = _forward_pass(params, X, 1.0)
    n, k_classes = q.shape
    out = np.empty((n, k_classes))
    h_sq = [1.0 + (h ** 2).sum(axis=1) for h in acts]
    for k in range(k_classes):
        seed = -q[:, k:k + 1] * q
        seed[:, k] += q[:, k]
        deltas = _backprop_deltas(params, pres, seed)
        acc = np.zeros(n)
        for hs, d in zip(h_sq, deltas):
            acc += (d ** 2).sum(axis=1) * hs
        out[:, k] = acc
    return out


def squared_distance(params: NetworkParams, ref: NetworkParams) -> float:
    """Squared parameter distance to the equivalent-minimizer orbit of ref.

    Softmax outputs are invariant to adding one shared constant to every
    class logit, so any minimizer is a whole orbit in parameter space and the
    gradient never moves along it. The output layer is therefore compared
    after removing the across-class mean of its rows and biases from both
    sides; hidden layers are compared directly.
    """
    if params.arch != ref.arch:
        raise ShapeError("architectures differ")
    total = 0.0
    last = len(params.layers) - 1
    for i, ((w, b), (wr, br)) in enumerate(zip(params.layers, ref.layers)):
        if i == last:
            dw = (w - w.mean(axis=0)) - (wr - wr.mean(axis=0))
            db = (b - b.mean()) - (br - br.mean())
        else:
            dw = w - wr
            db = b - br
        total += float((dw ** 2).sum() + (db ** 2).sum())
    return total


def save_checkpoint(params: NetworkParams, path) -> None:
    """magic 'BCPN', u32 version, u32 ndims, u32 dims..., then f64-LE flat params."""
    dims = params.arch.dims
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        fh.write(params.flatten().astype("<f8").tobytes())


def load_checkpoint(path) -> NetworkParams:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValidationError(f"{path}: not a checkpoint file")
        version, ndims = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValidationError(f"{path}: unsupported checkpoint version {version}")
        dims = struct.unpack(f"<{ndims}I", fh.read(4 * ndims))
        arch = Architecture(dims[0], tuple(dims[1:-1]), dims[-1])
        raw = fh.read(8 * arch.num_params)
        if len(raw) != 8 * arch.num_params:
            raise ValidationError(f"{path}: truncated checkpoint")
        theta = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return NetworkParams.from_flat(arch, theta)
