"""Seedable random streams with reproducible child-stream derivation.

Every experiment draws from an RngStream so that identical seeds give
identical sequences across runs and platforms. Streams wrap numpy's Philox
counter-based generator (fixed algorithm, published constants); child streams
are derived by hashing (parent seed, label) so that data generation, noise
draws, and batch sampling are independently reseedable.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import NumericError, ValidationError

_U64 = 2**64


class RngStream:
    """A single-owner random stream identified by a 64-bit seed.

    The underlying generator state advances with each draw; `child` derives
    a fresh, independent stream from the (unchanging) seed and a label, so
    child derivation does not depend on how far the parent has advanced.
    """

    def __init__(self, seed: int, path: tuple[str, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < _U64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.path = path
        self.gen = np.random.Generator(np.random.Philox(key=seed))

    def __repr__(self):
        suffix = "/".join(self.path)
        return f"RngStream(seed={self.seed}{', path=' + suffix if suffix else ''})"

    def child(self, label: str) -> "RngStream":
        """Derive an independent stream from this stream's seed and a label."""
        digest = hashlib.sha256(
            self.seed.to_bytes(8, "little") + b"/" + label.encode("utf-8")
        ).digest()
        return RngStream(int.from_bytes(digest[:8], "little"), self.path + (label,))

    # Thin draw helpers; all state lives in self.gen.

    def uniform(self, size=None):
        return self.gen.random(size)

    def integers(self, low, high, size=None):
        return self.gen.integers(low, high, size=size)

    def permutation(self, n: int):
        return self.gen.permutation(n)

    def normal(self, mean, std, size=None):
        return self.gen.normal(mean, std, size)

    def standard_gamma(self, shape):
        return self.gen.standard_gamma(shape)


def new_stream(seed: int) -> RngStream:
    """Create a stream in its canonical initial state for the seed."""
    return RngStream(seed)


def sample_gaussian(stream: RngStream, mean: float, std: float) -> float:
    """One normal variate; std = 0 returns the mean exactly."""
    if not std >= 0:
        raise ValidationError(f"std must be >= 0, got {std}")
    return float(stream.gen.normal(mean, std))


def sample_dirichlet(stream: RngStream, concentration) -> np.ndarray:
    """One Dirichlet draw via normalized Gamma variates.

    Shapes below 1 are handled by the generator's shape-augmentation path, so
    concentrations like eps * p with small eps remain exact. Entries are >= 0
    and sum to 1 within 1e-12.
    """
    conc = np.asarray(concentration, dtype=np.float64)
    if conc.ndim != 1 or conc.size < 2:
        raise ValidationError("concentration must be a vector of length >= 2")
    if not np.all(np.isfinite(conc)) or np.any(conc <= 0):
        raise ValidationError("concentration entries must be finite and > 0")
    draws = stream.gen.standard_gamma(conc)
    total = draws.sum()
    if total <= 0.0:
        raise NumericError("all Gamma variates underflowed to zero")
    return draws / total
