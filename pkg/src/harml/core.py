"""Numeric primitives shared by the classifiers.

Vector algebra, Euclidean distance, the three supported kernels, Gram
matrices and a small portable pseudo-random generator. Everything works in
float64.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError

__all__ = [
    "Kernel",
    "SeededRng",
    "as_matrix",
    "as_vector",
    "dot",
    "euclidean_distance",
    "gram_matrix",
    "kernel_eval",
    "kernel_matrix",
    "shuffle",
]

N_FEATURES = 561

KERNEL_TYPES = ("linear", "polynomial", "sigmoid")


def as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def as_matrix(xs, n_features: int | None = None) -> np.ndarray:
    try:
        m = np.asarray(xs, dtype=np.float64)
    except ValueError as exc:
        raise DimensionError(f"vectors of unequal length: {exc}") from None
    if m.ndim == 1 and m.size == 0:
        m = m.reshape(0, n_features or 0)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    if n_features is not None and m.shape[1] != n_features:
        raise DimensionError(f"expected {n_features} features, got {m.shape[1]}")
    return m


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x, y = as_vector(x), as_vector(y)
    if x.shape != y.shape:
        raise DimensionError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    return x, y


def dot(x, y) -> float:
    """Inner product of two equal-length vectors."""
    x, y = _check_pair(x, y)
    return float(np.dot(x, y))


def euclidean_distance(x, y) -> float:
    x, y = _check_pair(x, y)
    d = x - y
    return math.sqrt(float(np.dot(d, d)))


@dataclass(frozen=True)
class Kernel:
    """A closed-form similarity function.

    ``linear``      k(x, y) = <x, y>
    ``polynomial``  k(x, y) = (gamma <x, y> + coef0) ** degree
    ``sigmoid``     k(x, y) = tanh(gamma <x, y> + coef0)

    ``gamma`` defaults to the reciprocal of the feature count of the
    activity dataset. Fields irrelevant to a kernel type are ignored but kept
    so that a config echo always shows the full parameter set.
    """

    kind: str = "linear"
    gamma: float = 1.0 / N_FEATURES
    coef0: float = 0.0
    degree: int = 3

    def __post_init__(self):
        if self.kind not in KERNEL_TYPES:
            raise ConfigurationError(
                f"unknown kernel {self.kind!r}; expected one of {KERNEL_TYPES}")
        if self.kind != "linear" and not self.gamma > 0:
            raise ConfigurationError("gamma must be > 0")
        if self.kind == "polynomial" and (int(self.degree) != self.degree
                                          or self.degree < 1):
            raise ConfigurationError("degree must be a positive integer")

    @classmethod
    def linear(cls) -> "Kernel":
        return cls("linear")

    @classmethod
    def polynomial(cls, gamma=1.0 / N_FEATURES, coef0=0.0, degree=3) -> "Kernel":
        return cls("polynomial", float(gamma), float(coef0), int(degree))

    @classmethod
    def sigmoid(cls, gamma=1.0 / N_FEATURES, coef0=0.0) -> "Kernel":
        return cls("sigmoid", float(gamma), float(coef0))

    def apply(self, inner):
        """Map inner products (scalar or array) to kernel values."""
        if self.kind == "linear":
            return inner
        if self.kind == "polynomial":
            return (self.gamma * inner + self.coef0) ** self.degree
        return np.tanh(self.gamma * inner + self.coef0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Kernel":
        return cls(d["kind"], float(d["gamma"]), float(d["coef0"]),
                   int(d["degree"]))


def kernel_eval(k: Kernel, x, y) -> float:
    x, y = _check_pair(x, y)
    return float(k.apply(float(np.dot(x, y))))


def kernel_matrix(k: Kernel, A, B) -> np.ndarray:
    """Cross-kernel matrix ``K[i, j] = k(A[i], B[j])``."""
    A = as_matrix(A)
    B = as_matrix(B)
    if A.shape[1] != B.shape[1]:
        raise DimensionError(
            f"feature mismatch: {A.shape[1]} vs {B.shape[1]}")
    return k.apply(A @ B.T)


def gram_matrix(k: Kernel, xs) -> np.ndarray:
    """Symmetric Gram matrix of ``xs`` under kernel ``k``.

    The upper triangle is mirrored onto the lower one so the result is
    exactly symmetric regardless of BLAS summation order.
    """
    X = as_matrix(xs) if len(xs) else np.zeros((0, 0))
    if X.shape[0] == 0:
        return np.zeros((0, 0))
    G = k.apply(X @ X.T)
    iu = np.triu_indices(G.shape[0], 1)
    G[(iu[1], iu[0])] = G[iu]
    return G


_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


class SeededRng:
    """SplitMix64 generator (Steele, Lea & Flood, 2014).

    The state is a 64-bit counter advanced by 0x9E3779B97F4A7C15 per draw;
    each output is the counter passed through the finalizer::

        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB
        z =  z ^ (z >> 31)

    with all arithmetic modulo 2**64. Because output ``i`` depends only on
    ``seed + (i + 1) * golden`` the stream is generated in vectorized blocks
    and is bit-identical on every platform. Instances are single-owner.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._state = self.seed

    def next_u64(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self._state) + steps * _GOLDEN
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
            z = z ^ (z >> np.uint64(31))
        self._state = (self._state + n * 0x9E3779B97F4A7C15) & _MASK64
        return z

    def random(self, n: int) -> np.ndarray:
        """``n`` doubles uniform on [0, 1) built from the top 53 bits."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        n = int(np.prod(size))
        return (low + (high - low) * self.random(n)).reshape(size)

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of ``range(n)``.

        Sorting by independent 64-bit keys; a stable sort keeps the result
        defined even on a (practically impossible) key collision.
        """
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        return np.argsort(self.next_u64(n), kind="stable").astype(np.int64)


def shuffle(rng: SeededRng, indices) -> list:
    items = list(indices)
    return [items[i] for i in rng.permutation(len(items))]
