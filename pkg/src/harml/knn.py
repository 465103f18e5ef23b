"""Exact brute-force k-nearest-neighbors classifier.

Neighbors are ranked by ascending ``(distance, label code, canonical
ordinal)`` where the canonical ordinal is the rank of a training row in a
lexicographic sort of the feature values. Ranking therefore never depends on
the order in which training samples were supplied.

Votes are majority counts; among tied classes the one whose closest member
is nearest wins, then the smaller label code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_matrix
from .errors import ConfigurationError, DimensionError

# Squared-distance slack when screening candidates computed through the
# ||a||^2 + ||b||^2 - 2<a, b> expansion; survivors get exact distances.
_SCREEN_RTOL = 1e-9
_CHUNK = 256


@dataclass(frozen=True)
class KnnModel:
    k: int
    X: np.ndarray
    y: np.ndarray
    canonical: np.ndarray
    sq_norms: np.ndarray

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


def knn_fit(X, y, k: int) -> KnnModel:
    """Store the training set. ``k`` must lie in ``1..len(X)``."""
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ConfigurationError("empty training set")
    if len(X) != len(y):
        raise DimensionError("X and y lengths differ")
    if not 1 <= int(k) <= len(X):
        raise ConfigurationError(f"k={k} outside 1..{len(X)}")
    # np.lexsort keys run last-to-first, so reverse the columns for a
    # first-feature-major lexicographic order.
    order = np.lexsort(X.T[::-1])
    canonical = np.empty(len(X), dtype=np.int64)
    canonical[order] = np.arange(len(X))
    X = X.copy()
    X.setflags(write=False)
    return KnnModel(int(k), X, y.copy(), canonical, np.einsum("ij,ij->i", X, X))


def _ranked_neighbors(model: KnnModel, Q: np.ndarray, k: int):
    """Yield ``(indices, distances)`` of the ``k`` nearest rows per query."""
    n = len(model.X)
    train_scale = max(float(model.sq_norms.max()), 1.0)
    for start in range(0, len(Q), _CHUNK):
        block = Q[start:start + _CHUNK]
        q_norms = np.einsum("ij,ij->i", block, block)
        d2 = model.sq_norms[None, :] + q_norms[:, None] - 2.0 * block @ model.X.T
        np.maximum(d2, 0.0, out=d2)
        if k < n:
            kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
        else:
            kth = d2.max(axis=1)
        for row, q in enumerate(block):
            scale = max(q_norms[row], train_scale)
            cand = np.flatnonzero(d2[row] <= kth[row] + _SCREEN_RTOL * scale)
            diff = model.X[cand] - q
            dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            order = np.lexsort((model.canonical[cand], model.y[cand], dist))[:k]
            yield cand[order], dist[order]


def _vote(labels: np.ndarray, dists: np.ndarray) -> int:
    classes, counts = np.unique(labels, return_counts=True)
    tied = classes[counts == counts.max()]
    if len(tied) == 1:
        return int(tied[0])
    # labels arrive sorted by distance, so first occurrence is the nearest
    nearest = [dists[np.argmax(labels == c)] for c in tied]
    best = min(zip(nearest, tied))
    return int(best[1])


def knn_predict(model: KnnModel, x) -> int:
    return int(knn_predict_batch(model, np.asarray(x, dtype=np.float64)[None, :])[0])


def knn_predict_batch(model: KnnModel, Q, k: int | None = None) -> np.ndarray:
    Q = as_matrix(Q)
    if Q.shape[1] != model.n_features:
        raise DimensionError(
            f"query has {Q.shape[1]} features, model has {model.n_features}")
    k = model.k if k is None else k
    return np.array([_vote(model.y[idx], d)
                     for idx, d in _ranked_neighbors(model, Q, k)],
                    dtype=np.int64)


def knn_sweep(train_X, train_y, val_X, val_y, k_values,
              return_predictions: bool = False):
    """Validation accuracy for every ``k`` in ``k_values``.

    Neighbor lists are computed once for the largest ``k`` and truncated.
    Returns ``(accuracies, best_k)``; ties on accuracy go to the smaller k.
    With ``return_predictions`` a third item maps each k to its predicted
    labels.
    """
    k_values = [int(k) for k in k_values]
    val_X = as_matrix(val_X)
    val_y = np.asarray(val_y, dtype=np.int64)
    if not k_values or len(val_X) == 0:
        raise ConfigurationError("empty k_values or validation set")
    model = knn_fit(train_X, train_y, max(k_values))
    if val_X.shape[1] != model.n_features:
        raise DimensionError("validation feature count differs from training")
    neighbors = list(_ranked_neighbors(model, val_X, model.k))
    accuracies, predictions = {}, {}
    for k in k_values:
        if k < 1:
            raise ConfigurationError(f"k={k} must be >= 1")
        pred = np.array([_vote(model.y[idx[:k]], d[:k]) for idx, d in neighbors])
        accuracies[k] = float(np.mean(pred == val_y))
        predictions[k] = pred
    best_k = min(accuracies, key=lambda k: (-accuracies[k], k))
    if return_predictions:
        return accuracies, best_k, predictions
    return accuracies, best_k
