"""Gaussian naive Bayes with log-space likelihoods."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_matrix
from .errors import CoverageError, DimensionError

DEFAULT_SMOOTHING = 1e-9

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GnbModel:
    """Fitted parameters.

    Attributes
    ----------
    classes : ndarray of int, shape (K,)
        Label codes in ascending order; rows of the other arrays follow it.
    class_log_priors : ndarray, shape (K,)
    means, variances : ndarray, shape (K, M)
        Per-class feature means and smoothed maximum-likelihood variances.
    smoothing_epsilon : float
        The absolute amount added to every variance.
    """

    classes: np.ndarray
    class_log_priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    smoothing_epsilon: float

    def with_log_priors(self, log_priors) -> "GnbModel":
        return GnbModel(self.classes, np.asarray(log_priors, dtype=np.float64),
                        self.means, self.variances, self.smoothing_epsilon)


def gnb_fit(X, y, smoothing_epsilon_fraction: float = DEFAULT_SMOOTHING,
            classes=None) -> GnbModel:
    """Estimate per-class means, variances and priors.

    The variance smoothing term is ``smoothing_epsilon_fraction`` times the
    largest per-feature variance of the whole training set. Every label in
    ``classes`` (default: the labels present in ``y``) must occur at least
    once.
    """
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    if len(X) != len(y):
        raise DimensionError("X and y lengths differ")
    if len(X) == 0:
        raise CoverageError("empty training set")
    classes = np.unique(y) if classes is None else np.asarray(sorted(classes))
    eps = float(smoothing_epsilon_fraction) * float(np.var(X, axis=0).max())
    means, variances, counts = [], [], []
    for c in classes:
        Xc = X[y == c]
        if len(Xc) == 0:
            raise CoverageError(f"class {int(c)} absent from training data")
        mu = Xc.mean(axis=0)
        means.append(mu)
        variances.append(((Xc - mu) ** 2).mean(axis=0) + eps)
        counts.append(len(Xc))
    counts = np.asarray(counts, dtype=np.float64)
    variances = np.asarray(variances)
    if np.any(variances <= 0):
        raise CoverageError(
            "zero variance feature within a class; use a positive smoothing "
            "fraction")
    return GnbModel(classes.astype(np.int64), np.log(counts / counts.sum()),
                    np.asarray(means), variances, eps)


def joint_log_likelihood(model: GnbModel, X) -> np.ndarray:
    """Unnormalized log posteriors, shape ``(n_queries, K)``."""
    X = as_matrix(X)
    if X.shape[1] != model.means.shape[1]:
        raise DimensionError(
            f"query has {X.shape[1]} features, model has {model.means.shape[1]}")
    log_norm = -0.5 * np.sum(_LOG_2PI + np.log(model.variances), axis=1)
    quad = np.stack([
        np.sum((X - mu) ** 2 / var, axis=1)
        for mu, var in zip(model.means, model.variances)
    ], axis=1)
    return model.class_log_priors + log_norm - 0.5 * quad


def _logsumexp(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))[:, 0]


def gnb_log_posterior(model: GnbModel, x) -> dict[int, float]:
    jll = joint_log_likelihood(model, np.asarray(x, dtype=np.float64)[None, :])[0]
    return {int(c): float(v) for c, v in zip(model.classes, jll)}


def gnb_posterior(model: GnbModel, X) -> np.ndarray:
    """Normalized posterior probabilities via log-sum-exp."""
    jll = joint_log_likelihood(model, X)
    return np.exp(jll - _logsumexp(jll)[:, None])


def gnb_predict_batch(model: GnbModel, X) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the smaller label code
    return model.classes[np.argmax(joint_log_likelihood(model, X), axis=1)]


def gnb_predict(model: GnbModel, x) -> int:
    return int(gnb_predict_batch(model, np.asarray(x, dtype=np.float64)[None, :])[0])
