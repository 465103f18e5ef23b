"""Independent reference computations used by the tests.

Each function here is written without calling the code path it checks.
"""

import math

import numpy as np


def naive_dot(x, y):
    # reverse-order accumulation in plain Python floats
    total = 0.0
    for a, b in zip(reversed(list(x)), reversed(list(y))):
        total += float(a) * float(b)
    return total


def power_iteration_min_eig(M, iters=2000):
    """Smallest eigenvalue of a symmetric matrix by shifted power iteration."""
    M = np.asarray(M, dtype=float)
    n = len(M)
    shift = np.abs(M).sum(axis=1).max()  # Gershgorin bound >= lambda_max
    B = shift * np.eye(n) - M
    v = np.ones(n) / math.sqrt(n)
    lam = 0.0
    for _ in range(iters):
        w = B @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return shift
        v = w / norm
        lam = v @ B @ v
    return shift - lam


def _project(v, y, C):
    """Euclidean projection onto {0 <= a <= C, y.a = 0} by bisection."""
    lo, hi = -np.abs(v).max() - C - 1.0, np.abs(v).max() + C + 1.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if np.clip(v - mid * y, 0.0, C) @ y > 0:
            lo = mid
        else:
            hi = mid
    return np.clip(v - 0.5 * (lo + hi) * y, 0.0, C)


def qp_dual_oracle(K, y, C, iters=20000, tol=1e-12):
    """Maximize sum(a) - 0.5 a'Qa over the SVM dual polytope.

    Accelerated projected gradient ascent with step 1/L, stopped once the
    projected-gradient step moves the iterate by less than ``tol``.
    Returns ``(alpha, objective)``.
    """
    y = np.asarray(y, dtype=float)
    Q = (y[:, None] * y[None, :]) * np.asarray(K, dtype=float)
    L = max(np.linalg.eigvalsh(Q).max(), 1e-12)
    a = np.zeros(len(y))
    z, t = a.copy(), 1.0
    for _ in range(iters):
        grad = 1.0 - Q @ z
        a_next = _project(z + grad / L, y, C)
        if np.abs(a_next - a).max() < tol:
            residual = _project(a_next + (1.0 - Q @ a_next) / L, y, C) - a_next
            if np.abs(residual).max() < tol * 10:
                a = a_next
                break
        t_next = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        z = a_next + (t - 1) / t_next * (a_next - a)
        a, t = a_next, t_next
    return a, float(a.sum() - 0.5 * a @ Q @ a)


def brute_knn(X, y, q, k):
    """Majority vote over an exhaustive scan.

    Sort key (distance, label, lexicographic feature tuple); vote ties go to
    the class with the nearest member, then the smaller label.
    """
    entries = []
    for xi, yi in zip(X, y):
        d = math.sqrt(sum((float(a) - float(b)) ** 2 for a, b in zip(xi, q)))
        entries.append((d, int(yi), tuple(float(v) for v in xi)))
    entries.sort()
    top = entries[:k]
    votes, nearest = {}, {}
    for d, label, _ in top:
        votes[label] = votes.get(label, 0) + 1
        nearest.setdefault(label, d)
    best = max(votes.values())
    tied = [c for c in votes if votes[c] == best]
    return min(tied, key=lambda c: (nearest[c], c))


def two_pass_moments(X):
    X = np.asarray(X, dtype=float)
    n = len(X)
    means = [sum(col) / n for col in X.T]
    variances = [sum((v - m) ** 2 for v in col) / n for col, m in zip(X.T, means)]
    return np.array(means), np.array(variances)


def direct_log_density(x, prior, means, variances):
    """log(prior * prod pdf) evaluated as a product in linear space.

    Only meant for low-dimensional queries where the product cannot
    underflow.
    """
    p = prior
    for xv, m, v in zip(x, means, variances):
        p *= math.exp(-((xv - m) ** 2) / (2 * v)) / math.sqrt(2 * math.pi * v)
    return math.log(p)


def loop_forward(weights, biases, x):
    """Layer-by-layer evaluation with explicit loops."""
    a = [float(v) for v in x]
    for li, (W, b) in enumerate(zip(weights, biases)):
        z = [sum(W[i][j] * a[j] for j in range(len(a))) + b[i] for i in range(len(b))]
        a = z if li == len(weights) - 1 else [max(0.0, v) for v in z]
    m = max(a)
    e = [math.exp(v - m) for v in a]
    s = sum(e)
    return [v / s for v in e]


def recount_accuracy(pred, truth):
    hits = 0
    for p, t in zip(pred, truth):
        if p == t:
            hits += 1
    return hits / len(truth)
