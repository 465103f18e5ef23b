"""Soft-margin kernel SVM trained with Sequential Minimal Optimization.

The binary solver follows Platt's original scheme: an outer loop alternating
full sweeps with sweeps over the non-bound multipliers, a second-choice
heuristic maximizing ``|E1 - E2|``, and an error cache kept current for
every training point. Multiclass problems are decomposed one-vs-one.

Decision function convention: ``f(x) = sum_i alpha_i y_i k(x_i, x) + b``.
"""

from __future__ import annotations

import itertools
import json
import logging
import warnings
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Kernel, SeededRng, as_matrix, kernel_matrix
from .errors import (ConfigurationError, CoverageError, DegenerateProblemError,
                     DimensionError)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class SmoConfig:
    C: float = 0.5
    kkt_tolerance: float = 1e-3
    alpha_change_epsilon: float = 1e-12
    max_passes_without_progress: int = 5
    max_iterations: int = 1_000_000
    seed: int = 0
    cache_bytes: int = 256 * 1024 * 1024

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigurationError("C must be > 0")
        if not (self.kkt_tolerance > 0 and self.alpha_change_epsilon > 0):
            raise ConfigurationError("tolerances must be > 0")
        if self.max_passes_without_progress < 1 or self.max_iterations < 1:
            raise ConfigurationError("pass and iteration limits must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BinarySvm:
    kernel: Kernel
    support_vectors: np.ndarray
    support_labels: np.ndarray
    alphas: np.ndarray
    bias: float
    C: float
    support_indices: np.ndarray = field(default=None)
    converged: bool = True
    iterations: int = 0
    kkt_max_violation: float = 0.0
    dual_objective: float = float("nan")

    @property
    def dual_coef(self) -> np.ndarray:
        return self.alphas * self.support_labels

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "C": self.C,
            "bias": self.bias,
            "alphas": self.alphas.tolist(),
            "support_labels": self.support_labels.astype(int).tolist(),
            "support_vectors": self.support_vectors.tolist(),
            "support_indices": (None if self.support_indices is None
                                else self.support_indices.tolist()),
            "converged": self.converged,
            "iterations": self.iterations,
            "kkt_max_violation": self.kkt_max_violation,
            "dual_objective": self.dual_objective,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BinarySvm":
        sv = np.asarray(d["support_vectors"], dtype=np.float64)
        if sv.size == 0:
            sv = sv.reshape(0, 0)
        return cls(
            kernel=Kernel.from_dict(d["kernel"]),
            support_vectors=sv,
            support_labels=np.asarray(d["support_labels"], dtype=np.float64),
            alphas=np.asarray(d["alphas"], dtype=np.float64),
            bias=float(d["bias"]),
            C=float(d["C"]),
            support_indices=(None if d.get("support_indices") is None
                             else np.asarray(d["support_indices"], dtype=np.int64)),
            converged=bool(d.get("converged", True)),
            iterations=int(d.get("iterations", 0)),
            kkt_max_violation=float(d.get("kkt_max_violation", 0.0)),
            dual_objective=float(d.get("dual_objective", float("nan"))),
        )


class KernelCache:
    """Rows of the training Gram matrix under an LRU byte budget.

    When the whole matrix fits in the budget it is computed up front with a
    single matrix product.
    """

    def __init__(self, kernel: Kernel, X: np.ndarray, budget_bytes: int):
        self.kernel = kernel
        self.X = X
        n = len(X)
        self.diag = kernel.apply(np.einsum("ij,ij->i", X, X))
        self.full = None
        self.max_rows = max(2, int(budget_bytes // max(1, 8 * n)))
        if n * n * 8 <= budget_bytes:
            G = kernel.apply(X @ X.T)
            iu = np.triu_indices(n, 1)
            G[(iu[1], iu[0])] = G[iu]
            self.full = G
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        r = self._rows.get(i)
        if r is not None:
            self._rows.move_to_end(i)
            return r
        r = self.kernel.apply(self.X @ self.X[i])
        r[i] = self.diag[i]
        self._rows[i] = r
        if len(self._rows) > self.max_rows:
            self._rows.popitem(last=False)
        return r


class _Smo:
    def __init__(self, X, y, kernel, config, callback=None,
                 check_invariants=False):
        self.X = X
        self.y = y
        self.n = len(y)
        self.C = float(config.C)
        self.tol = config.kkt_tolerance
        self.eps = config.alpha_change_epsilon
        self.cfg = config
        self.cache = KernelCache(kernel, X, config.cache_bytes)
        self.alpha = np.zeros(self.n)
        self.b = 0.0
        self.E = -y.astype(np.float64)
        self.rng = SeededRng(config.seed)
        self.iterations = 0
        self.callback = callback
        self.check_invariants = check_invariants

    def _snap(self, a: float) -> float:
        if a < self.eps * self.C:
            return 0.0
        if a > self.C * (1.0 - self.eps):
            return self.C
        return a

    def take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        C = self.C
        a1, a2 = self.alpha[i1], self.alpha[i2]
        y1, y2 = self.y[i1], self.y[i2]
        E1, E2 = self.E[i1], self.E[i2]
        s = y1 * y2
        if y1 != y2:
            L, H = max(0.0, a2 - a1), min(C, C + a2 - a1)
        else:
            L, H = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        if H - L <= self.eps * C:
            return False
        row2 = self.cache.row(i2)
        k11, k22, k12 = self.cache.diag[i1], self.cache.diag[i2], row2[i1]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2_new = min(max(a2 + y2 * (E1 - E2) / eta, L), H)
        else:
            # objective restricted to the segment at both ends
            f1 = y1 * (E1 - self.b) - a1 * k11 - s * a2 * k12
            f2 = y2 * (E2 - self.b) - s * a1 * k12 - a2 * k22
            L1 = a1 + s * (a2 - L)
            H1 = a1 + s * (a2 - H)
            Lobj = (L1 * f1 + L * f2 + 0.5 * L1 * L1 * k11
                    + 0.5 * L * L * k22 + s * L * L1 * k12)
            Hobj = (H1 * f1 + H * f2 + 0.5 * H1 * H1 * k11
                    + 0.5 * H * H * k22 + s * H * H1 * k12)
            if Lobj < Hobj - self.eps:
                a2_new = L
            elif Lobj > Hobj + self.eps:
                a2_new = H
            else:
                a2_new = a2
        a2_new = self._snap(a2_new)
        if abs(a2_new - a2) < self.eps * (a2_new + a2 + self.eps):
            return False
        a1_new = self._snap(min(max(a1 + s * (a2 - a2_new), 0.0), C))
        d1, d2 = a1_new - a1, a2_new - a2

        b1 = self.b - E1 - y1 * d1 * k11 - y2 * d2 * k12
        b2 = self.b - E2 - y1 * d1 * k12 - y2 * d2 * k22
        if 0.0 < a1_new < C:
            b_new = b1
        elif 0.0 < a2_new < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)

        row1 = self.cache.row(i1)
        self.E += y1 * d1 * row1 + y2 * d2 * row2 + (b_new - self.b)
        self.alpha[i1], self.alpha[i2] = a1_new, a2_new
        self.b = b_new
        self.iterations += 1
        if self.check_invariants:
            self._assert_feasible()
        if self.callback is not None:
            self.callback(self.alpha, self.b)
        return True

    def _assert_feasible(self):
        a = self.alpha
        assert np.all(a >= 0.0) and np.all(a <= self.C), "box constraint"
        assert abs(a @ self.y) <= 1e-8 * (a.sum() + 1.0), "equality constraint"

    def _offset(self, n: int) -> int:
        return int(self.rng.next_u64(1)[0] % np.uint64(n))

    def _violates(self, i: int) -> bool:
        r = self.E[i] * self.y[i]
        a = self.alpha[i]
        return (r < -self.tol and a < self.C) or (r > self.tol and a > 0.0)

    def examine(self, i2: int) -> int:
        if not self._violates(i2):
            return 0
        free = np.flatnonzero((self.alpha > 0.0) & (self.alpha < self.C))
        if len(free) > 1:
            i1 = int(free[np.argmax(np.abs(self.E[free] - self.E[i2]))])
            if self.take_step(i1, i2):
                return 1
        if len(free):
            for i1 in np.roll(free, -self._offset(len(free))):
                if self.take_step(int(i1), i2):
                    return 1
        start = self._offset(self.n)
        for i1 in itertools.chain(range(start, self.n), range(start)):
            if self.take_step(i1, i2):
                return 1
        return 0

    def dual_objective(self) -> float:
        a, y = self.alpha, self.y
        return float(a.sum() - 0.5 * np.sum(a * y * (self.E + y - self.b)))

    def kkt_violation(self) -> float:
        return _kkt_from_margins(self.alpha, self.y * self.E, self.C)

    def run(self) -> bool:
        examine_all = True
        n_changed = 0
        stalled = 0
        objective = self.dual_objective()
        # a step repairing a violation v gains roughly v**2 / 2, so the
        # progress threshold shrinks with the tolerance
        min_gain = min(1e-12, 1e-2 * self.tol ** 2)
        while n_changed > 0 or examine_all:
            n_changed = 0
            if examine_all:
                candidates = range(self.n)
            else:
                candidates = np.flatnonzero((self.alpha > 0.0)
                                            & (self.alpha < self.C))
            for i in candidates:
                n_changed += self.examine(int(i))
                if self.iterations >= self.cfg.max_iterations:
                    return False
            full_pass = examine_all
            if examine_all:
                examine_all = False
            elif n_changed == 0:
                examine_all = True
            new_objective = self.dual_objective()
            if n_changed and new_objective - objective <= min_gain * max(1.0, abs(objective)):
                if full_pass:
                    stalled += 1
                    if stalled >= self.cfg.max_passes_without_progress:
                        log.debug("SMO stalled after %d iterations", self.iterations)
                        return False
                else:
                    # free-set passes making only negligible moves would
                    # otherwise starve violators sitting at the bounds
                    examine_all = True
            else:
                stalled = 0
            objective = new_objective
        return True


def _refit_bias(alpha, y, g, C, b_current) -> float:
    """Bias minimizing the largest KKT violation for fixed multipliers.

    ``g`` is the decision value without bias. With ``t = y - g`` each
    violation is ``|b - t_i|`` restricted to one side for multipliers at a
    bound, so the minimax bias is the midpoint of the two binding values.
    """
    at_zero, at_c = alpha <= 0.0, alpha >= C
    free = ~(at_zero | at_c)
    t = y - g
    # b >= t_i for these, b <= t_i for the others
    need_above = free | (at_zero & (y > 0)) | (at_c & (y < 0))
    need_below = free | (at_zero & (y < 0)) | (at_c & (y > 0))
    lo = t[need_above].max() if need_above.any() else None
    hi = t[need_below].min() if need_below.any() else None
    if lo is None and hi is None:
        return b_current
    if lo is None:
        return float(hi)
    if hi is None:
        return float(lo)
    return 0.5 * float(lo + hi)


def _kkt_from_margins(alpha, r, C) -> float:
    """Largest KKT violation given ``r_i = y_i f(x_i) - 1``."""
    viol = np.where(alpha <= 0.0, np.maximum(0.0, -r),
                    np.where(alpha >= C, np.maximum(0.0, r), np.abs(r)))
    return float(viol.max()) if len(viol) else 0.0


def smo_train(X, y, kernel: Kernel, config: SmoConfig = SmoConfig(),
              callback=None, check_invariants: bool = False) -> BinarySvm:
    """Train a binary soft-margin SVM.

    ``y`` holds labels in {-1, +1}. ``callback(alpha, bias)`` is invoked
    after every accepted pair update. The result is flagged non-converged
    (with a warning) when the final KKT violation exceeds the tolerance.
    """
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if len(X) != len(y):
        raise DimensionError("X and y lengths differ")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ConfigurationError("labels must be -1 or +1")
    if len(y) < 2 or len(np.unique(y)) < 2:
        raise DegenerateProblemError("both labels must be present")
    smo = _Smo(X, y, kernel, config, callback, check_invariants)
    smo.run()
    alpha = smo.alpha
    # recompute margins from scratch instead of trusting the incremental cache
    K = smo.cache.full if smo.cache.full is not None else kernel_matrix(kernel, X, X)
    g = K @ (alpha * y)
    bias = _refit_bias(alpha, y, g, config.C, smo.b)
    f = g + bias
    kkt = _kkt_from_margins(alpha, y * f - 1.0, config.C)
    converged = kkt <= config.kkt_tolerance
    if not converged:
        warnings.warn(f"SMO did not converge: KKT violation {kkt:.3g} after "
                      f"{smo.iterations} iterations", RuntimeWarning,
                      stacklevel=2)
    sv = np.flatnonzero(alpha > config.alpha_change_epsilon)
    return BinarySvm(kernel=kernel, support_vectors=X[sv].copy(),
                     support_labels=y[sv].copy(), alphas=alpha[sv].copy(),
                     bias=float(bias), C=float(config.C), support_indices=sv,
                     converged=bool(converged), iterations=smo.iterations,
                     kkt_max_violation=kkt,
                     dual_objective=smo.dual_objective())


def svm_decision_batch(model: BinarySvm, X) -> np.ndarray:
    X = as_matrix(X)
    if len(model.alphas) == 0:
        return np.full(len(X), model.bias)
    if X.shape[1] != model.support_vectors.shape[1]:
        raise DimensionError(
            f"query has {X.shape[1]} features, model has "
            f"{model.support_vectors.shape[1]}")
    return kernel_matrix(model.kernel, X, model.support_vectors) @ model.dual_coef \
        + model.bias


def svm_decision(model: BinarySvm, x) -> float:
    return float(svm_decision_batch(model, np.asarray(x, dtype=np.float64)[None, :])[0])


def kkt_report(model: BinarySvm, X, y) -> float:
    """Maximum KKT violation of ``model`` over its training set."""
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    alpha = np.zeros(len(y))
    if model.support_indices is None:
        raise ConfigurationError("model carries no support indices")
    alpha[model.support_indices] = model.alphas
    r = y * svm_decision_batch(model, X) - 1.0
    return _kkt_from_margins(alpha, r, model.C)


def dual_objective(alpha, y, K) -> float:
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


@dataclass
class MulticlassSvm:
    """One binary machine per unordered class pair.

    For the pair ``(a, b)`` with ``a < b``, class ``a`` is the -1 side.
    """

    machines: list[tuple[int, int, BinarySvm]]
    kernel: Kernel
    config: SmoConfig

    @property
    def classes(self) -> list[int]:
        return sorted({c for a, b, _ in self.machines for c in (a, b)})

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "model": "ovo_svm",
            "kernel": self.kernel.to_dict(),
            "config": self.config.to_dict(),
            "machines": [{"class_pair": [a, b], "model": m.to_dict()}
                         for a, b, m in self.machines],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MulticlassSvm":
        if d.get("format_version") != FORMAT_VERSION:
            raise ConfigurationError(
                f"unsupported model format {d.get('format_version')!r}")
        return cls([(int(m["class_pair"][0]), int(m["class_pair"][1]),
                     BinarySvm.from_dict(m["model"])) for m in d["machines"]],
                   Kernel.from_dict(d["kernel"]), SmoConfig(**d["config"]))

    @classmethod
    def from_json(cls, text: str) -> "MulticlassSvm":
        return cls.from_dict(json.loads(text))


def _train_pair(args):
    a, b, Xp, yp, kernel, config = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return a, b, smo_train(Xp, yp, kernel, config)


def ovo_train(X, y, kernel: Kernel, config: SmoConfig = SmoConfig(),
              classes=None, n_jobs: int = 1) -> MulticlassSvm:
    """Train all pairwise machines.

    Pairs missing one of their classes are skipped with a warning. With
    ``n_jobs > 1`` the pairs train in worker processes; results do not
    depend on the worker count.
    """
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    classes = sorted(set(np.unique(y).tolist()) if classes is None else classes)
    if len(classes) < 2:
        raise CoverageError("need at least two classes")
    jobs = []
    for a, b in itertools.combinations(classes, 2):
        mask = (y == a) | (y == b)
        if not (np.any(y == a) and np.any(y == b)):
            warnings.warn(f"skipping pair ({a}, {b}): class missing",
                          RuntimeWarning, stacklevel=2)
            continue
        jobs.append((a, b, X[mask], np.where(y[mask] == a, -1.0, 1.0),
                     kernel, config))
    if not jobs:
        raise CoverageError("no class pair has both classes present")
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_train_pair, jobs))
    else:
        results = [_train_pair(job) for job in jobs]
    for a, b, m in results:
        if not m.converged:
            log.warning("pair (%d, %d) did not converge (KKT %.3g)", a, b,
                        m.kkt_max_violation)
    return MulticlassSvm(list(results), kernel, config)


def ovo_decisions(model: MulticlassSvm, X) -> np.ndarray:
    """Decision values, shape ``(n_queries, n_machines)``."""
    X = as_matrix(X)
    return np.stack([svm_decision_batch(m, X) for _, _, m in model.machines],
                    axis=1)


def ovo_vote(pairs, decisions: np.ndarray) -> np.ndarray:
    """Combine pairwise decision values into class predictions.

    Each machine votes for its +1 class when its decision is positive and
    for its -1 class otherwise. Vote ties are broken by the summed
    ``|decision|`` of the votes each tied class won from machines between
    tied classes, and then by the smaller label code.
    """
    classes = sorted({c for p in pairs for c in p})
    pos = {c: i for i, c in enumerate(classes)}
    n = decisions.shape[0]
    winners = np.empty(decisions.shape, dtype=np.int64)
    votes = np.zeros((n, len(classes)), dtype=np.int64)
    for j, (a, b) in enumerate(pairs):
        won_b = decisions[:, j] > 0
        winners[:, j] = np.where(won_b, b, a)
        np.add.at(votes, (np.arange(n), np.where(won_b, pos[b], pos[a])), 1)
    out = np.empty(n, dtype=np.int64)
    for q in range(n):
        top = votes[q].max()
        tied = [c for c in classes if votes[q, pos[c]] == top]
        if len(tied) == 1:
            out[q] = tied[0]
            continue
        tied_set = set(tied)
        score = dict.fromkeys(tied, 0.0)
        for j, (a, b) in enumerate(pairs):
            if a in tied_set and b in tied_set:
                score[int(winners[q, j])] += abs(decisions[q, j])
        out[q] = min(tied, key=lambda c: (-score[c], c))
    return out


def ovo_predict_batch(model: MulticlassSvm, X) -> np.ndarray:
    pairs = [(a, b) for a, b, _ in model.machines]
    return ovo_vote(pairs, ovo_decisions(model, X))


def ovo_predict(model: MulticlassSvm, x) -> int:
    return int(ovo_predict_batch(model, np.asarray(x, dtype=np.float64)[None, :])[0])
