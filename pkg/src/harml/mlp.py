"""Feed-forward ReLU network with a softmax output.

Labels are integer codes ``1..n_classes``; output unit ``j`` scores label
``j + 1``. Weight matrices are stored ``(out, in)`` so a layer computes
``z = a @ W.T + b`` on a row-major batch.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import SeededRng, as_matrix
from .errors import (ConfigurationError, CorruptModelError, DimensionError,
                     TrainingDivergedError)

FORMAT_VERSION = 1
DEFAULT_LAYERS = (561, 100, 65, 6)
OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 1000
    batch_size: int = 200
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    layer_sizes: tuple = DEFAULT_LAYERS
    init_scheme: str = "fan-uniform"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"optimizer must be one of {OPTIMIZERS}")
        if len(self.layer_sizes) < 2:
            raise ConfigurationError("need at least input and output layers")
        object.__setattr__(self, "layer_sizes",
                           tuple(int(s) for s in self.layer_sizes))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_sizes"] = list(self.layer_sizes)
        return d


@dataclass
class MlpModel:
    weights: list
    biases: list
    activation: str = "relu"

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(W.shape[0] for W in self.weights)

    def check(self) -> None:
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if i and W.shape[1] != self.weights[i - 1].shape[0]:
                raise CorruptModelError(f"layer {i} shape {W.shape} breaks chain")
            if b.shape != (W.shape[0],):
                raise CorruptModelError(f"layer {i} bias shape {b.shape}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise CorruptModelError(f"layer {i} has non-finite parameters")

    def copy(self) -> "MlpModel":
        return MlpModel([W.copy() for W in self.weights],
                        [b.copy() for b in self.biases], self.activation)

    def to_dict(self, config: TrainConfig | None = None) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "model": "mlp",
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "config": None if config is None else config.to_dict(),
        }

    def to_json(self, config: TrainConfig | None = None) -> str:
        return json.dumps(self.to_dict(config))

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ConfigurationError(
                f"unsupported model format {d.get('format_version')!r}")
        model = cls([np.asarray(W, dtype=np.float64) for W in d["weights"]],
                    [np.asarray(b, dtype=np.float64) for b in d["biases"]],
                    d.get("activation", "relu"))
        model.check()
        return model

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        return cls.from_dict(json.loads(text))


def init_model(layer_sizes, rng: SeededRng) -> MlpModel:
    """Weights and biases uniform in +-sqrt(6 / (fan_in + fan_out))."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, (fan_out,)))
    return MlpModel(weights, biases)


def zeros_model(layer_sizes) -> MlpModel:
    return MlpModel([np.zeros((o, i)) for i, o in zip(layer_sizes[:-1], layer_sizes[1:])],
                    [np.zeros(o) for o in layer_sizes[1:]])


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(model: MlpModel, X: np.ndarray):
    """Return ``(activations, pre_activations, logits)``."""
    acts, pres = [X], []
    a = X
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W.T + b
        pres.append(z)
        if i == last:
            return acts, pres, z
        a = np.maximum(z, 0.0)
        acts.append(a)


def _check_input(model: MlpModel, X) -> np.ndarray:
    X = as_matrix(X)
    if X.shape[1] != model.weights[0].shape[1]:
        raise DimensionError(
            f"input has {X.shape[1]} features, model expects "
            f"{model.weights[0].shape[1]}")
    return X


def mlp_forward_batch(model: MlpModel, X) -> np.ndarray:
    model.check()
    X = _check_input(model, X)
    return softmax(_forward(model, X)[2])


def mlp_forward(model: MlpModel, x) -> np.ndarray:
    return mlp_forward_batch(model, np.asarray(x, dtype=np.float64)[None, :])[0]


def _label_index(model: MlpModel, labels) -> np.ndarray:
    idx = np.asarray(labels, dtype=np.int64) - 1
    n_out = model.weights[-1].shape[0]
    if np.any(idx < 0) or np.any(idx >= n_out):
        raise DimensionError(f"labels must lie in 1..{n_out}")
    return idx


def mlp_loss_and_gradients(model: MlpModel, X, labels):
    """Mean softmax cross-entropy and its gradients.

    Returns ``(loss, grad_weights, grad_biases)`` with gradient lists shaped
    like the parameters. The ReLU derivative at exactly zero is taken as 0.
    """
    X = _check_input(model, X)
    idx = _label_index(model, labels)
    n = len(X)
    if n == 0:
        raise DimensionError("empty batch")
    acts, pres, logits = _forward(model, X)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(log_norm - z[np.arange(n), idx]))

    delta = np.exp(z - log_norm[:, None])
    delta[np.arange(n), idx] -= 1.0
    delta /= n
    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        grad_w[i] = delta.T @ acts[i]
        grad_b[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i]) * (pres[i - 1] > 0.0)
    return loss, grad_w, grad_b


def mlp_predict_batch(model: MlpModel, X) -> np.ndarray:
    model.check()
    X = _check_input(model, X)
    # argmax picks the first maximum, i.e. the smaller label code
    return np.argmax(_forward(model, X)[2], axis=1) + 1


def mlp_predict(model: MlpModel, x) -> int:
    return int(mlp_predict_batch(model, np.asarray(x, dtype=np.float64)[None, :])[0])


@dataclass
class TrainingHistory:
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_accuracy"])
        for row in zip(self.epochs, self.train_loss, self.val_accuracy):
            w.writerow([row[0], repr(row[1]), repr(row[2])])
        return buf.getvalue()


class _Adam:
    def __init__(self, params, config: TrainConfig):
        self.cfg = config
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        c = self.cfg
        self.t += 1
        lr = (c.learning_rate * np.sqrt(1.0 - c.beta2 ** self.t)
              / (1.0 - c.beta1 ** self.t))
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= lr * m / (np.sqrt(v) + c.adam_epsilon)


class _Sgd:
    def __init__(self, params, config: TrainConfig):
        self.lr = config.learning_rate

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


def mlp_train(train_X, train_y, val_X, val_y, config: TrainConfig = TrainConfig(),
              callback=None):
    """Mini-batch training for a fixed number of epochs.

    Initialization and per-epoch shuffling draw from one ``SeededRng`` so
    ``(config, data)`` fully determine the result. Validation accuracy is
    recorded every epoch and never used to stop early.

    Raises
    ------
    TrainingDivergedError
        If a batch loss becomes NaN or infinite.
    """
    train_X = as_matrix(train_X, config.layer_sizes[0])
    val_X = as_matrix(val_X, config.layer_sizes[0])
    train_y = np.asarray(train_y, dtype=np.int64)
    val_y = np.asarray(val_y, dtype=np.int64)
    if len(train_X) == 0 or len(val_X) == 0:
        raise ConfigurationError("training and validation sets must be nonempty")
    rng = SeededRng(config.seed)
    model = init_model(config.layer_sizes, rng)
    params = model.weights + model.biases
    opt = (_Adam if config.optimizer == "adam" else _Sgd)(params, config)
    history = TrainingHistory()
    n = len(train_X)
    bs = min(config.batch_size, n)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            rows = order[start:start + bs]
            # overflow surfaces as a non-finite loss, reported just below
            with np.errstate(over="ignore", invalid="ignore"):
                loss, gw, gb = mlp_loss_and_gradients(model, train_X[rows],
                                                      train_y[rows])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            total += loss * len(rows)
            opt.step(params, gw + gb)
        epoch_loss = total / n
        val_acc = float(np.mean(mlp_predict_batch(model, val_X) == val_y))
        history.epochs.append(epoch)
        history.train_loss.append(epoch_loss)
        history.val_accuracy.append(val_acc)
        if callback is not None:
            callback(epoch, model)
    return model, history
