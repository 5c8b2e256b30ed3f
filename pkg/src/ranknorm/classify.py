"""One-vs-rest linear classifier trained with full-batch gradient descent.

Each class k minimizes the L2-regularized squared hinge loss

    0.5 * ||w_k||^2 + C * sum_i max(0, 1 - y_ik * (w_k . x_i + b_k))^2

with y_ik = +1 for samples of class k and -1 otherwise. All classes are
updated together as one K x D weight matrix.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import as_matrix, read_matrix, validate_labels, write_matrix


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainParams:
    """``learning_rate=None`` picks ``1 / L`` for the data's gradient Lipschitz bound L."""

    C: float = 100.0
    epochs: int = 200
    learning_rate: Optional[float] = 1e-4
    init_scale: float = 0.0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray  # K x D
    biases: np.ndarray  # K
    params: TrainParams
    learning_rate: float  # the step actually used

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dims(self) -> int:
        return self.weights.shape[1]

    def save(self, path: Union[str, Path]) -> None:
        """Weights as a binary matrix, biases and hyperparameters in a ``.json`` sidecar."""
        path = Path(path)
        write_matrix(self.weights, path, "binary")
        meta = {
            "biases": self.biases.tolist(),
            "hyperparams": asdict(self.params),
            "learning_rate_used": self.learning_rate,
        }
        path.with_name(path.name + ".json").write_text(
            json.dumps(meta, sort_keys=True, indent=2) + "\n"
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "LinearModel":
        path = Path(path)
        weights = read_matrix(path, "binary")
        meta = json.loads(path.with_name(path.name + ".json").read_text())
        biases = np.asarray(meta["biases"], dtype=np.float64)
        if biases.shape != (weights.shape[0],):
            raise ValueError(f"{path}: {biases.size} biases for {weights.shape[0]} classes")
        return cls(weights, biases, TrainParams(**meta["hyperparams"]), meta["learning_rate_used"])


def one_vs_rest_targets(y: np.ndarray, k: int) -> np.ndarray:
    """N x K matrix of +1 (own class) / -1 (every other class)."""
    return np.where(y[:, None] == np.arange(k)[None, :], 1.0, -1.0)


def _objective(w, b, x, t, C):
    f = x @ w.T + b
    slack = np.maximum(0.0, 1.0 - t * f)
    loss = 0.5 * np.sum(w * w, axis=1) + C * np.sum(slack * slack, axis=0)
    coef = -2.0 * C * slack * t  # d loss / d f
    grad_w = w + coef.T @ x
    grad_b = coef.sum(axis=0)
    return loss, grad_w, grad_b


def loss_and_gradient(
    model: LinearModel, x: np.ndarray, y: np.ndarray, k: int
) -> tuple[float, np.ndarray]:
    """Objective for class ``k`` and its gradient, ordered (w_1..w_D, b)."""
    x = as_matrix(x, cols=model.dims)
    y = np.asarray(y)
    validate_labels(y, x.shape[0])
    t = np.where(y == k, 1.0, -1.0)[:, None]
    loss, gw, gb = _objective(
        model.weights[k : k + 1], model.biases[k : k + 1], x, t, model.params.C
    )
    return float(loss[0]), np.concatenate([gw[0], gb])


def lipschitz_step(x: np.ndarray, C: float) -> float:
    """``1 / L`` with L = 1 + 2C * sigma_max([X, 1])^2, a bound on the gradient's Lipschitz constant."""
    xa = np.hstack([x, np.ones((x.shape[0], 1))])
    sigma = np.linalg.norm(xa, 2)
    return 1.0 / (1.0 + 2.0 * C * sigma * sigma)


def _canonical_order(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # row order must not influence the floating-point sums
    keys = [y] + [x[:, j] for j in range(x.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def train_ovr_linear(
    x: np.ndarray,
    y: np.ndarray,
    params: TrainParams = TrainParams(),
    rng_seed: int = 0,
    n_classes: Optional[int] = None,
    history: Optional[list] = None,
) -> LinearModel:
    """Fit K one-vs-rest squared-hinge classifiers by full-batch gradient descent.

    K defaults to ``max(y) + 1``. ``rng_seed`` only matters when
    ``params.init_scale > 0``. If ``history`` is a list, the per-class
    objective before every epoch (and after the last) is appended to it.
    """
    x = as_matrix(x)
    y = np.asarray(y)
    validate_labels(y, x.shape[0])
    n, d = x.shape
    if n < 2:
        raise ValueError(f"need at least 2 training samples, got {n}")
    if np.unique(y).size < 2:
        raise ValueError("need at least 2 distinct labels to train one-vs-rest classifiers")
    k = int(y.max()) + 1 if n_classes is None else n_classes
    validate_labels(y, n, k)

    order = _canonical_order(x, y)
    x, y = x[order], y[order]
    t = one_vs_rest_targets(y, k)

    lr = params.learning_rate if params.learning_rate is not None else lipschitz_step(x, params.C)
    rng = np.random.default_rng(rng_seed)
    w = params.init_scale * rng.standard_normal((k, d)) if params.init_scale else np.zeros((k, d))
    b = np.zeros(k)

    # overflow is detected explicitly below
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(params.epochs):
            loss, gw, gb = _objective(w, b, x, t, params.C)
            if not np.all(np.isfinite(loss)):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} (learning rate {lr:g} too large?)"
                )
            if history is not None:
                history.append(loss)
            w = w - lr * gw
            b = b - lr * gb
        if history is not None:
            history.append(_objective(w, b, x, t, params.C)[0])
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
        raise TrainingDiverged(f"non-finite weights after epoch {params.epochs}")
    return LinearModel(w, b, params, float(lr))


def predict_scores(model: LinearModel, x: np.ndarray) -> np.ndarray:
    """N x K decision values ``x . w_k + b_k``."""
    x = as_matrix(x)
    if x.shape[1] != model.dims:
        raise ValueError(f"dimension mismatch: model has {model.dims} dims, features have {x.shape[1]}")
    return x @ model.weights.T + model.biases


def accuracy(model: LinearModel, x: np.ndarray, y: np.ndarray) -> float:
    pred = np.argmax(predict_scores(model, x), axis=1)
    return float(np.mean(pred == np.asarray(y)))

