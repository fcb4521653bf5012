"""Linear-softmax classifier with analytic cross-entropy gradients.

Parameters are a flat vector holding a (n_features + 1) x n_classes matrix,
last row being the bias.
"""
from __future__ import annotations

import numpy as np

from ..errors import DivergenceError, EmptyDataset
from ..fedlearn import sgd_step
from .data import SyntheticDataset


def n_params(n_features: int, n_classes: int) -> int:
    return (n_features + 1) * n_classes


def init_weights(n_features: int, n_classes: int) -> np.ndarray:
    return np.zeros(n_params(n_features, n_classes))


def _logits(w: np.ndarray, X: np.ndarray, n_classes: int) -> np.ndarray:
    W = np.asarray(w, dtype=np.float64).reshape(X.shape[1] + 1, n_classes)
    return X @ W[:-1] + W[-1]


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def per_sample_loss(w, X, y, n_classes: int) -> np.ndarray:
    logp = _log_softmax(_logits(w, X, n_classes))
    return -logp[np.arange(len(y)), y]


def loss_and_grad(w, X, y, n_classes: int) -> tuple[float, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    if len(y) == 0:
        raise EmptyDataset("empty batch")
    logp = _log_softmax(_logits(w, X, n_classes))
    n = len(y)
    loss = -logp[np.arange(n), y].mean()
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    Xb = np.hstack([X, np.ones((n, 1))])
    return float(loss), (Xb.T @ delta).ravel()


def dataset_loss(w, data: SyntheticDataset) -> float:
    if len(data) == 0:
        raise EmptyDataset("empty dataset")
    return float(per_sample_loss(w, data.X, data.y, data.n_classes).mean())


def train_local(w0, data: SyntheticDataset, lr: float, iterations: int,
                rng: np.random.Generator, batch_size: int = 32) -> tuple[np.ndarray, int]:
    """Mini-batch SGD; returns the final weights and the gradient count."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if len(data) == 0:
        raise EmptyDataset("empty dataset")
    w = np.array(w0, dtype=np.float64)
    b = min(batch_size, len(data))
    for _ in range(iterations):
        idx = rng.integers(0, len(data), size=b)
        loss, g = loss_and_grad(w, data.X[idx], data.y[idx], data.n_classes)
        if not np.isfinite(loss) or not np.all(np.isfinite(g)):
            raise DivergenceError("loss became non-finite during local training")
        w = sgd_step(w, g, lr)
    return w, iterations


def predict(w, X, n_classes: int) -> np.ndarray:
    return _logits(w, np.asarray(X, dtype=np.float64), n_classes).argmax(axis=1)


def evaluate_accuracy(w, data: SyntheticDataset) -> float:
    if len(data) == 0:
        raise EmptyDataset("empty dataset")
    return float(np.mean(predict(w, data.X, data.n_classes) == data.y))
