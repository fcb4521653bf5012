"""Federated optimization math: SGD steps, local/global losses, the credibility-
weighted gradient aggregation, size-weighted model averaging and the
per-iteration time budget."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateWeights, DimensionError, EmptyDataset, NoUpdates


def _vec(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a flat vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite entries")
    return v


def sgd_step(w, grad, lr: float) -> np.ndarray:
    w, grad = _vec(w), _vec(grad)
    if w.shape != grad.shape:
        raise DimensionError(f"weights {w.shape} vs gradient {grad.shape}")
    if not lr >= 0:
        raise ValueError("learning rate must be nonnegative")
    return w - lr * grad


def federated_sgd_step(w, user_grads: Sequence, lr: float) -> np.ndarray:
    """One step on the mean of per-user gradients."""
    if not user_grads:
        raise NoUpdates("no user gradients")
    return sgd_step(w, np.mean([_vec(g) for g in user_grads], axis=0), lr)


def local_loss(w, dataset, loss_fn: Callable) -> float:
    """Mean per-sample loss; ``loss_fn(w, X, y)`` returns per-sample losses."""
    X, y = dataset
    if len(y) == 0:
        raise EmptyDataset("local dataset is empty")
    return float(np.mean(loss_fn(w, X, y)))


def global_loss(w, datasets: Sequence, loss_fn: Callable,
                multiplicities: Optional[Sequence[float]] = None) -> float:
    """(1/|I|) * sum_i u_i * F_i(w) over the participating datasets."""
    if not datasets:
        raise EmptyDataset("no datasets")
    u = np.ones(len(datasets)) if multiplicities is None else np.asarray(multiplicities, float)
    if u.shape != (len(datasets),):
        raise DimensionError("one multiplicity per dataset")
    per_site = np.array([local_loss(w, ds, loss_fn) for ds in datasets])
    return float(np.dot(u, per_site) / len(datasets))


@dataclass
class AggregationEntry:
    gradient: Optional[np.ndarray]  # None marks an absent update
    share: float = 1.0
    credibility: float = 1.0

    def __post_init__(self):
        if self.share < 0 or not 0.0 <= self.credibility <= 1.0:
            raise ValueError("share must be >= 0 and credibility in [0, 1]")

    @property
    def present(self) -> bool:
        return self.gradient is not None


def aggregate_global(entries: Sequence[AggregationEntry], theta_prev, lr: float):
    """Credibility-weighted mean of the present gradients and the resulting step.

    Returns (global gradient, new parameters).
    """
    theta_prev = _vec(theta_prev)
    present = [e for e in entries if e.present]
    if not present:
        raise NoUpdates("every update is absent")
    total = np.zeros_like(theta_prev)
    norm = 0.0
    for e in present:
        g = _vec(e.gradient)
        if g.shape != theta_prev.shape:
            raise DimensionError(f"gradient {g.shape} vs model {theta_prev.shape}")
        total += e.share * e.credibility * g
        norm += e.share * e.credibility
    return apply_weighted_sum(total, norm, theta_prev, lr)


def apply_weighted_sum(weighted_sum, norm: float, theta_prev, lr: float):
    """Finish an aggregation whose weighted sum was formed elsewhere (e.g. under
    encryption): divide by the public weight total and take the step."""
    if norm == 0:
        raise DegenerateWeights("sum of share * credibility is zero")
    g_global = _vec(weighted_sum) / norm
    return g_global, sgd_step(theta_prev, g_global, lr)


def weighted_average(weights: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    """sum_i C_i w_i / sum_i C_i."""
    if not weights:
        raise DegenerateWeights("nothing to average")
    sizes = np.array([c for c, _ in weights], dtype=np.float64)
    if np.any(sizes < 0):
        raise ValueError("weights must be nonnegative")
    if sizes.sum() == 0:
        raise DegenerateWeights("sum of weights is zero")
    stack = np.stack([_vec(w) for _, w in weights])
    return sizes @ stack / sizes.sum()


@dataclass
class RoundBudget:
    limits: Sequence[float] = field(default_factory=list)  # T_1..T_n
    elapsed: Sequence[float] = field(default_factory=list)  # dt(i) per iteration

    def __post_init__(self):
        if any(t < 0 for t in self.limits) or any(t < 0 for t in self.elapsed):
            raise ValueError("durations must be nonnegative")


def time_budget_ok(budget: RoundBudget) -> bool:
    """Cumulative iteration time must fit within the tightest node limit."""
    limit = min(budget.limits, default=float("inf"))
    return float(sum(budget.elapsed)) <= limit
