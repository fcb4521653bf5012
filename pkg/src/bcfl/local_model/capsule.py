"""Capsule primitives: squashing, routing softmax and routing by agreement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError


def squash(p, axis: int = -1) -> np.ndarray:
    """Rescale to norm |p|^2 / (1 + |p|^2) keeping direction; zero maps to zero."""
    p = np.asarray(p, dtype=np.float64)
    sq = np.sum(p * p, axis=axis, keepdims=True)
    norm = np.sqrt(sq)
    scale = np.divide(sq / (1.0 + sq), norm, out=np.zeros_like(norm), where=norm > 0)
    return p * scale


def routing_softmax(b, axis: int = -1) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    z = np.exp(b - b.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


@dataclass(frozen=True)
class CapsuleLayerSpec:
    transforms: np.ndarray  # (I, J, P_out, P_in)
    iterations: int = 3

    def __post_init__(self):
        t = np.asarray(self.transforms, dtype=np.float64)
        if t.ndim != 4:
            raise DimensionError("transforms must have shape (I, J, P_out, P_in)")
        if self.iterations < 1:
            raise ValueError("need at least one routing iteration")
        if not np.all(np.isfinite(t)):
            raise ValueError("non-finite transforms")
        object.__setattr__(self, "transforms", t)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.transforms.shape


def capsule_forward(spec: CapsuleLayerSpec, u) -> np.ndarray:
    """Route input poses u (I, P_in) to output poses v (J, P_out)."""
    u = np.asarray(u, dtype=np.float64)
    n_in, n_out, _, p_in = spec.shape
    if u.shape != (n_in, p_in):
        raise DimensionError(f"expected poses of shape {(n_in, p_in)}, got {u.shape}")
    u_hat = np.einsum("ijab,ib->ija", spec.transforms, u)
    logits = np.zeros((n_in, n_out))
    for _ in range(spec.iterations):
        c = routing_softmax(logits, axis=1)
        s = np.einsum("ij,ija->ja", c, u_hat)
        v = squash(s)
        logits = logits + np.einsum("ija,ja->ij", u_hat, v)
    return v
