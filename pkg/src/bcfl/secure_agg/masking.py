"""Secret-matrix linear masking of a mini-batch data matrix.

A row-stochastic S x S matrix phi mixes the S rows of Z; only holders of phi
can undo the mixing. Stand-alone: not composed with the lattice scheme.
"""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError, SingularMask

MAX_CONDITION = 1e12


def _check_phi(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
        raise DimensionError(f"phi must be square, got shape {phi.shape}")
    if np.any(phi < 0) or np.any(phi > 1):
        raise ValueError("phi entries must lie in [0, 1]")
    if not np.allclose(phi.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("phi rows must sum to 1")
    if np.linalg.cond(phi) > MAX_CONDITION:
        raise SingularMask("phi is singular or too ill-conditioned to invert")
    return phi


def linear_mask(Z, phi) -> np.ndarray:
    phi = _check_phi(phi)
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[0] != phi.shape[0]:
        raise DimensionError(f"Z has {Z.shape[0]} rows, phi is {phi.shape[0]}x{phi.shape[0]}")
    return phi @ Z


def unmask(masked, phi) -> np.ndarray:
    phi = _check_phi(phi)
    return np.linalg.solve(phi, np.asarray(masked, dtype=np.float64))


def random_mask(size: int, rng: np.random.Generator, mix: float = 0.4) -> np.ndarray:
    """Row-stochastic, strictly diagonally dominant for mix < 0.5 (hence invertible)."""
    rows = rng.dirichlet(np.ones(size), size=size)
    return (1.0 - mix) * np.eye(size) + mix * rows
