"""Gaussian-mixture classification data standing in for the imaging corpus."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import EmptyDataset, SpecError


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 600
    n_features: int = 20
    n_classes: int = 3
    class_sep: float = 3.0      # distance between any two class means
    sigma: float = 1.0          # isotropic std, used when cov is None
    means: np.ndarray | None = None   # (n_classes, n_features); drawn from task_seed if None
    cov: np.ndarray | None = None     # shared (n_features, n_features) covariance
    task_seed: int = 0

    def validate(self) -> None:
        if self.n_samples < 1 or self.n_features < 1 or self.n_classes < 2:
            raise SpecError("need n_samples >= 1, n_features >= 1, n_classes >= 2")
        if self.cov is None:
            if not self.sigma > 0:
                raise SpecError("sigma must be positive")
        else:
            cov = np.asarray(self.cov, dtype=float)
            if cov.shape != (self.n_features,) * 2:
                raise SpecError(f"covariance must be {self.n_features}x{self.n_features}")
            if not np.allclose(cov, cov.T):
                raise SpecError("covariance is not symmetric")
            if np.linalg.eigvalsh(cov).min() < -1e-10:
                raise SpecError("covariance is not positive semidefinite")
        if self.means is not None and np.shape(self.means) != (self.n_classes, self.n_features):
            raise SpecError("means must have shape (n_classes, n_features)")
        if self.means is None and self.n_classes > self.n_features:
            raise SpecError("generated means need n_classes <= n_features")

    def class_means(self) -> np.ndarray:
        if self.means is not None:
            return np.asarray(self.means, dtype=float)
        rng = np.random.default_rng(self.task_seed)
        q, _ = np.linalg.qr(rng.normal(size=(self.n_features, self.n_classes)))
        # orthonormal directions scaled so every pair of means is class_sep apart
        return (self.class_sep / np.sqrt(2.0)) * q.T


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    X: np.ndarray
    y: np.ndarray
    n_classes: int

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise SpecError("X must be (N, F) and y must be (N,)")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise SpecError("labels out of range")

    def __len__(self):
        return self.X.shape[0]

    def __eq__(self, other):
        return (isinstance(other, SyntheticDataset) and self.n_classes == other.n_classes
                and np.array_equal(self.X, other.X) and np.array_equal(self.y, other.y))

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "SyntheticDataset":
        return SyntheticDataset(self.X[idx], self.y[idx], self.n_classes)

    def split(self, fraction: float) -> tuple["SyntheticDataset", "SyntheticDataset"]:
        """Deterministic head/tail split (rows are already shuffled at generation)."""
        k = int(round(len(self) * fraction))
        if k == 0 or k == len(self):
            raise EmptyDataset("split would leave an empty side")
        return self.subset(slice(0, k)), self.subset(slice(k, None))

    def shards(self, n: int) -> list["SyntheticDataset"]:
        return [self.subset(idx) for idx in np.array_split(np.arange(len(self)), n)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.n_features)] + ["label"])
            for row, label in zip(self.X, self.y):
                w.writerow([repr(float(v)) for v in row] + [int(label)])

    @classmethod
    def from_csv(cls, path, n_classes: int) -> "SyntheticDataset":
        with open(Path(path), newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        X = np.array([[float(v) for v in r[:-1]] for r in rows])
        y = np.array([int(r[-1]) for r in rows], dtype=np.int64)
        return cls(X, y, n_classes)


def gen_synthetic(spec: SyntheticSpec, seed: int) -> SyntheticDataset:
    spec.validate()
    rng = np.random.default_rng(seed)
    means = spec.class_means()
    y = rng.permutation(np.arange(spec.n_samples) % spec.n_classes)
    if spec.cov is None:
        noise = rng.normal(0.0, spec.sigma, size=(spec.n_samples, spec.n_features))
    else:
        noise = rng.multivariate_normal(np.zeros(spec.n_features), spec.cov,
                                        size=spec.n_samples, method="eigh")
    return SyntheticDataset(means[y] + noise, y.astype(np.int64), spec.n_classes)
