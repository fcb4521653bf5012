"""Fixed-point encoding of real gradients as centered residues mod q."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidGradient, ParamError


@dataclass(frozen=True)
class QuantParams:
    scale: int = 256
    clip: float = 8.0
    max_parties: int = 15

    def __post_init__(self):
        if self.scale < 1 or self.scale & (self.scale - 1):
            raise ParamError("scale must be a power of two")
        if not self.clip > 0 or self.max_parties < 1:
            raise ParamError("clip and max_parties must be positive")

    def check_wrap_safe(self, q: int) -> None:
        """Raise unless max_parties full-scale values sum without wrapping mod q."""
        if not self.max_parties * self.scale * self.clip < q / 2:
            raise ParamError(
                f"{self.max_parties}*{self.scale}*{self.clip} >= q/2: aggregated plaintexts may wrap")


def centered_mod(x: np.ndarray, q: int) -> np.ndarray:
    r = np.mod(x, q)
    return np.where(r > q // 2, r - q, r).astype(np.int64)


def clip(g, qp: QuantParams) -> np.ndarray:
    return np.clip(np.asarray(g, dtype=np.float64), -qp.clip, qp.clip)


def quantize(g, qp: QuantParams, q: int) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise InvalidGradient("gradient contains NaN or infinite entries")
    return centered_mod(np.rint(clip(g, qp) * qp.scale).astype(np.int64), q)


def dequantize(x, qp: QuantParams, q: int) -> np.ndarray:
    return centered_mod(np.asarray(x, dtype=np.int64), q) / qp.scale
