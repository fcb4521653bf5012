"""Exact arithmetic in negacyclic rings Z_m[X]/(X^d + 1) and the three
coefficient samplers (ternary, rounded Gaussian, uniform) built on top.

Coefficients live in int64 numpy arrays (moduli are < 2^62). Products are
computed either by a pure-Python schoolbook convolution (the reference) or by
a signed Kronecker substitution that hands the convolution to GMP; both give
bit-identical results.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal, Sequence

import gmpy2
import numpy as np

from .errors import DimensionError, InvalidSamplerSpec, RingMismatch

MAX_MODULUS_BITS = 62
GAUSSIAN_TAIL = 6.0  # rejection cut, in units of sigma
DEFAULT_SIGMA = 3.2


@dataclass(frozen=True)
class RingParams:
    degree: int
    modulus: int

    def __post_init__(self):
        d, m = self.degree, self.modulus
        if d < 1 or d & (d - 1):
            raise ValueError(f"degree must be a power of two, got {d}")
        if m < 3 or m % 2 == 0 or m.bit_length() > MAX_MODULUS_BITS:
            raise ValueError(f"modulus must be odd, >= 3 and < 2^{MAX_MODULUS_BITS}, got {m}")


@dataclass(frozen=True, eq=False)
class RingElement:
    params: RingParams
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.int64)
        if c.shape != (self.params.degree,):
            raise DimensionError(f"expected {self.params.degree} coefficients, got shape {c.shape}")
        if c.size and (c.min() < 0 or c.max() >= self.params.modulus):
            raise ValueError("coefficients must be reduced into [0, modulus)")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, params: RingParams) -> "RingElement":
        return cls(params, np.zeros(params.degree, dtype=np.int64))

    @classmethod
    def from_ints(cls, params: RingParams, values) -> "RingElement":
        """Build from arbitrary (possibly negative) integers, reducing mod m."""
        return to_ring(values, params)

    def centered(self) -> np.ndarray:
        """Representatives in (-m/2, m/2]."""
        m = self.params.modulus
        c = self.coeffs.copy()
        c[c > m // 2] -= m
        return c

    def lift(self, params: RingParams) -> "RingElement":
        """Reinterpret the centered coefficients modulo another modulus."""
        if params.degree != self.params.degree:
            raise RingMismatch("lift requires equal degree")
        return to_ring(self.centered(), params)

    def __eq__(self, other):
        if not isinstance(other, RingElement):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash((self.params, self.coeffs.tobytes()))

    def __add__(self, other):
        return ring_arith(self, other, "add")

    def __sub__(self, other):
        return ring_arith(self, other, "sub")

    def __mul__(self, other):
        return ring_arith(self, other, "mul")

    def __neg__(self):
        return RingElement(self.params, (-self.coeffs) % self.params.modulus)


def ring_arith(a: RingElement, b: RingElement, kind: Literal["add", "sub", "mul"],
               method: Literal["fast", "schoolbook"] = "fast") -> RingElement:
    if a.params != b.params:
        raise RingMismatch(f"{a.params} vs {b.params}")
    m = a.params.modulus
    if kind == "add":
        return RingElement(a.params, (a.coeffs + b.coeffs) % m)
    if kind == "sub":
        return RingElement(a.params, (a.coeffs - b.coeffs) % m)
    if kind != "mul":
        raise ValueError(f"unknown op {kind!r}")
    if method == "schoolbook":
        out = schoolbook_negacyclic(a.coeffs.tolist(), b.coeffs.tolist(), m)
        return RingElement(a.params, np.array(out, dtype=np.int64))
    return RingElement(a.params, kronecker_negacyclic(a.centered(), b.centered(), m))


def schoolbook_negacyclic(a: Sequence[int], b: Sequence[int], m: int) -> list[int]:
    """Reference product in Z_m[X]/(X^d + 1) using unbounded Python ints."""
    d = len(a)
    if len(b) != d:
        raise DimensionError("operands differ in length")
    acc = [0] * d
    for i, ai in enumerate(a):
        if not ai:
            continue
        for j, bj in enumerate(b):
            k = i + j
            if k < d:
                acc[k] += ai * bj
            else:
                acc[k - d] -= ai * bj
    return [x % m for x in acc]


def _mpz_from_le(buf: bytes) -> gmpy2.mpz:
    return gmpy2.from_binary(b"\x01\x01" + buf) if buf.strip(b"\0") else gmpy2.mpz(0)


def _mpz_to_le(x: gmpy2.mpz, nbytes: int) -> bytes:
    raw = gmpy2.to_binary(x)[2:] if x else b""
    return raw + b"\0" * (nbytes - len(raw))


def _pack(x: np.ndarray, width: int) -> gmpy2.mpz:
    """Signed Kronecker packing: sum_i x_i 2^(8*width*i), |x_i| < 2^63."""
    d = x.shape[0]
    out = gmpy2.mpz(0)
    for sign, part in ((1, np.where(x > 0, x, 0)), (-1, np.where(x < 0, -x, 0))):
        if not part.any():
            continue
        slots = np.zeros((d, width), dtype=np.uint8)
        take = min(width, 8)
        slots[:, :take] = part.astype("<u8").view(np.uint8).reshape(d, 8)[:, :take]
        out += sign * _mpz_from_le(slots.tobytes())
    return out


def _limbs_mod(limbs: np.ndarray, m: int) -> np.ndarray:
    """Reduce unsigned multi-limb integers (little-endian uint64 rows) mod m."""
    chunk = 64 - m.bit_length()  # acc < m, so acc << chunk stays below 2^64
    mm = np.uint64(m)
    acc = np.zeros(limbs.shape[0], dtype=np.uint64)
    for col in range(limbs.shape[1] - 1, -1, -1):
        limb = limbs[:, col]
        top = 64
        while top > 0:
            step = min(chunk, top)
            top -= step
            bits = (limb >> np.uint64(top)) & np.uint64((1 << step) - 1)
            acc = ((acc << np.uint64(step)) | bits) % mm
    return acc.astype(np.int64)


@lru_cache(maxsize=32)
def _slot_bias(width: int, d: int) -> gmpy2.mpz:
    return _mpz_from_le((1 << (8 * width - 1)).to_bytes(width, "little") * d)


def kronecker_negacyclic(a: np.ndarray, b: np.ndarray, m: int) -> np.ndarray:
    """Negacyclic product of centered coefficient vectors, reduced into [0, m).

    Evaluates both polynomials at 2^w, multiplies the resulting big integers
    with GMP and reads the product modulo 2^(w*d) + 1, which folds X^d to -1.
    """
    d = a.shape[0]
    amax = int(np.abs(a).max(initial=0))
    bmax = int(np.abs(b).max(initial=0))
    if amax == 0 or bmax == 0:
        return np.zeros(d, dtype=np.int64)
    # |slot| <= d * amax * bmax < 2^(w-1)
    bits = amax.bit_length() + bmax.bit_length() + d.bit_length() + 1
    width = -(-bits // 8)
    w = 8 * width
    shift = w * d
    z = _pack(a, width) * _pack(b, width)
    r = gmpy2.f_mod_2exp(z, shift) - gmpy2.f_div_2exp(z, shift)
    modulus = (gmpy2.mpz(1) << shift) + 1
    half = modulus >> 1
    while r > half:
        r -= modulus
    while r < -half:
        r += modulus
    # bias each slot by 2^(w-1) so every slot of the packed value is nonnegative
    bias_slot = 1 << (w - 1)
    bias = _slot_bias(width, d)
    raw = np.frombuffer(_mpz_to_le(r + bias, shift // 8), dtype=np.uint8).reshape(d, width)
    nlimbs = -(-width // 8)
    padded = np.zeros((d, 8 * nlimbs), dtype=np.uint8)
    padded[:, :width] = raw
    out = _limbs_mod(padded.view("<u8"), m) - (bias_slot % m)
    out %= m
    return out


# --- coefficient/vector maps -------------------------------------------------

def to_ring(x, params: RingParams) -> RingElement:
    vals = np.asarray(x)
    if vals.shape != (params.degree,):
        raise DimensionError(f"expected length {params.degree}, got shape {vals.shape}")
    if vals.dtype == object or vals.dtype.kind not in "iu":
        vals = np.array([int(v) % params.modulus for v in vals.tolist()], dtype=np.int64)
    else:
        vals = vals.astype(np.int64) % params.modulus
    return RingElement(params, vals)


def to_vec(x: RingElement) -> np.ndarray:
    return x.coeffs.copy()


def vec_ring_maps(x, direction: Literal["to_ring", "to_vec"], params: RingParams):
    if direction == "to_ring":
        return to_ring(x, params)
    if direction == "to_vec":
        if x.params != params:
            raise RingMismatch(f"{x.params} vs {params}")
        return to_vec(x)
    raise ValueError(f"unknown direction {direction!r}")


# --- samplers ----------------------------------------------------------------

@dataclass(frozen=True)
class SamplerSpec:
    kind: Literal["ternary", "gaussian", "uniform"]
    n: int
    sigma: float | None = None
    modulus: int | None = None

    def validate(self) -> None:
        if self.n < 0:
            raise InvalidSamplerSpec("n must be >= 0")
        if self.kind == "gaussian":
            if self.sigma is None or not self.sigma > 0:
                raise InvalidSamplerSpec(f"gaussian sampler needs sigma > 0, got {self.sigma}")
        elif self.kind == "uniform":
            if self.modulus is None or self.modulus < 2:
                raise InvalidSamplerSpec(f"uniform sampler needs modulus >= 2, got {self.modulus}")
        elif self.kind != "ternary":
            raise InvalidSamplerSpec(f"unknown sampler kind {self.kind!r}")


def sample(spec: SamplerSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw ``spec.n`` integers; output is a function of the generator state only."""
    spec.validate()
    if spec.kind == "ternary":
        # two fair bits: 00 -> -1, 01/10 -> 0, 11 -> +1
        u = rng.integers(0, 4, size=spec.n)
        return np.select([u == 0, u == 3], [-1, 1], 0).astype(np.int64)
    if spec.kind == "uniform":
        return rng.integers(0, spec.modulus, size=spec.n, dtype=np.int64)
    return _rounded_gaussian(spec.n, spec.sigma, rng)


def _rounded_gaussian(n: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    out = np.rint(rng.normal(0.0, sigma, size=n))
    cut = GAUSSIAN_TAIL * sigma
    bad = np.abs(out) > cut
    while bad.any():
        out[bad] = np.rint(rng.normal(0.0, sigma, size=int(bad.sum())))
        bad = np.abs(out) > cut
    return out.astype(np.int64)


def ternary(n, rng):
    return sample(SamplerSpec("ternary", n), rng)


def gaussian(n, sigma, rng):
    return sample(SamplerSpec("gaussian", n, sigma=sigma), rng)


def uniform(n, modulus, rng):
    return sample(SamplerSpec("uniform", n, modulus=modulus), rng)
