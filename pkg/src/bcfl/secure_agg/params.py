"""Parameter sets for the two-ring aggregation scheme."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property

import gmpy2

from ..errors import ParamError
from ..polyring import DEFAULT_SIGMA, RingParams

DEFAULT_Q = 65537


def next_prime_congruent(lower: int, step: int) -> int:
    """Smallest prime p > lower with p = 1 (mod step)."""
    k = (lower - 1) // step + 1
    while True:
        cand = k * step + 1
        if cand > lower and gmpy2.is_prime(cand, 50):
            return cand
        k += 1


def gadget_length(modulus: int, base: int) -> int:
    """Smallest l with base**l >= modulus."""
    l, acc = 0, 1
    while acc < modulus:
        acc *= base
        l += 1
    return l


@dataclass(frozen=True)
class CryptoParams:
    """Moduli and ring sizes.

    Ciphertexts start modulo p1 = p * p0 and are switched down to p0 before
    decryption; q is the plaintext modulus. The external ring must hold the
    2*d*l gadget digits of one internal ciphertext.
    """

    degree: int
    ext_degree: int
    q: int
    p: int
    p0: int
    sigma: float = DEFAULT_SIGMA
    base: int = 2

    def __post_init__(self):
        self.validate()

    @classmethod
    def generate(cls, degree: int, q: int = DEFAULT_Q, sigma: float = DEFAULT_SIGMA,
                 base: int = 2, ext_degree: int | None = None) -> "CryptoParams":
        two_d = 2 * degree
        p0 = next_prime_congruent(1 << 30, two_d)
        # p = 1 (mod q) makes p1 = p0 (mod q), which modulus switching relies on
        p = next_prime_congruent(1 << 20, 2 * q)
        if ext_degree is None:
            need = 2 * degree * gadget_length(p * p0, base)
            ext_degree = 1 << (need - 1).bit_length()
        return cls(degree, ext_degree, q, p, p0, sigma, base)

    @property
    def p1(self) -> int:
        return self.p * self.p0

    @property
    def gadget_len(self) -> int:
        return gadget_length(self.p1, self.base)

    @cached_property
    def internal(self) -> RingParams:
        return RingParams(self.degree, self.p1)

    @cached_property
    def lower(self) -> RingParams:
        return RingParams(self.degree, self.p0)

    @cached_property
    def external(self) -> RingParams:
        return RingParams(self.ext_degree, self.p1)

    def validate(self) -> None:
        try:
            RingParams(self.degree, 3)
            RingParams(self.ext_degree, 3)
        except ValueError as exc:
            raise ParamError(str(exc)) from None
        for name in ("p", "p0"):
            if not gmpy2.is_prime(getattr(self, name), 50):
                raise ParamError(f"{name} must be prime")
        if self.p1.bit_length() > 62:
            raise ParamError("p1 = p*p0 must be below 2^62")
        if not 2 <= self.q < self.p0:
            raise ParamError("need 2 <= q < p0")
        if math.gcd(self.q, self.p1) != 1:
            raise ParamError("q must be coprime to p1")
        if self.p % self.q != 1:
            raise ParamError("need p = 1 (mod q) for modulus switching to keep plaintexts")
        if not self.sigma > 0:
            raise ParamError("sigma must be positive")
        if self.base < 2 or self.base ** self.gadget_len >= 1 << 63:
            raise ParamError("gadget base out of range")
        if self.ext_degree < 2 * self.degree * self.gadget_len:
            raise ParamError(
                f"external degree {self.ext_degree} cannot hold "
                f"2*{self.degree}*{self.gadget_len} gadget digits")

    def to_dict(self) -> dict:
        return {"degree": self.degree, "ext_degree": self.ext_degree, "q": self.q,
                "p": self.p, "p0": self.p0, "sigma": self.sigma, "base": self.base}

    def digest(self) -> bytes:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).digest()
