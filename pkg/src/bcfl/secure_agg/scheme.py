"""Key setup, internal BGV-style encryption, gadget-wrapped external shares,
share aggregation, modulus switching and decryption of the aggregate.

Noise bounds carried on ciphertexts are bounds on |c0 - s*c1| (centered,
message included). Products of independent random polynomials are bounded
at six standard deviations of the coefficient sum, the usual heuristic for
these schemes; additions add bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DimensionError, NoiseOverflow, ParamError, PartySetMismatch
from ..polyring import RingElement, gaussian, ternary, to_ring, uniform
from .params import CryptoParams
from .quant import centered_mod

TAIL = 6.0


@dataclass(frozen=True)
class PublicKey:
    a: RingElement      # internal ring
    b: RingElement      # internal ring, a*s + q*gamma
    a_ext: RingElement  # external ring, masks party shares


@dataclass(frozen=True)
class KeyMaterial:
    params: CryptoParams
    pk: PublicKey
    party_secrets: tuple[RingElement, ...]  # s_i, external ring
    ledger_secret: RingElement              # SK_C1 = -sum s_i, external ring
    evaluator_secret: RingElement           # SK_C2 = s, internal ring

    @property
    def n_parties(self) -> int:
        return len(self.party_secrets)


@dataclass(frozen=True)
class InternalCiphertext:
    c0: RingElement
    c1: RingElement
    noise_bound: float

    @property
    def modulus(self) -> int:
        return self.c0.params.modulus

    def __add__(self, other: "InternalCiphertext") -> "InternalCiphertext":
        return InternalCiphertext(self.c0 + other.c0, self.c1 + other.c1,
                                  self.noise_bound + other.noise_bound)


@dataclass(frozen=True)
class ExternalShare:
    c: RingElement
    issuer: int
    noise_bound: float  # bound of the wrapped internal ciphertext


def _var(sigma: float) -> float:
    # rounded Gaussian: sigma^2 plus the rounding variance
    return sigma * sigma + 1.0 / 12.0


def fresh_noise_bound(params: CryptoParams) -> float:
    d, q, v = params.degree, params.q, _var(params.sigma)
    # gamma*v (ternary, E[v^2] = 1/2) + e0 - s*e1
    sd = math.sqrt(d * v * 0.5 + v + d * v * v)
    return q / 2 + q * TAIL * sd


def switch_noise_bound(bound: float, params: CryptoParams) -> float:
    d, q, v = params.degree, params.q, _var(params.sigma)
    # rounding/adjustment error eps is within q/2 + 1/2 and roughly uniform
    return bound / params.p + (q / 2 + 1) + TAIL * math.sqrt(d * v * q * q / 12.0)


def setup(n: int, params: CryptoParams, rng: np.random.Generator) -> KeyMaterial:
    if n < 1:
        raise ParamError("need at least one party")
    params.validate()
    R, Rx = params.internal, params.external
    a = to_ring(uniform(R.degree, R.modulus, rng), R)
    s = to_ring(gaussian(R.degree, params.sigma, rng), R)
    gamma = to_ring(gaussian(R.degree, params.sigma, rng), R)
    b = a * s + to_ring(params.q * gamma.centered(), R)
    a_ext = to_ring(uniform(Rx.degree, Rx.modulus, rng), Rx)
    secrets = tuple(to_ring(gaussian(Rx.degree, params.sigma, rng), Rx) for _ in range(n))
    total = RingElement.zero(Rx)
    for si in secrets:
        total = total + si
    km = KeyMaterial(params, PublicKey(a, b, a_ext), secrets, -total, s)
    verify_keys(km)
    return km


def verify_keys(km: KeyMaterial) -> None:
    """Check the key invariants; raises ParamError on violation."""
    params = km.params
    diff = (km.pk.b - km.pk.a * km.evaluator_secret).centered()
    if np.any(diff % params.q):
        raise ParamError("b - a*s is not a multiple of q")
    if np.abs(diff // params.q).max(initial=0) > TAIL * params.sigma:
        raise ParamError("b - a*s = q*gamma with gamma too large")
    total = km.ledger_secret
    for si in km.party_secrets:
        total = total + si
    if np.any(total.coeffs):
        raise ParamError("ledger secret does not cancel the party secrets")


def encrypt_internal(gd, pk: PublicKey, params: CryptoParams,
                     rng: np.random.Generator) -> InternalCiphertext:
    gd = np.asarray(gd, dtype=np.int64)
    if gd.shape != (params.degree,):
        raise DimensionError(f"plaintext must have {params.degree} entries, got {gd.shape}")
    R, q = params.internal, params.q
    m = to_ring(centered_mod(gd, q), R)
    v = to_ring(ternary(R.degree, rng), R)
    e0 = gaussian(R.degree, params.sigma, rng)
    e1 = gaussian(R.degree, params.sigma, rng)
    c0 = pk.b * v + to_ring(q * e0, R) + m
    c1 = pk.a * v + to_ring(q * e1, R)
    return InternalCiphertext(c0, c1, fresh_noise_bound(params))


def raw_decrypt(ct: InternalCiphertext, secret: RingElement) -> np.ndarray:
    """Centered c0 - s*c1 at the ciphertext's current modulus."""
    s = secret.lift(ct.c0.params)
    return (ct.c0 - s * ct.c1).centered()


def gadget_decompose(v: np.ndarray, params: CryptoParams, rng: np.random.Generator) -> np.ndarray:
    """Digits e with G*e = v (mod p1), shape (len(v), l), least significant first.

    Each entry is decomposed after adding a random multiple of p1 that still
    fits in l digits, so equal inputs do not always give equal digits.
    """
    p1, b, l = params.p1, params.base, params.gadget_len
    v = np.asarray(v, dtype=np.int64)
    top = b ** l - 1
    shifts = rng.integers(0, (top - v) // p1 + 1)
    x = v + shifts * p1
    digits = np.empty((v.shape[0], l), dtype=np.int64)
    for j in range(l):
        digits[:, j] = x % b
        x //= b
    return digits


def gadget_recompose(e: np.ndarray, params: CryptoParams) -> np.ndarray:
    """G*e mod p1 for digit rows e of shape (n, l), any integer digits."""
    p1, b = params.p1, params.base
    acc = np.zeros(e.shape[0], dtype=object)
    for j in range(e.shape[1] - 1, -1, -1):
        acc = (acc * b + e[:, j].astype(object)) % p1
    return acc.astype(np.int64)


def gadget_wrap(ct: InternalCiphertext, sk_i: RingElement, issuer: int, pk: PublicKey,
                params: CryptoParams, rng: np.random.Generator) -> ExternalShare:
    if ct.modulus != params.p1:
        raise ParamError("only fresh (mod p1) ciphertexts can be wrapped")
    d, l = params.degree, params.gadget_len
    if params.ext_degree < 2 * d * l:
        raise ParamError("external ring too small for the gadget digits")
    v = np.concatenate([ct.c0.coeffs, ct.c1.coeffs])
    digits = gadget_decompose(v, params, rng).reshape(-1)
    e = np.zeros(params.ext_degree, dtype=np.int64)
    e[: digits.size] = digits
    c = pk.a_ext * sk_i + to_ring(e, params.external)
    return ExternalShare(c, issuer, ct.noise_bound)


def aggregate_and_unwrap(shares: Sequence[ExternalShare], ledger_secret: RingElement,
                         pk: PublicKey, params: CryptoParams, n_parties: int) -> InternalCiphertext:
    """Sum all party shares, strip the masks and recompose the summed ciphertext."""
    issuers = [s.issuer for s in shares]
    if sorted(issuers) != list(range(n_parties)):
        raise PartySetMismatch(
            f"need exactly one share from each of {n_parties} parties, got issuers {sorted(issuers)}")
    c = RingElement.zero(params.external)
    for s in shares:
        c = c + s.c
    e = (c + pk.a_ext * ledger_secret).centered()
    d, l = params.degree, params.gadget_len
    used = 2 * d * l
    if np.any(e[used:]) or np.abs(e).max() > n_parties * (params.base - 1):
        raise PartySetMismatch("shares do not cancel under the ledger secret")
    v = gadget_recompose(e[:used].reshape(2 * d, l), params)
    R = params.internal
    return InternalCiphertext(RingElement(R, v[:d]), RingElement(R, v[d:]),
                              sum(s.noise_bound for s in shares))


def scale_coefficients(c: np.ndarray, params: CryptoParams) -> np.ndarray:
    """round(c * p0 / p1), moved to the nearest integer congruent to c mod q.

    Returns unreduced integers; callers reduce mod p0.
    """
    p, q = params.p, params.q
    c = np.asarray(c, dtype=np.int64)
    r = (c + p // 2) // p
    return r + centered_mod(c - r, q)


def modulus_switch(ct: InternalCiphertext, params: CryptoParams) -> InternalCiphertext:
    if ct.modulus != params.p1:
        raise ParamError("ciphertext is not at modulus p1")
    if ct.noise_bound >= params.p1 / 2:
        raise NoiseOverflow("noise budget exhausted before modulus switch")
    bound = switch_noise_bound(ct.noise_bound, params)
    if bound >= params.p0 / 2:
        raise NoiseOverflow(f"post-switch noise bound {bound:.3g} >= p0/2")
    L = params.lower
    c0 = to_ring(scale_coefficients(ct.c0.coeffs, params), L)
    c1 = to_ring(scale_coefficients(ct.c1.coeffs, params), L)
    return InternalCiphertext(c0, c1, bound)


def decrypt_sum(ct: InternalCiphertext, evaluator_secret: RingElement,
                params: CryptoParams) -> np.ndarray:
    """Plaintext (sum) as centered residues mod q."""
    if ct.noise_bound >= ct.modulus / 2:
        raise NoiseOverflow("noise bound exceeds half the ciphertext modulus")
    x = raw_decrypt(ct, evaluator_secret)
    # the masked term must stay inside the tracked bound; a wrap around the
    # modulus shows up as a value far outside it
    if np.abs(x).max() > ct.noise_bound:
        raise NoiseOverflow("decrypted value exceeds the tracked noise bound")
    return centered_mod(x, params.q)


decrypt_internal = decrypt_sum
