"""Binary wire format for keys, ciphertexts and shares.

Layout (all integers little-endian)::

    magic      8 bytes  b"BCFLSAGG"
    version    u8
    kind       u8       see KIND_*
    digest     32 bytes sha256 of the CryptoParams
    issuer     i32      party index, -1 when not applicable
    noise      f64      tracked noise bound, 0 when not applicable
    count      u16      number of ring elements that follow
    element*   u32 degree, u64 modulus, degree x u64 coefficients
"""
from __future__ import annotations

import struct

import numpy as np

from ..errors import FormatError
from ..polyring import RingElement, RingParams
from .params import CryptoParams
from .scheme import ExternalShare, InternalCiphertext, PublicKey

MAGIC = b"BCFLSAGG"
VERSION = 1
KIND_SECRET, KIND_PUBLIC, KIND_INTERNAL, KIND_SHARE = 1, 2, 3, 4

_HEADER = struct.Struct("<8sBB32siH")
_ELEM = struct.Struct("<IQ")
_NOISE = struct.Struct("<d")


def _encode(kind: int, params: CryptoParams, elems, issuer: int = -1, noise: float = 0.0) -> bytes:
    head = _HEADER.pack(MAGIC, VERSION, kind, params.digest(), issuer, len(elems))
    parts = [head[:-2], _NOISE.pack(noise), head[-2:]]
    for e in elems:
        parts.append(_ELEM.pack(e.params.degree, e.params.modulus))
        parts.append(e.coeffs.astype("<u8").tobytes())
    return b"".join(parts)


def _decode(blob: bytes, params: CryptoParams, kind: int):
    n_head = _HEADER.size + _NOISE.size
    if len(blob) < n_head:
        raise FormatError("truncated header")
    head = blob[: _HEADER.size - 2] + blob[n_head - 2: n_head]
    magic, version, got_kind, digest, issuer, count = _HEADER.unpack(head)
    (noise,) = _NOISE.unpack(blob[_HEADER.size - 2: n_head - 2])
    if magic != MAGIC:
        raise FormatError("bad magic")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if got_kind != kind:
        raise FormatError(f"expected kind {kind}, found {got_kind}")
    if digest != params.digest():
        raise FormatError("parameter digest mismatch")
    off, elems = n_head, []
    for _ in range(count):
        if off + _ELEM.size > len(blob):
            raise FormatError("truncated element header")
        degree, modulus = _ELEM.unpack_from(blob, off)
        off += _ELEM.size
        end = off + 8 * degree
        if end > len(blob):
            raise FormatError("truncated coefficients")
        raw = np.frombuffer(blob[off:end], dtype="<u8")
        try:
            if raw.size and int(raw.max()) >= modulus:
                raise ValueError("coefficient not reduced")
            elems.append(RingElement(RingParams(degree, modulus), raw.astype(np.int64)))
        except ValueError as exc:
            raise FormatError(f"bad element: {exc}") from None
        off = end
    if off != len(blob):
        raise FormatError("trailing bytes")
    return elems, issuer, noise


def _expect(elems, rings):
    if [e.params for e in elems] != list(rings):
        raise FormatError("element ring does not match the parameter set")
    return elems


def dump_secret(x: RingElement, params: CryptoParams, issuer: int = -1) -> bytes:
    return _encode(KIND_SECRET, params, [x], issuer)


def load_secret(blob: bytes, params: CryptoParams) -> tuple[RingElement, int]:
    elems, issuer, _ = _decode(blob, params, KIND_SECRET)
    if len(elems) != 1 or elems[0].params not in (params.internal, params.external):
        raise FormatError("secret must be one element of the internal or external ring")
    return elems[0], issuer


def dump_public(pk: PublicKey, params: CryptoParams) -> bytes:
    return _encode(KIND_PUBLIC, params, [pk.a, pk.b, pk.a_ext])


def load_public(blob: bytes, params: CryptoParams) -> PublicKey:
    elems, _, _ = _decode(blob, params, KIND_PUBLIC)
    if len(elems) != 3:
        raise FormatError("public key needs three elements")
    return PublicKey(*_expect(elems, [params.internal, params.internal, params.external]))


def dump_internal(ct: InternalCiphertext, params: CryptoParams) -> bytes:
    return _encode(KIND_INTERNAL, params, [ct.c0, ct.c1], noise=ct.noise_bound)


def load_internal(blob: bytes, params: CryptoParams) -> InternalCiphertext:
    elems, _, noise = _decode(blob, params, KIND_INTERNAL)
    if len(elems) != 2:
        raise FormatError("internal ciphertext needs two elements")
    if elems[0].params not in (params.internal, params.lower):
        raise FormatError("ciphertext ring does not match the parameter set")
    _expect(elems, [elems[0].params] * 2)
    return InternalCiphertext(elems[0], elems[1], noise)


def dump_share(share: ExternalShare, params: CryptoParams) -> bytes:
    return _encode(KIND_SHARE, params, [share.c], share.issuer, share.noise_bound)


def load_share(blob: bytes, params: CryptoParams) -> ExternalShare:
    elems, issuer, noise = _decode(blob, params, KIND_SHARE)
    if len(elems) != 1:
        raise FormatError("share needs one element")
    return ExternalShare(_expect(elems, [params.external])[0], issuer, noise)
