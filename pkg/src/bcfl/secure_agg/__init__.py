from .masking import linear_mask, random_mask, unmask
from .params import CryptoParams, gadget_length, next_prime_congruent
from .quant import QuantParams, centered_mod, clip, dequantize, quantize
from .scheme import (
    ExternalShare,
    InternalCiphertext,
    KeyMaterial,
    PublicKey,
    aggregate_and_unwrap,
    decrypt_internal,
    decrypt_sum,
    encrypt_internal,
    fresh_noise_bound,
    gadget_decompose,
    gadget_recompose,
    gadget_wrap,
    modulus_switch,
    raw_decrypt,
    scale_coefficients,
    setup,
    verify_keys,
)

__all__ = [name for name in dir() if not name.startswith("_")]
