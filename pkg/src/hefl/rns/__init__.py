"""Modular and RNS polynomial arithmetic: primes, NTT, basis extension, sampling."""

from .poly import (
    Domain,
    Modulus,
    PolyRns,
    RnsBasis,
    apply_automorphism,
    automorphism_permutation,
    convert_basis,
    digit_count,
    digit_factor,
    digit_layout,
    drop_last_prime,
    find_primitive_root,
    generate_primes,
    mod_down,
    mod_up,
    ntt_forward,
    ntt_inverse,
    poly_add,
    poly_mul,
    poly_pointwise_mul,
    poly_sub,
    rns_decompose,
)
from .sampling import sample

__all__ = [
    "Domain", "Modulus", "PolyRns", "RnsBasis", "apply_automorphism", "automorphism_permutation",
    "convert_basis", "digit_count", "digit_factor", "digit_layout", "drop_last_prime",
    "find_primitive_root", "generate_primes", "mod_down", "mod_up", "ntt_forward", "ntt_inverse",
    "poly_add", "poly_mul", "poly_pointwise_mul", "poly_sub", "rns_decompose", "sample",
]
