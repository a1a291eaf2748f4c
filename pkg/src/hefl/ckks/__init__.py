"""RNS-CKKS: encoding, keys, encryption and homomorphic evaluation."""

from .ciphertext import Ciphertext, TernaryCiphertext, dump_ciphertexts
from .encoding import Encoder, Plaintext
from .evaluator import Evaluator, OpCounters
from .keys import (
    Decryptor,
    Encryptor,
    EvaluationKey,
    KeyBundle,
    KeyGenerator,
    PublicKey,
    RotationKeySet,
    SecretKey,
    default_rotation_steps,
    galois_element,
    keygen,
)
from .params import CkksParams, chunk_count, default_params, toy_params

__all__ = [
    "Ciphertext", "CkksParams", "Decryptor", "Encoder", "Encryptor", "EvaluationKey", "Evaluator",
    "KeyBundle", "KeyGenerator", "OpCounters", "Plaintext", "PublicKey", "RotationKeySet",
    "SecretKey", "TernaryCiphertext", "chunk_count", "default_params", "default_rotation_steps",
    "dump_ciphertexts", "galois_element", "keygen", "toy_params",
]
