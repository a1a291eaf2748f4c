"""Packing flat weight vectors into ciphertext chunks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ckks import Ciphertext, Decryptor, Encoder, Encryptor
from ..ckks.params import chunk_count
from ..errors import ValidationError


def as_weight_vector(values) -> np.ndarray:
    """Flatten to float64, rejecting empty or non-finite input."""
    w = np.asarray(values, dtype=np.float64).ravel()
    if w.size == 0:
        raise ValidationError("weight vector is empty")
    if not np.all(np.isfinite(w)):
        raise ValidationError("weight vector contains NaN or Inf")
    return w


@dataclass
class PackedWeights:
    """One client's weights as ceil(P / slots) ciphertexts; the last chunk is zero-padded."""

    chunks: list[Ciphertext]
    length: int

    @property
    def chunk_count(self) -> int:
        return len(self.chunks)

    @property
    def level(self) -> int:
        return self.chunks[0].level

    def shape(self) -> tuple[int, int, int]:
        return self.length, self.chunk_count, self.level

    def decrypt(self, decryptor: Decryptor, encoder: Encoder) -> np.ndarray:
        parts = [encoder.decode(decryptor.decrypt(ct)) for ct in self.chunks]
        return np.concatenate(parts)[: self.length]


def pack_and_encrypt(weights, encryptor: Encryptor, encoder: Encoder, level: int | None = None) -> PackedWeights:
    w = as_weight_vector(weights)
    slots = encoder.slot_count
    chunks = [
        encryptor.encrypt(encoder.encode(w[i * slots:(i + 1) * slots], level=level))
        for i in range(chunk_count(w.size, encoder.ring_degree))
    ]
    return PackedWeights(chunks, int(w.size))
