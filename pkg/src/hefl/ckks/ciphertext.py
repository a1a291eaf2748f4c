"""Ciphertext containers and the binary ciphertext format."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BasisError, ParameterError
from ..rns import Domain, PolyRns
from .params import CkksParams

MAGIC = b"LCLT"
FORMAT_VERSION = 1
# magic, version u16, N u32, level u8, scale_bits u8, prime count u8, exact scale f64
_HEADER = struct.Struct("<4sHIBBBd")


@dataclass
class Ciphertext:
    """(c0, c1) over Q_level in the evaluation domain, decrypting as c0 + c1*s."""

    c0: PolyRns
    c1: PolyRns
    scale: float

    def __post_init__(self):
        if self.c0.moduli != self.c1.moduli:
            raise BasisError("ciphertext components must share a basis")

    @property
    def level(self) -> int:
        return len(self.c0.moduli) - 1

    @property
    def ring_degree(self) -> int:
        return self.c0.ring_degree

    def to_bytes(self) -> bytes:
        c0 = self.c0.to_evaluation().coeffs
        c1 = self.c1.to_evaluation().coeffs
        header = _HEADER.pack(MAGIC, FORMAT_VERSION, self.ring_degree, self.level,
                              round(math.log2(self.scale)), self.level + 1, self.scale)
        body = np.concatenate([c0.ravel(), c1.ravel()]).astype("<u8").tobytes()
        return header + body

    @classmethod
    def from_bytes(cls, data: bytes, params: CkksParams) -> "Ciphertext":
        magic, version, n, level, _, count, scale = _HEADER.unpack_from(data)
        if magic != MAGIC or version != FORMAT_VERSION:
            raise ParameterError("not a ciphertext blob (bad magic or version)")
        if n != params.ring_degree or count != level + 1 or level > params.max_level:
            raise ParameterError("ciphertext header does not match the parameter set")
        words = np.frombuffer(data, dtype="<u8", offset=_HEADER.size).astype(np.int64)
        if words.size != 2 * count * n:
            raise ParameterError("truncated ciphertext body")
        moduli = params.basis.moduli(level)
        c0 = PolyRns(words[: count * n].reshape(count, n).copy(), moduli, Domain.EVALUATION)
        c1 = PolyRns(words[count * n:].reshape(count, n).copy(), moduli, Domain.EVALUATION)
        return cls(c0, c1, scale)


@dataclass
class TernaryCiphertext:
    """Unrelinearized product (d0, d1, d2), decrypting as d0 + d1*s + d2*s^2."""

    d0: PolyRns
    d1: PolyRns
    d2: PolyRns
    scale: float

    @property
    def level(self) -> int:
        return len(self.d0.moduli) - 1


def dump_ciphertexts(cts, directory, prefix: str = "ct") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, ct in enumerate(cts):
        path = directory / f"{prefix}_{i:05d}.lclt"
        path.write_bytes(ct.to_bytes())
        paths.append(path)
    return paths
