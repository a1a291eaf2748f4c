"""CKKS parameter sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

from ..errors import ParameterError
from ..rns import RnsBasis
from ..rns.poly import digit_count


@dataclass(frozen=True)
class CkksParams:
    """Ring degree, modulus chain and noise settings.

    The chain is one ``first_mod_bits`` prime followed by ``depth`` primes of
    ``scale_bits`` bits (one per rescale), plus ``alpha`` special primes of
    ``special_mod_bits`` bits for hybrid key switching with digits of
    ``alpha`` primes each.
    """

    ring_degree: int = 8192
    depth: int = 3
    scale_bits: int = 40
    first_mod_bits: int = 46
    special_mod_bits: int = 51
    alpha: int = 1
    security_level: int | None = 128
    ternary_p_zero: float = 1 / 3
    cbd_eta: int = 21

    def __post_init__(self):
        if self.ring_degree < 4 or self.ring_degree & (self.ring_degree - 1):
            raise ParameterError(f"ring degree must be a power of two >= 4, got {self.ring_degree}")
        if self.depth < 0:
            raise ParameterError("depth must be non-negative")
        if not 10 <= self.scale_bits < self.first_mod_bits:
            raise ParameterError("need 10 <= scale_bits < first_mod_bits")
        if self.alpha < 1 or self.alpha > self.depth + 1:
            raise ParameterError("alpha must lie in [1, depth + 1]")

    @cached_property
    def basis(self) -> RnsBasis:
        return RnsBasis.generate(
            self.ring_degree,
            [self.first_mod_bits] + [self.scale_bits] * self.depth,
            [self.special_mod_bits] * self.alpha,
            self.security_level,
        )

    @property
    def slot_count(self) -> int:
        return self.ring_degree // 2

    @property
    def max_level(self) -> int:
        return self.depth

    @property
    def scale(self) -> float:
        return float(2 ** self.scale_bits)

    @property
    def dnum(self) -> int:
        return digit_count(self.depth, self.alpha)

    def ciphertext_bytes(self, level: int | None = None) -> int:
        level = self.max_level if level is None else level
        return 2 * (level + 1) * self.ring_degree * 8

    def check_security(self) -> None:
        """Build the basis, raising ParameterError when it is insecure."""
        _ = self.basis

    def with_(self, **changes) -> "CkksParams":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return CkksParams(**values)


def default_params() -> CkksParams:
    """N = 2**13, depth 3, 40-bit scale, 128-bit security."""
    return CkksParams()


def toy_params(ring_degree: int = 32, depth: int = 3, **kw) -> CkksParams:
    """Small insecure parameters for fast unit tests."""
    return CkksParams(ring_degree=ring_degree, depth=depth, security_level=None, **kw)


def chunk_count(length: int, ring_degree: int) -> int:
    return math.ceil(length / (ring_degree // 2))
