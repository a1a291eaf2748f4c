"""Batch encoding through the canonical embedding restricted to the 5-orbit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CapacityError
from ..rns import Domain, PolyRns
from .params import CkksParams

# Rounded coefficients must fit a signed 64-bit word before RNS reduction.
MAX_COEFF_BITS = 62


@dataclass
class Plaintext:
    poly: PolyRns
    scale: float

    @property
    def level(self) -> int:
        return len(self.poly.moduli) - 1


class Encoder:
    """Maps up to N/2 real slots to ring elements and back.

    Slot j corresponds to the evaluation point zeta^(5^j) with
    zeta = exp(i*pi/N); the conjugate points are filled with conjugates so the
    encoded polynomial is real.
    """

    def __init__(self, params: CkksParams):
        self.params = params
        n = params.ring_degree
        self.ring_degree = n
        self.slot_count = n // 2
        two_n = 2 * n
        orbit = np.empty(self.slot_count, dtype=np.int64)
        g = 1
        for j in range(self.slot_count):
            orbit[j] = g
            g = g * 5 % two_n
        # subgroup T of Z*_2N generated by 5
        self.rotation_group = orbit
        self.slot_index = (orbit - 1) // 2
        self.conj_index = (two_n - orbit - 1) // 2
        self.zeta_pows = np.exp(1j * np.pi * np.arange(n) / n)

    def embed(self, coeffs: np.ndarray) -> np.ndarray:
        """Evaluate a real coefficient vector at the slot roots."""
        evals = self.ring_degree * np.fft.ifft(coeffs * self.zeta_pows)
        return evals[self.slot_index]

    def unembed(self, slots: np.ndarray) -> np.ndarray:
        """Real coefficient vector whose slot evaluations are ``slots``."""
        evals = np.zeros(self.ring_degree, dtype=np.complex128)
        evals[self.slot_index] = slots
        evals[self.conj_index] = np.conj(slots)
        coeffs = np.fft.fft(evals) / self.ring_degree / self.zeta_pows
        return coeffs.real

    def encode(self, values, scale: float | None = None, level: int | None = None) -> Plaintext:
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size > self.slot_count:
            raise CapacityError(f"{values.size} values exceed the {self.slot_count} available slots")
        if not np.all(np.isfinite(values)):
            raise CapacityError("cannot encode non-finite values")
        scale = self.params.scale if scale is None else float(scale)
        level = self.params.max_level if level is None else level
        slots = np.zeros(self.slot_count, dtype=np.complex128)
        slots[: values.size] = values
        scaled = np.rint(self.unembed(slots) * scale)
        moduli = self.params.basis.moduli(level)
        bound = min(2.0 ** MAX_COEFF_BITS, float(np.prod([float(m.value) for m in moduli])) / 2)
        if np.max(np.abs(scaled), initial=0.0) >= bound:
            raise CapacityError("encoded message exceeds the modulus / message bound")
        poly = PolyRns.from_signed(scaled.astype(np.int64), moduli).to_evaluation()
        return Plaintext(poly, scale)

    def decode(self, pt: Plaintext, length: int | None = None) -> np.ndarray:
        poly = pt.poly.to_coefficient()
        if len(poly.moduli) == 1:
            q = poly.moduli[0].value
            c = poly.coeffs[0]
            coeffs = np.where(c > q // 2, c - q, c).astype(np.float64)
        else:
            coeffs = poly.to_bigint().astype(np.float64)
        slots = self.embed(coeffs / pt.scale).real
        return slots if length is None else slots[:length]

    def encode_constant(self, value: float, scale: float, level: int) -> Plaintext:
        """The constant polynomial round(value * scale): every slot holds ``value``."""
        moduli = self.params.basis.moduli(level)
        c = int(round(value * scale))
        coeffs = np.array([[c % m.value] * self.ring_degree for m in moduli], dtype=np.int64)
        return Plaintext(PolyRns(coeffs, moduli, Domain.EVALUATION), scale)
