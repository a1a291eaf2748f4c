"""Key generation, encryption and decryption."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from ..errors import KeyMissingError, ParameterError
from ..rns import Domain, PolyRns, apply_automorphism, mod_down
from ..rns import sampling
from ..rns.poly import digit_factor, digit_layout
from .ciphertext import Ciphertext, TernaryCiphertext
from .encoding import Plaintext
from .params import CkksParams

RELINEARIZATION = "relinearization"
ROTATION = "rotation"


def galois_element(step: int, ring_degree: int) -> int:
    """X -> X^(5^step): rotates slots left by ``step``."""
    return pow(5, step % (ring_degree // 2), 2 * ring_degree)


def default_rotation_steps(slot_count: int) -> list[int]:
    steps, k = [], 1
    while k <= slot_count // 2:
        steps.append(k)
        k *= 2
    return steps


@dataclass
class SecretKey:
    """Ternary s; ``s`` holds it over the full extended basis (evaluation domain)."""

    coeffs: np.ndarray = field(repr=False)
    s: PolyRns = field(repr=False)

    def at_level(self, level: int) -> PolyRns:
        return self.s.select(self.s.moduli[: level + 1])


@dataclass
class PublicKey:
    """(u0, u1) = ([-a*s + e], a) over the extended basis."""

    u0: PolyRns = field(repr=False)
    u1: PolyRns = field(repr=False)


@dataclass
class EvaluationKey:
    """One (k0, k1) pair per decomposition digit, over P*Q_top.

    k0_j + k1_j * s == P * Q_hat_j * s' + e_j, with s' = s^2 for
    relinearization and s' = phi_g(s) for a rotation by ``step``.
    """

    kind: str
    digits: list[tuple[PolyRns, PolyRns]] = field(repr=False)
    step: int | None = None
    galois: int | None = None
    _by_level: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def digit_at_level(self, j: int, level: int, basis) -> tuple[PolyRns, PolyRns]:
        """Digit j restricted to q_0..q_level and P (cached; keys are immutable)."""
        cached = self._by_level.get((j, level))
        if cached is None:
            ext = basis.extended(level)
            k0, k1 = self.digits[j]
            cached = self._by_level[j, level] = (k0.select(ext), k1.select(ext))
        return cached


class RotationKeySet(dict):
    """Rotation step -> EvaluationKey."""

    def require(self, step: int) -> EvaluationKey:
        try:
            return self[step]
        except KeyError:
            raise KeyMissingError(f"no rotation key for step {step}") from None


class KeyBundle(NamedTuple):
    secret: SecretKey
    public: PublicKey
    relin: EvaluationKey
    rotations: RotationKeySet


class KeyGenerator:
    """Samples the secret key once and derives every other key from it."""

    def __init__(self, params: CkksParams, seed):
        self.params = params
        self.basis = params.basis
        self.rng = sampling.as_generator(seed)
        n = params.ring_degree
        coeffs = sampling.ternary(self.rng, n, params.ternary_p_zero)
        ext = self.basis.extended(params.max_level)
        self.secret = SecretKey(coeffs, PolyRns.from_signed(coeffs, ext).to_evaluation())

    def _error(self, moduli) -> PolyRns:
        e = sampling.centered_binomial(self.rng, self.params.ring_degree, self.params.cbd_eta)
        return PolyRns.from_signed(e, moduli).to_evaluation()

    def public_key(self) -> PublicKey:
        """(-a*s + e, a) over the extended basis P*Q_top."""
        ext = self.basis.extended(self.params.max_level)
        a = sampling.uniform(self.rng, ext, Domain.EVALUATION)
        return PublicKey(self._error(ext) - a * self.secret.s, a)

    def _switching_key(self, target: PolyRns, kind: str, step=None, galois=None) -> EvaluationKey:
        params, basis = self.params, self.basis
        ext = basis.extended(params.max_level)
        p = basis.special_product
        s = self.secret.s
        digits = []
        for j, _ in enumerate(digit_layout(basis, params.max_level, params.alpha)):
            a = sampling.uniform(self.rng, ext, Domain.EVALUATION)
            factor = p * digit_factor(basis, params.alpha, j)
            k0 = self._error(ext) - a * s + target.mul_scalar([factor % m.value for m in ext])
            digits.append((k0, a))
        return EvaluationKey(kind, digits, step, galois)

    def relin_key(self) -> EvaluationKey:
        return self._switching_key(self.secret.s * self.secret.s, RELINEARIZATION)

    def rotation_key(self, step: int) -> EvaluationKey:
        step %= self.params.slot_count
        g = galois_element(step, self.params.ring_degree)
        return self._switching_key(apply_automorphism(self.secret.s, g), ROTATION, step, g)

    def rotation_keys(self, steps: Iterable[int]) -> RotationKeySet:
        keys = RotationKeySet()
        for k in steps:
            k %= self.params.slot_count
            if k and k not in keys:
                keys[k] = self.rotation_key(k)
        return keys


def keygen(params: CkksParams, seed, rotation_steps: Iterable[int] | None = None) -> KeyBundle:
    """Secret, public, relinearization and rotation keys for ``params``.

    Rotation keys default to every power of two up to slot_count / 2.
    """
    params.check_security()
    gen = KeyGenerator(params, seed)
    steps = default_rotation_steps(params.slot_count) if rotation_steps is None else rotation_steps
    return KeyBundle(gen.secret, gen.public_key(), gen.relin_key(), gen.rotation_keys(steps))


class Encryptor:
    def __init__(self, params: CkksParams, public_key: PublicKey, seed):
        self.params = params
        self.pk = public_key
        self.rng = sampling.as_generator(seed)

    def encrypt_zero(self, level: int) -> tuple[PolyRns, PolyRns]:
        """(r*u0 + e0, r*u1 + e1) sampled over P*Q_level, then divided by P.

        Dividing by the special modulus shrinks the r*e + e1*s noise to the
        rounding term, so fresh ciphertexts carry far less error than a
        direct encryption over Q_level.
        """
        basis = self.params.basis
        ext = basis.extended(level)
        n = self.params.ring_degree
        r = PolyRns.from_signed(sampling.ternary(self.rng, n, self.params.ternary_p_zero), ext).to_evaluation()
        e0 = PolyRns.from_signed(sampling.centered_binomial(self.rng, n, self.params.cbd_eta), ext).to_evaluation()
        e1 = PolyRns.from_signed(sampling.centered_binomial(self.rng, n, self.params.cbd_eta), ext).to_evaluation()
        u0, u1 = self.pk.u0.select(ext), self.pk.u1.select(ext)
        return mod_down(r * u0 + e0, basis, level), mod_down(r * u1 + e1, basis, level)

    def encrypt(self, pt: Plaintext) -> Ciphertext:
        if pt.level > self.params.max_level:
            raise ParameterError("plaintext level exceeds the top level")
        z0, z1 = self.encrypt_zero(pt.level)
        return Ciphertext(z0 + pt.poly, z1, pt.scale)


class Decryptor:
    def __init__(self, params: CkksParams, secret_key: SecretKey):
        self.params = params
        self.sk = secret_key

    def decrypt(self, ct: Ciphertext) -> Plaintext:
        s = self.sk.at_level(ct.level)
        return Plaintext(ct.c0 + ct.c1 * s, ct.scale)

    def decrypt_triple(self, t: TernaryCiphertext) -> Plaintext:
        s = self.sk.at_level(t.level)
        return Plaintext(t.d0 + t.d1 * s + t.d2 * s * s, t.scale)
