"""Homomorphic evaluation: arithmetic, key switching, rotations and hoisting."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

from ..errors import AlignmentError, DepthError, KeyMissingError
from ..rns import PolyRns, drop_last_prime, mod_down, mod_up, rns_decompose
from ..rns.poly import automorphism_permutation
from .ciphertext import Ciphertext, TernaryCiphertext
from .encoding import Encoder, Plaintext
from .keys import RELINEARIZATION, EvaluationKey, RotationKeySet
from .params import CkksParams

_SCALE_RTOL = 1e-9


@dataclass
class OpCounters:
    """Exact operation counts for one evaluation session."""

    multiplications: int = 0
    plain_multiplications: int = 0
    relinearizations: int = 0
    modups: int = 0
    key_switches: int = 0
    rotations: int = 0
    rescales: int = 0
    additions: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def bump(self, name: str, k: int = 1) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + k)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return {f.name: getattr(self, f.name) for f in fields(self) if not f.name.startswith("_")}

    def merge(self, other: "OpCounters | dict") -> None:
        values = other.snapshot() if isinstance(other, OpCounters) else other
        for name, v in values.items():
            self.bump(name, v)

    def reset(self) -> None:
        for name in self.snapshot():
            self.bump(name, -getattr(self, name))

    def diff(self, before: dict[str, int]) -> dict[str, int]:
        now = self.snapshot()
        return {k: now[k] - before.get(k, 0) for k in now}


def _same_scale(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=_SCALE_RTOL)


def _check_aligned(a, b, what: str) -> None:
    if a.level != b.level:
        raise AlignmentError(f"{what}: level mismatch ({a.level} vs {b.level})")
    if not _same_scale(a.scale, b.scale):
        raise AlignmentError(f"{what}: scale mismatch ({a.scale!r} vs {b.scale!r})")


class Evaluator:
    """Public-key-only evaluation engine.

    Holds the relinearization key and rotation keys, never the secret key.
    ``counters`` accumulates exact operation counts for the session.
    """

    def __init__(self, params: CkksParams, relin_key: EvaluationKey | None = None,
                 rotation_keys: RotationKeySet | None = None, karatsuba: bool = True):
        self.params = params
        self.basis = params.basis
        self.relin_key = relin_key
        self.rotation_keys = rotation_keys if rotation_keys is not None else RotationKeySet()
        self.karatsuba = karatsuba
        self.encoder = Encoder(params)
        self.counters = OpCounters()

    # -- additive -----------------------------------------------------------

    def add(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        _check_aligned(a, b, "add")
        self.counters.bump("additions")
        return Ciphertext(a.c0 + b.c0, a.c1 + b.c1, a.scale)

    def sub(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        _check_aligned(a, b, "sub")
        self.counters.bump("additions")
        return Ciphertext(a.c0 - b.c0, a.c1 - b.c1, a.scale)

    def add_many(self, cts: Sequence[Ciphertext]) -> Ciphertext:
        out = cts[0]
        for ct in cts[1:]:
            out = self.add(out, ct)
        return out

    def add_triples(self, a: TernaryCiphertext, b: TernaryCiphertext) -> TernaryCiphertext:
        _check_aligned(a, b, "add_triples")
        self.counters.bump("additions")
        return TernaryCiphertext(a.d0 + b.d0, a.d1 + b.d1, a.d2 + b.d2, a.scale)

    def lazy_accumulate(self, ts: Sequence[TernaryCiphertext]) -> TernaryCiphertext:
        """Sum products while still in three-component form."""
        if not ts:
            raise ValueError("nothing to accumulate")
        out = ts[0]
        for t in ts[1:]:
            out = self.add_triples(out, t)
        return out

    # -- multiplicative -----------------------------------------------------

    def _require_depth(self, level: int, what: str) -> None:
        if level < 1:
            raise DepthError(f"{what} at level 0: multiplicative depth exhausted")

    def multiply(self, a: Ciphertext, b: Ciphertext) -> TernaryCiphertext:
        """Tensor product (d0, d1, d2); d1 uses the Karatsuba identity by default."""
        if a.level != b.level:
            raise AlignmentError(f"multiply: level mismatch ({a.level} vs {b.level})")
        self._require_depth(a.level, "multiply")
        self.counters.bump("multiplications")
        d0 = a.c0 * b.c0
        d2 = a.c1 * b.c1
        if self.karatsuba:
            d1 = (a.c0 + a.c1) * (b.c0 + b.c1) - d0 - d2
        else:
            d1 = a.c0 * b.c1 + a.c1 * b.c0
        return TernaryCiphertext(d0, d1, d2, a.scale * b.scale)

    def square(self, a: Ciphertext) -> TernaryCiphertext:
        self._require_depth(a.level, "square")
        self.counters.bump("multiplications")
        cross = a.c0 * a.c1
        return TernaryCiphertext(a.c0 * a.c0, cross + cross, a.c1 * a.c1, a.scale * a.scale)

    def multiply_plain(self, a: Ciphertext, pt: Plaintext) -> Ciphertext:
        if pt.level != a.level:
            raise AlignmentError("multiply_plain: plaintext level differs from ciphertext level")
        self._require_depth(a.level, "multiply_plain")
        self.counters.bump("plain_multiplications")
        return Ciphertext(a.c0 * pt.poly, a.c1 * pt.poly, a.scale * pt.scale)

    def multiply_const(self, a: Ciphertext, value: float) -> Ciphertext:
        """Multiply every slot by ``value`` and rescale; the scale is unchanged.

        The constant is encoded at the scale of the prime being dropped, so one
        level is consumed and the output scale equals the input scale.
        """
        self._require_depth(a.level, "multiply_const")
        q_last = float(a.c0.moduli[-1].value)
        pt = self.encoder.encode_constant(value, q_last, a.level)
        out = self.rescale(self.multiply_plain(a, pt))
        out.scale = a.scale
        return out

    def mul(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        """multiply -> relinearize -> rescale."""
        return self.rescale(self.relinearize(self.multiply(a, b)))

    def rescale(self, a: Ciphertext) -> Ciphertext:
        if a.level < 1:
            raise DepthError("rescale at level 0: multiplicative depth exhausted")
        self.counters.bump("rescales")
        q_last = a.c0.moduli[-1].value
        return Ciphertext(drop_last_prime(a.c0), drop_last_prime(a.c1), a.scale / q_last)

    # -- key switching ------------------------------------------------------

    def _decompose_mod_up(self, c: PolyRns, level: int) -> list[PolyRns]:
        self.counters.bump("modups")
        digits = rns_decompose(c.to_coefficient(), self.params.alpha, self.basis)
        return [d.to_evaluation() for d in mod_up(digits, self.basis, level)]

    def _switch(self, ext_digits: list[PolyRns], key: EvaluationKey, level: int, perm=None):
        self.counters.bump("key_switches")
        acc0 = acc1 = None
        for j, d in enumerate(ext_digits):
            if perm is not None:
                d = d.permute(perm)
            k0, k1 = key.digit_at_level(j, level, self.basis)
            t0, t1 = d * k0, d * k1
            acc0 = t0 if acc0 is None else acc0 + t0
            acc1 = t1 if acc1 is None else acc1 + t1
        return mod_down(acc0, self.basis, level), mod_down(acc1, self.basis, level)

    def relinearize(self, t: TernaryCiphertext, key: EvaluationKey | None = None) -> Ciphertext:
        key = key or self.relin_key
        if key is None or key.kind != RELINEARIZATION:
            raise KeyMissingError("relinearization needs a relinearization key")
        self.counters.bump("relinearizations")
        ext = self._decompose_mod_up(t.d2, t.level)
        ks0, ks1 = self._switch(ext, key, t.level)
        return Ciphertext(t.d0 + ks0, t.d1 + ks1, t.scale)

    def relinearize_each(self, ts: Iterable[TernaryCiphertext]) -> list[Ciphertext]:
        return [self.relinearize(t) for t in ts]

    # -- rotations ----------------------------------------------------------

    def _rotation_key(self, step: int) -> EvaluationKey:
        return self.rotation_keys.require(step)

    def rotate(self, a: Ciphertext, step: int) -> Ciphertext:
        """Rotate slots left by ``step`` (slot i receives slot i + step)."""
        step %= self.params.slot_count
        if step == 0:
            return Ciphertext(a.c0.copy(), a.c1.copy(), a.scale)
        key = self._rotation_key(step)
        self.counters.bump("rotations")
        perm = automorphism_permutation(self.params.ring_degree, key.galois)
        c0, c1 = a.c0.permute(perm), a.c1.permute(perm)
        ext = self._decompose_mod_up(c1, a.level)
        ks0, ks1 = self._switch(ext, key, a.level)
        return Ciphertext(c0 + ks0, ks1, a.scale)

    def hoisted_rotations(self, a: Ciphertext, steps: Sequence[int]) -> list[Ciphertext]:
        """Rotate one ciphertext by many steps sharing a single decompose + ModUp.

        The automorphism is applied to the raised digits instead of the input,
        which yields results identical to :meth:`rotate`.
        """
        keys = {}
        for k in steps:
            k %= self.params.slot_count
            if k:
                keys[k] = self._rotation_key(k)
        ext = self._decompose_mod_up(a.c1, a.level) if keys else None
        out = []
        for k in steps:
            k %= self.params.slot_count
            if k == 0:
                out.append(Ciphertext(a.c0.copy(), a.c1.copy(), a.scale))
                continue
            key = keys[k]
            self.counters.bump("rotations")
            perm = automorphism_permutation(self.params.ring_degree, key.galois)
            ks0, ks1 = self._switch(ext, key, a.level, perm)
            out.append(Ciphertext(a.c0.permute(perm) + ks0, ks1, a.scale))
        return out
