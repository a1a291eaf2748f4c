"""Residue-number-system polynomials over Z_Q[X]/(X^N + 1)."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import sympy

from ..errors import BasisError, DomainError, ParameterError
from . import kernels
from .kernels import MAX_MODULUS_BITS

# Largest log2(Q*P) for a ternary secret at 128-bit classical security.
# Entries up to 2**15 are the published homomorphic-encryption-standard bounds;
# 2**16 and 2**17 extend the table by doubling.
SECURITY_MAX_LOG_QP = {
    128: {
        1024: 27,
        2048: 54,
        4096: 109,
        8192: 218,
        16384: 438,
        32768: 881,
        65536: 1762,
        131072: 3524,
    }
}


class Domain(enum.Enum):
    COEFFICIENT = "coefficient"
    EVALUATION = "evaluation"


def bit_reverse(i: int, bits: int) -> int:
    return int(format(i, f"0{bits}b")[::-1], 2) if bits else 0


def find_primitive_root(q: int, order: int) -> int:
    """Smallest-generator primitive ``order``-th root of unity mod prime ``q``."""
    if (q - 1) % order:
        raise ParameterError(f"{q} has no primitive {order}-th root of unity")
    half = order // 2
    for g in range(2, q):
        r = pow(g, (q - 1) // order, q)
        if pow(r, half, q) == q - 1:
            return r
    raise ParameterError(f"no primitive root found for {q}")


def generate_primes(bits: int, count: int, ring_degree: int, exclude: Sequence[int] = ()) -> list[int]:
    """NTT-friendly primes q = 1 (mod 2N) below 2**bits, searching downward."""
    if bits > MAX_MODULUS_BITS:
        raise ParameterError(f"moduli are limited to {MAX_MODULUS_BITS} bits, got {bits}")
    step = 2 * ring_degree
    candidate = ((1 << bits) - 1) // step * step + 1
    found: list[int] = []
    skip = set(exclude)
    while len(found) < count:
        if candidate < step:
            raise ParameterError(f"ran out of {bits}-bit primes for N={ring_degree}")
        if candidate not in skip and sympy.isprime(candidate):
            found.append(candidate)
        candidate -= step
    return found


@dataclass(frozen=True, eq=False)
class Modulus:
    """An NTT-friendly prime with its twiddle tables for ring degree N."""

    value: int
    ring_degree: int
    root: int = 0
    n_inverse: int = 0
    psi_rev: np.ndarray = field(default=None, repr=False)
    psi_inv_rev: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        q, n = self.value, self.ring_degree
        if n < 2 or n & (n - 1):
            raise ParameterError(f"ring degree must be a power of two, got {n}")
        if q.bit_length() > MAX_MODULUS_BITS:
            raise ParameterError(f"modulus {q} exceeds {MAX_MODULUS_BITS} bits")
        if (q - 1) % (2 * n) or not sympy.isprime(q):
            raise ParameterError(f"{q} is not a prime congruent to 1 mod {2 * n}")
        root = self.root or find_primitive_root(q, 2 * n)
        if pow(root, n, q) != q - 1:
            raise ParameterError(f"{root} is not a primitive {2 * n}-th root mod {q}")
        bits = n.bit_length() - 1
        powers = [1] * n
        for i in range(1, n):
            powers[i] = powers[i - 1] * root % q
        root_inv = pow(root, -1, q)
        inv_powers = [1] * n
        for i in range(1, n):
            inv_powers[i] = inv_powers[i - 1] * root_inv % q
        rev = [bit_reverse(i, bits) for i in range(n)]
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "n_inverse", pow(n, -1, q))
        object.__setattr__(self, "psi_rev", np.array([powers[r] for r in rev], dtype=np.int64))
        object.__setattr__(self, "psi_inv_rev", np.array([inv_powers[r] for r in rev], dtype=np.int64))
        self.psi_rev.flags.writeable = False
        self.psi_inv_rev.flags.writeable = False

    def __eq__(self, other):
        return isinstance(other, Modulus) and (self.value, self.ring_degree) == (other.value, other.ring_degree)

    def __hash__(self):
        return hash((self.value, self.ring_degree))

    def __int__(self):
        return self.value


@dataclass(frozen=True)
class RnsBasis:
    """Ciphertext primes q_0..q_L plus the key-switching special primes."""

    primes: tuple[Modulus, ...]
    special: tuple[Modulus, ...]
    ring_degree: int
    security_level: int | None = 128

    def __post_init__(self):
        values = [m.value for m in self.primes + self.special]
        if len(set(values)) != len(values):
            raise ParameterError("RNS primes must be pairwise distinct")
        if any(m.ring_degree != self.ring_degree for m in self.primes + self.special):
            raise ParameterError("all primes must share the basis ring degree")
        if not self.primes or not self.special:
            raise ParameterError("basis needs at least one ciphertext prime and one special prime")
        if self.security_level is not None:
            table = SECURITY_MAX_LOG_QP.get(self.security_level)
            if table is None or self.ring_degree not in table:
                raise ParameterError(
                    f"no {self.security_level}-bit security bound for N={self.ring_degree}"
                )
            if self.log_qp > table[self.ring_degree]:
                raise ParameterError(
                    f"log2(QP) = {self.log_qp:.1f} exceeds the {self.security_level}-bit bound "
                    f"{table[self.ring_degree]} for N={self.ring_degree}"
                )

    @classmethod
    def generate(cls, ring_degree: int, prime_bits: Sequence[int], special_bits: Sequence[int],
                 security_level: int | None = 128) -> "RnsBasis":
        used: list[int] = []
        primes = []
        for bits in prime_bits:
            (q,) = generate_primes(bits, 1, ring_degree, exclude=used)
            used.append(q)
            primes.append(Modulus(q, ring_degree))
        special = []
        for bits in special_bits:
            (p,) = generate_primes(bits, 1, ring_degree, exclude=used)
            used.append(p)
            special.append(Modulus(p, ring_degree))
        return cls(tuple(primes), tuple(special), ring_degree, security_level)

    @property
    def max_level(self) -> int:
        return len(self.primes) - 1

    @property
    def log_qp(self) -> float:
        return sum(math.log2(m.value) for m in self.primes + self.special)

    @property
    def special_product(self) -> int:
        return math.prod(m.value for m in self.special)

    def moduli(self, level: int) -> tuple[Modulus, ...]:
        return self.primes[: level + 1]

    def extended(self, level: int) -> tuple[Modulus, ...]:
        return self.primes[: level + 1] + self.special


@lru_cache(maxsize=None)
def _tables(moduli: tuple[Modulus, ...]):
    q = np.array([m.value for m in moduli], dtype=np.int64)
    psi = np.stack([m.psi_rev for m in moduli])
    psi_inv = np.stack([m.psi_inv_rev for m in moduli])
    n_inv = np.array([m.n_inverse for m in moduli], dtype=np.int64)
    return q, psi, psi_inv, n_inv


def moduli_array(moduli: tuple[Modulus, ...]) -> np.ndarray:
    return _tables(moduli)[0]


@dataclass
class PolyRns:
    """A ring element stored as one residue row per live prime.

    ``coeffs`` has shape (len(moduli), N). Instances are treated as immutable:
    every operation returns a new polynomial.
    """

    coeffs: np.ndarray
    moduli: tuple[Modulus, ...]
    domain: Domain = Domain.COEFFICIENT

    def __post_init__(self):
        if self.coeffs.ndim != 2 or self.coeffs.shape[0] != len(self.moduli):
            raise BasisError(f"coefficient array shape {self.coeffs.shape} does not match {len(self.moduli)} primes")
        if self.coeffs.shape[1] != self.moduli[0].ring_degree:
            raise BasisError("residue rows must have length N")

    @property
    def ring_degree(self) -> int:
        return self.coeffs.shape[1]

    @property
    def q(self) -> np.ndarray:
        return moduli_array(self.moduli)

    @classmethod
    def zero(cls, moduli, domain=Domain.COEFFICIENT) -> "PolyRns":
        return cls(np.zeros((len(moduli), moduli[0].ring_degree), dtype=np.int64), tuple(moduli), domain)

    @classmethod
    def from_signed(cls, values, moduli, domain=Domain.COEFFICIENT) -> "PolyRns":
        """Reduce one integer vector (int64 or Python ints) modulo every prime."""
        moduli = tuple(moduli)
        values = np.asarray(values)
        if values.dtype == object:
            rows = [np.array([int(v) % m.value for v in values], dtype=np.int64) for m in moduli]
            return cls(np.stack(rows), moduli, domain)
        values = values.astype(np.int64)
        return cls(values[None, :] % moduli_array(moduli)[:, None], moduli, domain)

    def _check(self, other: "PolyRns"):
        if self.moduli != other.moduli:
            raise BasisError("operands live over different RNS bases")
        if self.domain is not other.domain:
            raise DomainError(f"cannot combine {self.domain.value} and {other.domain.value} polynomials")

    def __add__(self, other: "PolyRns") -> "PolyRns":
        self._check(other)
        q = self.q[:, None]
        out = self.coeffs + other.coeffs
        out -= q * (out >= q)
        return PolyRns(out, self.moduli, self.domain)

    def __sub__(self, other: "PolyRns") -> "PolyRns":
        self._check(other)
        out = self.coeffs - other.coeffs
        out += self.q[:, None] * (out < 0)
        return PolyRns(out, self.moduli, self.domain)

    def __neg__(self) -> "PolyRns":
        out = self.q[:, None] - self.coeffs
        out[self.coeffs == 0] = 0
        return PolyRns(out, self.moduli, self.domain)

    def __mul__(self, other: "PolyRns") -> "PolyRns":
        self._check(other)
        return PolyRns(kernels.mulmod_rows(self.coeffs, other.coeffs, self.q), self.moduli, self.domain)

    def mul_scalar(self, scalar) -> "PolyRns":
        """Multiply by an integer (or one integer per prime)."""
        if np.ndim(scalar) == 0:
            scalar = [scalar] * len(self.moduli)
        s = np.array([int(v) % m.value for v, m in zip(scalar, self.moduli)], dtype=np.int64)
        return PolyRns(kernels.mulmod_scalar_rows(self.coeffs, s, self.q), self.moduli, self.domain)

    def select(self, moduli: Sequence[Modulus]) -> "PolyRns":
        """Keep only the rows for ``moduli`` (a subset of the current primes)."""
        index = {m: i for i, m in enumerate(self.moduli)}
        try:
            rows = [index[m] for m in moduli]
        except KeyError as exc:
            raise BasisError(f"prime {exc.args[0].value} is not live in this polynomial") from None
        return PolyRns(self.coeffs[rows].copy(), tuple(moduli), self.domain)

    def permute(self, perm: np.ndarray) -> "PolyRns":
        return PolyRns(self.coeffs[:, perm], self.moduli, self.domain)

    def to_evaluation(self) -> "PolyRns":
        return ntt_forward(self) if self.domain is Domain.COEFFICIENT else self

    def to_coefficient(self) -> "PolyRns":
        return ntt_inverse(self) if self.domain is Domain.EVALUATION else self

    def to_bigint(self, centered: bool = True) -> np.ndarray:
        """CRT-reconstruct the coefficients as Python integers (object array)."""
        p = self.to_coefficient()
        qs = [m.value for m in p.moduli]
        big_q = math.prod(qs)
        acc = np.zeros(p.ring_degree, dtype=object)
        for row, q in zip(p.coeffs, qs):
            hat = big_q // q
            y = kernels.mulmod_scalar_rows(row[None, :], np.array([pow(hat, -1, q)], dtype=np.int64),
                                           np.array([q], dtype=np.int64))[0]
            acc = acc + y.astype(object) * hat
        acc = acc % big_q
        if centered:
            acc = np.where(acc > big_q // 2, acc - big_q, acc)
        return acc

    def copy(self) -> "PolyRns":
        return PolyRns(self.coeffs.copy(), self.moduli, self.domain)

    def __eq__(self, other):
        return (isinstance(other, PolyRns) and self.moduli == other.moduli
                and self.domain is other.domain and np.array_equal(self.coeffs, other.coeffs))


def ntt_forward(p: PolyRns) -> PolyRns:
    if p.domain is not Domain.COEFFICIENT:
        raise DomainError("ntt_forward expects a coefficient-domain polynomial")
    q, psi, _, _ = _tables(p.moduli)
    return PolyRns(kernels.ntt_rows(p.coeffs.copy(), q, psi), p.moduli, Domain.EVALUATION)


def ntt_inverse(p: PolyRns) -> PolyRns:
    if p.domain is not Domain.EVALUATION:
        raise DomainError("ntt_inverse expects an evaluation-domain polynomial")
    q, _, psi_inv, n_inv = _tables(p.moduli)
    return PolyRns(kernels.intt_rows(p.coeffs.copy(), q, psi_inv, n_inv), p.moduli, Domain.COEFFICIENT)


def poly_add(a: PolyRns, b: PolyRns) -> PolyRns:
    return a + b


def poly_sub(a: PolyRns, b: PolyRns) -> PolyRns:
    return a - b


def poly_pointwise_mul(a: PolyRns, b: PolyRns) -> PolyRns:
    return a * b


def poly_mul(a: PolyRns, b: PolyRns) -> PolyRns:
    """Negacyclic ring product, returned in ``a``'s domain."""
    out = a.to_evaluation() * b.to_evaluation()
    return out if a.domain is Domain.EVALUATION else ntt_inverse(out)


# --------------------------------------------------------------------------
# Basis extension, decomposition, ModUp / ModDown


@lru_cache(maxsize=None)
def _conversion_constants(src: tuple[Modulus, ...], dst: tuple[Modulus, ...]):
    fs = [m.value for m in src]
    big_f = math.prod(fs)
    hats = [big_f // f for f in fs]
    hat_inv = np.array([pow(h % f, -1, f) for h, f in zip(hats, fs)], dtype=np.int64)
    hat_mod_dst = np.array([[h % t.value for t in dst] for h in hats], dtype=np.int64).reshape(len(src), len(dst))
    prod_mod_dst = np.array([big_f % t.value for t in dst], dtype=np.int64)
    return moduli_array(src), hat_inv, moduli_array(dst), hat_mod_dst, prod_mod_dst


def convert_basis(p: PolyRns, dst: Sequence[Modulus]) -> PolyRns:
    """Exact centered basis extension of a coefficient-domain polynomial."""
    if p.domain is not Domain.COEFFICIENT:
        raise DomainError("basis conversion needs coefficient-domain input")
    dst = tuple(dst)
    src_q, hat_inv, dst_q, hat_mod, prod_mod = _conversion_constants(p.moduli, dst)
    out = kernels.convert_basis(p.coeffs, src_q, hat_inv, dst_q, hat_mod, prod_mod)
    return PolyRns(out, dst, Domain.COEFFICIENT)


def digit_layout(basis: RnsBasis, level: int, alpha: int) -> list[tuple[int, ...]]:
    """Live prime indices of each decomposition digit at ``level``.

    Digits are consecutive groups of ``alpha`` primes counted from q_0; the
    trailing digit is truncated at the level (primes above it are padding).
    """
    if alpha < 1:
        raise ParameterError("alpha must be >= 1")
    beta = math.ceil((level + 1) / alpha)
    return [tuple(range(j * alpha, min((j + 1) * alpha, level + 1))) for j in range(beta)]


def digit_count(level: int, alpha: int) -> int:
    return math.ceil((level + 1) / alpha)


@lru_cache(maxsize=None)
def _digit_factors(basis: RnsBasis, alpha: int) -> tuple[int, ...]:
    """Q_hat_j = Q_top / Q_j for every full-basis digit j."""
    top = math.prod(m.value for m in basis.primes)
    layout = digit_layout(basis, basis.max_level, alpha)
    return tuple(top // math.prod(basis.primes[i].value for i in digit) for digit in layout)


def digit_factor(basis: RnsBasis, alpha: int, j: int) -> int:
    return _digit_factors(basis, alpha)[j]


def rns_decompose(p: PolyRns, alpha: int, basis: RnsBasis) -> list[PolyRns]:
    """Split ``p`` into beta = ceil((l+1)/alpha) digits.

    Digit j lives over its own primes and holds [p * Q_hat_j^-1]_{Q_j}, so that
    sum_j digit_j * Q_hat_j == p (mod Q_l) with the top-level factors Q_hat_j.
    """
    level = len(p.moduli) - 1
    if p.moduli != basis.moduli(level):
        raise BasisError("polynomial is not over a prefix of the basis primes")
    p = p.to_coefficient()
    digits = []
    for j, idx in enumerate(digit_layout(basis, level, alpha)):
        hat = digit_factor(basis, alpha, j)
        moduli = tuple(basis.primes[i] for i in idx)
        sub = PolyRns(p.coeffs[list(idx)], moduli, Domain.COEFFICIENT)
        digits.append(sub.mul_scalar([pow(hat % m.value, -1, m.value) for m in moduli]))
    return digits


def mod_up(digits: Sequence[PolyRns], basis: RnsBasis, level: int) -> list[PolyRns]:
    """Extend every digit to the key-switching basis q_0..q_l, P."""
    ext = basis.extended(level)
    out = []
    for d in digits:
        d = d.to_coefficient()
        missing = tuple(m for m in ext if m not in d.moduli)
        conv = convert_basis(d, missing) if missing else None
        rows = []
        own = {m: i for i, m in enumerate(d.moduli)}
        conv_idx = {m: i for i, m in enumerate(missing)}
        for m in ext:
            rows.append(d.coeffs[own[m]] if m in own else conv.coeffs[conv_idx[m]])
        out.append(PolyRns(np.stack(rows), ext, Domain.COEFFICIENT))
    return out


def mod_down(p_ext: PolyRns, basis: RnsBasis, level: int) -> PolyRns:
    """Divide an element of R_{P*Q_l} by P with rounding, landing in R_{Q_l}.

    Output is in the same domain as the input.
    """
    ext = basis.extended(level)
    if p_ext.moduli != ext:
        raise BasisError("mod_down expects an element over the extended basis")
    moduli = basis.moduli(level)
    k = len(moduli)
    special = PolyRns(p_ext.coeffs[k:], basis.special, p_ext.domain).to_coefficient()
    lifted = convert_basis(special, moduli)
    if p_ext.domain is Domain.EVALUATION:
        lifted = ntt_forward(lifted)
    head = PolyRns(p_ext.coeffs[:k], moduli, p_ext.domain)
    p_inv = [pow(basis.special_product % m.value, -1, m.value) for m in moduli]
    return (head - lifted).mul_scalar(p_inv)


def drop_last_prime(p: PolyRns) -> PolyRns:
    """Divide by the last live prime with rounding (the rescale primitive)."""
    if len(p.moduli) < 2:
        raise BasisError("cannot drop the only remaining prime")
    last = PolyRns(p.coeffs[-1:], p.moduli[-1:], p.domain).to_coefficient()
    rest = p.moduli[:-1]
    lifted = convert_basis(last, rest)
    if p.domain is Domain.EVALUATION:
        lifted = ntt_forward(lifted)
    head = PolyRns(p.coeffs[:-1], rest, p.domain)
    q_last = p.moduli[-1].value
    return (head - lifted).mul_scalar([pow(q_last, -1, m.value) for m in rest])


def automorphism_coefficients(values: np.ndarray, galois: int) -> np.ndarray:
    """Apply X -> X^galois to a signed coefficient vector (plain integers)."""
    n = values.shape[-1]
    idx = (np.arange(n) * galois) % (2 * n)
    out = np.zeros_like(values)
    sign = np.where(idx >= n, -1, 1)
    out[..., idx % n] = values * sign
    return out


@lru_cache(maxsize=None)
def evaluation_exponents(ring_degree: int) -> np.ndarray:
    """Odd exponent e such that slot j of the NTT output is a(psi^e)."""
    bits = ring_degree.bit_length() - 1
    return np.array([2 * bit_reverse(j, bits) + 1 for j in range(ring_degree)], dtype=np.int64)


@lru_cache(maxsize=None)
def automorphism_permutation(ring_degree: int, galois: int) -> np.ndarray:
    """Index map so that ``ntt(phi_g(a)) == ntt(a)[:, perm]``."""
    exps = evaluation_exponents(ring_degree)
    position = np.empty(2 * ring_degree, dtype=np.int64)
    position[exps] = np.arange(ring_degree)
    perm = position[(exps * galois) % (2 * ring_degree)]
    perm.flags.writeable = False
    return perm


def apply_automorphism(p: PolyRns, galois: int) -> PolyRns:
    if galois % 2 == 0:
        raise ParameterError("Galois elements must be odd")
    if p.domain is Domain.EVALUATION:
        return p.permute(automorphism_permutation(p.ring_degree, galois % (2 * p.ring_degree)))
    n = p.ring_degree
    idx = (np.arange(n) * galois) % (2 * n)
    out = np.empty_like(p.coeffs)
    neg = idx >= n
    q = p.q[:, None]
    vals = np.where(neg[None, :], (q - p.coeffs) % q, p.coeffs)
    out[:, idx % n] = vals
    return PolyRns(out, p.moduli, p.domain)
