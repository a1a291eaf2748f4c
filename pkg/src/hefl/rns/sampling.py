"""Seeded samplers for ternary, uniform and centered-binomial polynomials.

Every sampler takes an explicit ``numpy.random.Generator`` (or an int seed);
nothing reads ambient randomness.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ParameterError
from .poly import Domain, Modulus, PolyRns

DEFAULT_CBD_ETA = 21


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise ParameterError("an explicit seed or Generator is required")
    return np.random.default_rng(rng)


def ternary(rng, n: int, p_zero: float = 1 / 3) -> np.ndarray:
    """Coefficients in {-1, 0, 1}: P(0) = p_zero, P(-1) = P(1) = (1 - p_zero) / 2."""
    if not 0.0 <= p_zero < 1.0:
        raise ParameterError("p_zero must lie in [0, 1)")
    rng = as_generator(rng)
    side = (1.0 - p_zero) / 2
    return rng.choice(np.array([-1, 0, 1], dtype=np.int64), size=n, p=[side, p_zero, side])


def centered_binomial(rng, n: int, eta: int = DEFAULT_CBD_ETA) -> np.ndarray:
    """Sum of eta coin flips minus eta coin flips: mean 0, variance eta / 2."""
    rng = as_generator(rng)
    return rng.binomial(eta, 0.5, size=n).astype(np.int64) - rng.binomial(eta, 0.5, size=n).astype(np.int64)


def uniform(rng, moduli: Sequence[Modulus], domain: Domain = Domain.COEFFICIENT) -> PolyRns:
    rng = as_generator(rng)
    moduli = tuple(moduli)
    n = moduli[0].ring_degree
    rows = [rng.integers(0, m.value, size=n, dtype=np.int64) for m in moduli]
    return PolyRns(np.stack(rows), moduli, domain)


def sample(dist: str, rng, moduli: Sequence[Modulus], *, p_zero: float = 1 / 3,
           eta: int = DEFAULT_CBD_ETA) -> PolyRns:
    """Draw a polynomial from ``dist`` in {"ternary", "uniform", "cbd"} over ``moduli``."""
    moduli = tuple(moduli)
    n = moduli[0].ring_degree
    if dist == "uniform":
        return uniform(rng, moduli)
    if dist == "ternary":
        return PolyRns.from_signed(ternary(rng, n, p_zero), moduli)
    if dist == "cbd":
        return PolyRns.from_signed(centered_binomial(rng, n, eta), moduli)
    raise ParameterError(f"unknown distribution {dist!r}")
