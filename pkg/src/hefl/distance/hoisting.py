"""Choosing how many levels of the rotation-sum tree to hoist.

Reducing n slots takes log n rotate-and-add levels. Unfolding the first
k - 1 levels turns them into a single hoisted batch of 2^(k-1) - 1 rotations
that share one decomposition; the remaining levels run one rotation each.
The planner picks k by minimising

    (log n - k + 1) * T_H + (k - 1) * T_D    subject to    k * M_c <= M_B

over the integers 1 <= k <= log n + 1.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InfeasibleError, ValidationError


def log2_exact(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise ValidationError(f"reduction width must be a power of two, got {n}")
    return n.bit_length() - 1


def unfold_objective(k: int, t_hoist: float, t_decompose: float, n: int) -> float:
    return (log2_exact(n) - k + 1) * t_hoist + (k - 1) * t_decompose


@dataclass(frozen=True)
class HoistPlan:
    k: int
    t_hoist: float
    t_decompose: float
    m_cipher: int
    m_budget: int
    n: int

    @property
    def hoisted_levels(self) -> int:
        return self.k - 1

    @property
    def objective(self) -> float:
        return unfold_objective(self.k, self.t_hoist, self.t_decompose, self.n)

    def as_dict(self) -> dict:
        return asdict(self)


def plan_unfold(t_hoist: float, t_decompose: float, m_cipher: int, m_budget: int, n: int) -> HoistPlan:
    """Exhaustive solution of the unfold LP; ties go to the smallest k.

    With a single integer variable the feasible set has at most log n + 1
    points, so enumerating it gives the exact optimum.
    """
    if min(t_hoist, t_decompose) <= 0 or m_cipher <= 0 or m_budget <= 0:
        raise ValidationError("plan inputs must be positive")
    if m_cipher > m_budget:
        raise InfeasibleError(f"one ciphertext ({m_cipher} B) exceeds the memory budget ({m_budget} B)")
    k_max = min(m_budget // m_cipher, log2_exact(n) + 1)
    best = min(range(1, k_max + 1), key=lambda k: (unfold_objective(k, t_hoist, t_decompose, n), k))
    return HoistPlan(best, t_hoist, t_decompose, m_cipher, m_budget, n)


HOISTING_MODES = ("off", "full", "dynamic")


def resolve_plan(mode: str, n: int, m_cipher: int, m_budget: int,
                 t_hoist: float = 1.0, t_decompose: float = 1.0) -> HoistPlan:
    """off: no hoisting (k = 1); full: hoist the whole tree; dynamic: solve the LP."""
    if mode == "off":
        return HoistPlan(1, t_hoist, t_decompose, m_cipher, m_budget, n)
    if mode == "full":
        return HoistPlan(log2_exact(n) + 1, t_hoist, t_decompose, m_cipher, m_budget, n)
    if mode == "dynamic":
        return plan_unfold(t_hoist, t_decompose, m_cipher, m_budget, n)
    raise ValidationError(f"unknown hoisting mode {mode!r}; expected one of {HOISTING_MODES}")


@dataclass(frozen=True)
class Calibration:
    t_hoist: float
    t_decompose: float
    m_cipher: int


def _median_time(fn, runs: int) -> float:
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def calibrate(evaluator, ciphertext, runs: int = 11, batch: int = 4) -> Calibration:
    """Measure the planner's cost constants on this host.

    T_H is the median time of one sequential rotation (a full tree level).
    T_D is the median per-rotation cost inside a hoisted batch of ``batch``
    steps. The evaluator needs rotation keys for steps 1..batch.
    """
    steps = list(range(1, batch + 1))
    t_h = _median_time(lambda: evaluator.rotate(ciphertext, 1), runs)
    t_d = _median_time(lambda: evaluator.hoisted_rotations(ciphertext, steps), runs) / batch
    m_c = 2 * int(np.prod(ciphertext.c0.coeffs.shape)) * 8
    return Calibration(t_h, t_d, m_c)
