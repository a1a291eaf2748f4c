"""Encrypted squared Euclidean distances between packed weight vectors."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations

import numpy as np

from ..ckks import Ciphertext, Decryptor, Encoder, Evaluator
from ..errors import ShapeError, ValidationError
from .hoisting import HoistPlan, log2_exact
from .packing import PackedWeights

REPORT_FIELDS = ("pairs", "relinearizations", "modups", "rotations", "multiplications")


def _check_same_shape(items: list[PackedWeights]) -> None:
    shapes = {p.shape() for p in items}
    if len(shapes) != 1:
        raise ShapeError(f"packed weights differ in (length, chunks, level): {sorted(shapes)}")


def encrypted_pairwise_distance(a: PackedWeights, b: PackedWeights, evaluator: Evaluator,
                                lazy: bool = True) -> Ciphertext:
    """Slot-wise (a - b)^2 summed over chunks, one level below the inputs.

    Summing the slots of the result gives ||a - b||^2. The lazy path keeps
    every chunk's square in three-component form and relinearizes once; the
    eager path relinearizes each chunk before adding.
    """
    _check_same_shape([a, b])
    diffs = [evaluator.sub(x, y) for x, y in zip(a.chunks, b.chunks)]
    if lazy:
        total = evaluator.relinearize(evaluator.lazy_accumulate([evaluator.square(d) for d in diffs]))
    else:
        total = evaluator.add_many([evaluator.relinearize(evaluator.square(d)) for d in diffs])
    return evaluator.rescale(total)


def reduction_width(length: int, slot_count: int) -> int:
    """Slots that can be non-zero after chunk accumulation, rounded up to a power of two."""
    used = min(length, slot_count)
    return 1 << (used - 1).bit_length()


def required_rotation_steps(k: int, width: int) -> list[int]:
    """Rotation keys needed by :func:`slot_reduce` for unfold factor ``k``."""
    levels = log2_exact(width)
    h = min(k - 1, levels)
    steps = set(range(1, 1 << h))
    steps.update(1 << j for j in range(h, levels))
    return sorted(steps)


def slot_reduce(ct: Ciphertext, plan: HoistPlan | int, evaluator: Evaluator, width: int) -> Ciphertext:
    """Put the sum of the first ``width`` slots into slot 0.

    The first k - 1 tree levels run as one hoisted batch of rotations by
    1 .. 2^(k-1) - 1; the remaining levels rotate by 2^j and add.
    """
    levels = log2_exact(width)
    if width > evaluator.params.slot_count:
        raise ValidationError(f"width {width} exceeds {evaluator.params.slot_count} slots")
    k = plan.k if isinstance(plan, HoistPlan) else int(plan)
    if k < 1:
        raise ValidationError("unfold factor must be >= 1")
    h = min(k - 1, levels)
    out = ct
    if h:
        out = evaluator.add_many([ct, *evaluator.hoisted_rotations(ct, list(range(1, 1 << h)))])
    for j in range(h, levels):
        out = evaluator.add(out, evaluator.rotate(out, 1 << j))
    if out is ct:
        out = Ciphertext(ct.c0.copy(), ct.c1.copy(), ct.scale)
    return out


class MatrixMode(str, Enum):
    PER_PAIR = "per_pair"
    ROW_SUMS = "row_sums"


@dataclass
class EncryptedDistanceMatrix:
    """Server-side distances: (i, j) -> ciphertext for i < j, or i -> row sum.

    ``reduced`` says whether slot 0 already holds the total; otherwise the
    decrypting party sums the slots itself.
    """

    n: int
    mode: MatrixMode
    entries: dict = field(repr=False)
    reduced: bool
    width: int
    counters: dict = field(default_factory=dict)

    def ciphertexts(self) -> list[Ciphertext]:
        return [self.entries[key] for key in sorted(self.entries)]


def worker_count(threads: int | None = None) -> int:
    """Size of the pair worker pool; LANCELOT_THREADS caps it."""
    n = threads or os.cpu_count() or 1
    cap = os.environ.get("LANCELOT_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValidationError(f"LANCELOT_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def build_distance_matrix(packed: list[PackedWeights], evaluator: Evaluator, plan: HoistPlan | int = 1,
                          mode: MatrixMode | str = MatrixMode.PER_PAIR, lazy: bool = True,
                          reduce: bool = True, threads: int | None = None) -> EncryptedDistanceMatrix:
    """All n(n-1)/2 encrypted pairwise distances, optionally slot-reduced and row-summed."""
    mode = MatrixMode(mode)
    if len(packed) < 2:
        raise ValidationError("need at least two clients")
    _check_same_shape(packed)
    width = reduction_width(packed[0].length, evaluator.params.slot_count)
    before = evaluator.counters.snapshot()

    def one(pair):
        i, j = pair
        d = encrypted_pairwise_distance(packed[i], packed[j], evaluator, lazy)
        return pair, (slot_reduce(d, plan, evaluator, width) if reduce else d)

    pairs = list(combinations(range(len(packed)), 2))
    workers = min(worker_count(threads), len(pairs))
    if workers == 1:
        results = [one(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, pairs))
    entries = dict(results)  # single writer: merged after all workers finish

    if mode is MatrixMode.ROW_SUMS:
        n = len(packed)
        entries = {i: evaluator.add_many([entries[min(i, j), max(i, j)] for j in range(n) if j != i])
                   for i in range(n)}
    counts = evaluator.counters.diff(before)
    report = {"pairs": len(pairs), **{k: counts[k] for k in REPORT_FIELDS[1:]}}
    return EncryptedDistanceMatrix(len(packed), mode, entries, reduce, width, report)


def decrypt_distance(ct: Ciphertext, decryptor: Decryptor, encoder: Encoder, reduced: bool) -> float:
    slots = encoder.decode(decryptor.decrypt(ct))
    return float(slots[0] if reduced else np.sum(slots))


def decrypt_matrix(matrix: EncryptedDistanceMatrix, decryptor: Decryptor, encoder: Encoder) -> np.ndarray:
    """Plaintext distances: the symmetric n x n table, or the length-n row sums."""
    if matrix.mode is MatrixMode.ROW_SUMS:
        return np.array([decrypt_distance(matrix.entries[i], decryptor, encoder, matrix.reduced)
                         for i in range(matrix.n)])
    d = np.zeros((matrix.n, matrix.n))
    for (i, j), ct in matrix.entries.items():
        d[i, j] = d[j, i] = decrypt_distance(ct, decryptor, encoder, matrix.reduced)
    return d
