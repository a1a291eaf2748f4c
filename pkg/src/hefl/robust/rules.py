"""Byzantine-robust selection rules on plaintext distance tables.

All rules break ties toward the smallest client index and report 0-based
indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError, ValidationError

RULES = ("krum", "multi-krum", "median", "mean")
SCORE_MODES = ("krum", "sumdis")


@dataclass(frozen=True)
class DistanceTable:
    """Symmetric n x n squared distances with a zero diagonal."""

    d: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValidationError(f"distance table must be square, got shape {d.shape}")
        if not np.array_equal(d, d.T):
            raise ValidationError("distance table must be symmetric")
        if np.any(np.diag(d) != 0):
            raise ValidationError("distance table must have a zero diagonal")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValidationError("distances must be finite and non-negative")
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def totals(self) -> np.ndarray:
        return self.d.sum(axis=1)

    @classmethod
    def from_points(cls, points) -> "DistanceTable":
        x = np.asarray(points, dtype=np.float64).reshape(len(points), -1)
        diff = x[:, None, :] - x[None, :, :]
        d = np.einsum("ijk,ijk->ij", diff, diff)
        d = (d + d.T) / 2
        np.fill_diagonal(d, 0.0)
        return cls(d)

    @classmethod
    def from_noisy(cls, d) -> "DistanceTable":
        """Symmetrize, zero the diagonal and clip the tiny negatives left by decryption noise."""
        d = np.asarray(d, dtype=np.float64)
        d = np.clip((d + d.T) / 2, 0.0, None)
        np.fill_diagonal(d, 0.0)
        return cls(d)


@dataclass(frozen=True)
class SelectionResult:
    rule: str
    selected: tuple[int, ...]
    scores: tuple[float, ...] = ()

    @property
    def l(self) -> int:  # noqa: E743 - the selection size is called l throughout
        return len(self.selected)

    def one_based(self) -> list[int]:
        return [i + 1 for i in self.selected]


def _argmin(values: np.ndarray, candidates: list[int]) -> int:
    """Candidate with the smallest value; ties go to the smallest index."""
    return min(candidates, key=lambda i: (values[i], i))


def krum_scores(d: np.ndarray, c: int, members: list[int] | None = None) -> np.ndarray:
    """Sum of squared distances to the n - c - 2 nearest other members.

    Entries outside ``members`` are +inf.
    """
    members = list(range(d.shape[0])) if members is None else list(members)
    m = len(members)
    phi = m - c - 2
    if phi < 1:
        raise ParameterError(f"Krum needs n >= c + 3 (n={m}, c={c})")
    scores = np.full(d.shape[0], np.inf)
    sub = d[np.ix_(members, members)]
    for row, i in enumerate(members):
        others = np.delete(sub[row], row)
        scores[i] = np.sort(others)[:phi].sum()
    return scores


def _check_c(c: int) -> None:
    if c < 0:
        raise ParameterError("compromised count c must be non-negative")


def krum_select(table: DistanceTable, c: int) -> SelectionResult:
    _check_c(c)
    scores = krum_scores(table.d, c)
    pick = _argmin(scores, list(range(table.n)))
    return SelectionResult("krum", (pick,), tuple(scores.tolist()))


def multi_krum_select(table: DistanceTable, c: int, l: int) -> SelectionResult:  # noqa: E741
    """Pick l clients by repeated Krum, removing each pick before rescoring."""
    _check_c(c)
    n = table.n
    if l < 1:
        raise ParameterError("selection size l must be >= 1")
    if not n - l > 2 * c + 2:
        raise ParameterError(f"Multi-Krum requires n - l > 2c + 2 (n={n}, l={l}, c={c})")
    remaining = list(range(n))
    picked = []
    first_scores = None
    while len(picked) < l:
        scores = krum_scores(table.d, c, remaining)
        if first_scores is None:
            first_scores = scores
        pick = _argmin(scores, remaining)
        picked.append(pick)
        remaining.remove(pick)
    return SelectionResult("multi-krum", tuple(picked), tuple(first_scores.tolist()))


def _totals(table_or_totals) -> np.ndarray:
    if isinstance(table_or_totals, DistanceTable):
        return table_or_totals.totals()
    totals = np.asarray(table_or_totals, dtype=np.float64).ravel()
    if totals.size == 0 or not np.all(np.isfinite(totals)):
        raise ValidationError("row sums must be a non-empty finite vector")
    return totals


def median_rank(n: int) -> int:
    """1-based rank of the median client: (n+1)/2 for odd n, n/2 for even n."""
    return (n + 1) // 2


def median_select(table_or_totals) -> SelectionResult:
    """Client whose total distance to all others is the median one."""
    totals = _totals(table_or_totals)
    order = sorted(range(totals.size), key=lambda i: (totals[i], i))
    pick = order[median_rank(totals.size) - 1]
    return SelectionResult("median", (pick,), tuple(totals.tolist()))


def sumdis_select(table_or_totals, l: int = 1, rule: str = "krum") -> SelectionResult:  # noqa: E741
    """Sort clients once by total distance and keep the l smallest."""
    totals = _totals(table_or_totals)
    order = sorted(range(totals.size), key=lambda i: (totals[i], i))
    return SelectionResult(rule, tuple(order[:l]), tuple(totals.tolist()))


@dataclass(frozen=True)
class RuleConfig:
    """Aggregation rule with its Byzantine budget c and selection size l."""

    rule: str = "krum"
    c: int = 1
    l: int = 1  # noqa: E741
    score_mode: str = "krum"

    def __post_init__(self):
        if self.rule not in RULES:
            raise ParameterError(f"unknown rule {self.rule!r}; expected one of {RULES}")
        if self.score_mode not in SCORE_MODES:
            raise ParameterError(f"unknown score mode {self.score_mode!r}")
        _check_c(self.c)

    def selection_size(self, n: int) -> int:
        return {"krum": 1, "median": 1, "multi-krum": self.l, "mean": n}[self.rule]

    def validate(self, n: int) -> None:
        """Reject configurations outside the rule's guarantees for n clients."""
        if n < 3:
            raise ParameterError("robust aggregation needs at least 3 clients")
        if self.rule in ("krum", "multi-krum") and not self.c < (n - 2) / 2:
            raise ParameterError(f"Krum convergence requires c < (n - 2) / 2 (n={n}, c={self.c})")
        if self.rule == "multi-krum" and not n - self.l > 2 * self.c + 2:
            raise ParameterError(f"Multi-Krum requires n - l > 2c + 2 (n={n}, l={self.l}, c={self.c})")


def select(cfg: RuleConfig, table_or_totals) -> SelectionResult:
    """Run the configured rule on a distance table (or row sums where the rule allows it)."""
    if cfg.rule == "mean":
        n = table_or_totals.n if isinstance(table_or_totals, DistanceTable) else len(table_or_totals)
        return SelectionResult("mean", tuple(range(n)))
    if cfg.rule == "median":
        return median_select(table_or_totals)
    if not isinstance(table_or_totals, DistanceTable) and cfg.score_mode != "sumdis":
        raise ValidationError("Krum scores need the per-pair table; row sums only support sumdis scoring")
    if cfg.score_mode == "sumdis":
        return sumdis_select(table_or_totals, 1 if cfg.rule == "krum" else cfg.l, cfg.rule)
    if cfg.rule == "krum":
        return krum_select(table_or_totals, cfg.c)
    return multi_krum_select(table_or_totals, cfg.c, cfg.l)
