"""Poisoning attacks run by malicious clients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from .data import Dataset

ATTACKS = ("none", "label_flip", "untargeted", "targeted")


@dataclass(frozen=True)
class AttackConfig:
    """``byzantine`` malicious clients mounting attack ``kind``.

    untargeted: upload W_g - scale * (W_honest - W_g), the honest step reversed and amplified.
    label_flip: train on labels mapped y -> K - 1 - y.
    targeted: train with every ``source`` label relabelled to ``target``.
    """

    kind: str = "none"
    byzantine: int = 0
    scale: float = 10.0
    source: int = 0
    target: int = 1

    def __post_init__(self):
        kind = self.kind.replace("-", "_")
        object.__setattr__(self, "kind", kind)
        if kind not in ATTACKS:
            raise ParameterError(f"unknown attack {self.kind!r}; expected one of {ATTACKS}")
        if self.byzantine < 0:
            raise ParameterError("byzantine count must be non-negative")

    def active(self) -> bool:
        return self.kind != "none" and self.byzantine > 0

    def check_ratio(self, n_clients: int) -> None:
        if not self.byzantine / n_clients < 0.5:
            raise ParameterError(f"byzantine ratio {self.byzantine}/{n_clients} must stay below 0.5")

    def malicious_ids(self, n_clients: int, seed) -> frozenset[int]:
        """Seeded choice of which clients are malicious."""
        if not self.active():
            return frozenset()
        self.check_ratio(n_clients)
        rng = np.random.default_rng([int(seed), 0xA77AC])
        return frozenset(int(i) for i in rng.choice(n_clients, size=self.byzantine, replace=False))


def flip_labels(data: Dataset) -> Dataset:
    return Dataset(data.x, data.num_classes - 1 - data.y, data.num_classes)


def retarget_labels(data: Dataset, source: int, target: int) -> Dataset:
    y = data.y.copy()
    y[y == source] = target
    return Dataset(data.x, y, data.num_classes)


def poisoned_data(data: Dataset, atk: AttackConfig) -> Dataset:
    """Training set a malicious client actually uses."""
    if atk.kind == "label_flip":
        return flip_labels(data)
    if atk.kind == "targeted":
        return retarget_labels(data, atk.source, atk.target)
    return data


def scale_attack(global_w: np.ndarray, honest_w: np.ndarray, scale: float) -> np.ndarray:
    return global_w - scale * (honest_w - global_w)
