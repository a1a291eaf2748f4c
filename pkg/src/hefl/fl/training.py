"""Client-side local SGD."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError, ParameterError
from .data import Dataset


@dataclass(frozen=True)
class TrainingConfig:
    lr: float = 0.001
    batch_size: int = 32
    local_epochs: int = 5
    max_rounds: int = 200
    patience: int = 8
    tolerance: float = 1e-3

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1 or self.local_epochs < 1 or self.max_rounds < 1:
            raise ParameterError("learning rate must be >= 0; batch size, epochs and rounds >= 1")
        if self.patience < 1:
            raise ParameterError("patience must be >= 1")


def local_sgd(model, w: np.ndarray, data: Dataset, cfg: TrainingConfig, rng) -> np.ndarray:
    """``local_epochs`` passes of shuffled mini-batch SGD starting from a copy of ``w``."""
    if len(data) == 0:
        raise DataError("client has no training data")
    rng = np.random.default_rng(rng)
    w = np.array(w, dtype=np.float64, copy=True)
    for _ in range(cfg.local_epochs):
        order = rng.permutation(len(data))
        for start in range(0, len(data), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, g = model.loss_grad(w, data.x[idx], data.y[idx])
            w -= cfg.lr * g
    return w
