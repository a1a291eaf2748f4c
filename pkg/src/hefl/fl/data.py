"""Datasets: a seeded Gaussian-mixture generator, an IDX reader, and client partitioning."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y)
        self.y = self.y.astype(np.int64 if self.y.dtype.kind in "iub" else np.float64)
        if self.x.ndim != 2 or self.x.shape[0] != self.y.shape[0]:
            raise DataError(f"features {self.x.shape} and labels {self.y.shape} do not line up")

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.num_classes)


def gaussian_mixture(n_samples: int, dim: int, num_classes: int = 2, separation: float = 2.5,
                     seed=0) -> Dataset:
    """Isotropic unit-variance Gaussians, one per class, with random means.

    Class means lie on orthogonal directions scaled so that every pair of
    means is ``separation * sqrt(2)`` apart; for two classes the task is
    linearly separable up to a Bayes error of Phi(-separation).
    """
    if num_classes > dim:
        raise DataError("need dim >= num_classes for orthogonal class means")
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(dim, num_classes)))
    means = separation * basis.T
    if num_classes == 2:
        means = np.stack([means[0], -means[0]])  # symmetric about the origin
    y = rng.integers(0, num_classes, size=n_samples)
    x = means[y] + rng.normal(size=(n_samples, dim))
    return Dataset(x, y, num_classes)


def _open(path: Path):
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path) -> np.ndarray:
    """Read an IDX array (unsigned byte payloads, as used by MNIST-format files)."""
    path = Path(path)
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise DataError(f"{path} is too short to be an IDX file")
    zero, dtype, ndim = struct.unpack_from(">HBB", raw)
    if zero != 0 or dtype != 0x08:
        raise DataError(f"{path}: only unsigned-byte IDX files are supported")
    shape = struct.unpack_from(f">{ndim}I", raw, 4)
    body = np.frombuffer(raw, dtype=np.uint8, offset=4 + 4 * ndim)
    if body.size != int(np.prod(shape)):
        raise DataError(f"{path}: payload size does not match the header")
    return body.reshape(shape)


def load_idx(images, labels, num_classes: int = 10) -> Dataset:
    x = read_idx(images)
    x = x.reshape(x.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(x, read_idx(labels).astype(np.int64), num_classes)


def train_val_split(data: Dataset, val_fraction: float, seed) -> tuple[Dataset, Dataset]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(data))
    n_val = int(round(len(data) * val_fraction))
    return data.subset(order[n_val:]), data.subset(order[:n_val])


def partition(data: Dataset, n_clients: int, seed, skew: float | None = None) -> list[Dataset]:
    """Split across clients; ``skew`` is a Dirichlet concentration for quantity skew.

    ``skew=None`` gives equal shares. Every client receives at least one sample.
    """
    if len(data) < n_clients:
        raise DataError(f"{len(data)} samples cannot cover {n_clients} clients")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(data))
    if skew is None:
        return [data.subset(part) for part in np.array_split(order, n_clients)]
    share = rng.dirichlet(np.full(n_clients, float(skew)))
    counts = 1 + np.floor(share * (len(data) - n_clients)).astype(int)
    counts[-1] += len(data) - counts.sum()
    bounds = np.concatenate([[0], np.cumsum(counts)])
    return [data.subset(order[bounds[i]:bounds[i + 1]]) for i in range(n_clients)]
