"""Small numpy models trained by the clients. Weights are always one flat vector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _onehot(y: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((y.size, k))
    out[np.arange(y.size), y] = 1.0
    return out


@dataclass(frozen=True)
class LogisticRegression:
    """Multinomial logistic regression: dim * classes weights followed by classes biases."""

    dim: int
    num_classes: int

    @property
    def num_params(self) -> int:
        return self.dim * self.num_classes + self.num_classes

    def _split(self, w):
        k = self.dim * self.num_classes
        return w[:k].reshape(self.dim, self.num_classes), w[k:]

    def init(self, seed) -> np.ndarray:
        return np.zeros(self.num_params)

    def logits(self, w, x):
        a, b = self._split(w)
        return x @ a + b

    def loss_grad(self, w, x, y):
        a, _ = self._split(w)
        p = _softmax(self.logits(w, x))
        loss = -np.mean(np.log(p[np.arange(y.size), y] + 1e-300))
        g = (p - _onehot(y, self.num_classes)) / y.size
        return loss, np.concatenate([(x.T @ g).ravel(), g.sum(axis=0)])

    def predict(self, w, x):
        return np.argmax(self.logits(w, x), axis=1)


@dataclass(frozen=True)
class MLP:
    """One ReLU hidden layer, softmax output."""

    dim: int
    hidden: int
    num_classes: int

    @property
    def num_params(self) -> int:
        return self.dim * self.hidden + self.hidden + self.hidden * self.num_classes + self.num_classes

    def _split(self, w):
        d, h, k = self.dim, self.hidden, self.num_classes
        i = 0
        w1 = w[i:i + d * h].reshape(d, h); i += d * h  # noqa: E702
        b1 = w[i:i + h]; i += h  # noqa: E702
        w2 = w[i:i + h * k].reshape(h, k); i += h * k  # noqa: E702
        return w1, b1, w2, w[i:]

    def init(self, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        w1 = rng.normal(scale=np.sqrt(2.0 / self.dim), size=(self.dim, self.hidden))
        w2 = rng.normal(scale=np.sqrt(1.0 / self.hidden), size=(self.hidden, self.num_classes))
        return np.concatenate([w1.ravel(), np.zeros(self.hidden), w2.ravel(), np.zeros(self.num_classes)])

    def _forward(self, w, x):
        w1, b1, w2, b2 = self._split(w)
        h = np.maximum(x @ w1 + b1, 0.0)
        return h, h @ w2 + b2

    def loss_grad(self, w, x, y):
        w1, _, w2, _ = self._split(w)
        h, z = self._forward(w, x)
        p = _softmax(z)
        loss = -np.mean(np.log(p[np.arange(y.size), y] + 1e-300))
        gz = (p - _onehot(y, self.num_classes)) / y.size
        gh = (gz @ w2.T) * (h > 0)
        return loss, np.concatenate([(x.T @ gh).ravel(), gh.sum(axis=0), (h.T @ gz).ravel(), gz.sum(axis=0)])

    def predict(self, w, x):
        return np.argmax(self._forward(w, x)[1], axis=1)


@dataclass(frozen=True)
class LinearRegression:
    """Scalar least squares, loss 0.5 * mean((x.w + b - y)^2); weights are (w, b)."""

    dim: int
    num_classes: int = 1

    @property
    def num_params(self) -> int:
        return self.dim + 1

    def init(self, seed) -> np.ndarray:
        return np.zeros(self.num_params)

    def loss_grad(self, w, x, y):
        r = x @ w[:-1] + w[-1] - y
        return 0.5 * np.mean(r**2), np.concatenate([x.T @ r / y.size, [r.mean()]])

    def predict(self, w, x):
        return x @ w[:-1] + w[-1]


def accuracy(model, w, data) -> float:
    return float(np.mean(model.predict(w, data.x) == data.y))


def build_model(kind: str, dim: int, num_classes: int, hidden: int = 32):
    if kind == "logistic":
        return LogisticRegression(dim, num_classes)
    if kind == "mlp":
        return MLP(dim, hidden, num_classes)
    raise ValueError(f"unknown model kind {kind!r}; expected 'logistic' or 'mlp'")
