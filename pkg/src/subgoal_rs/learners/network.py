"""Small fully connected value network in numpy.

Weights are stored as a text file::

    subgoal-rs-valuenet 1
    layers 14 100 100 100 1
    activation relu
    params <count>
    <one float per line, layer by layer: W (row-major, in x out) then b>
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = "subgoal-rs-valuenet"
FORMAT_VERSION = 1


class TrainingDiverged(FloatingPointError):
    pass


def _relu(x):
    return np.maximum(x, 0.0)


class ValueNetwork:
    """ReLU MLP with a scalar output."""

    activation = "relu"

    def __init__(self, layer_sizes: Sequence[int], rng: np.random.Generator | None = None):
        sizes = [int(n) for n in layer_sizes]
        if len(sizes) < 2 or sizes[-1] != 1 or min(sizes) < 1:
            raise ValueError(f"bad layer sizes {layer_sizes}; output layer must be 1")
        self.sizes = sizes
        rng = np.random.default_rng(0) if rng is None else rng
        self.weights = []
        self.biases = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            self.weights.append(rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out)))
            self.biases.append(np.zeros(n_out))
        self.weights[-1] *= 0.1
        self._velocity = None

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    def copy(self) -> "ValueNetwork":
        other = object.__new__(ValueNetwork)
        other.sizes = list(self.sizes)
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other._velocity = None
        return other

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        out = self._forward(np.atleast_2d(x))[-1][:, 0]
        return float(out[0]) if x.ndim == 1 else out

    def _forward(self, x: np.ndarray) -> list[np.ndarray]:
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = _relu(h)
            acts.append(h)
        return acts

    def loss_and_grads(self, x, y) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        """Mean squared error ``mean((y - V(x))^2)`` and its parameter gradients."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1)
        acts = self._forward(x)
        err = acts[-1][:, 0] - y
        loss = float(np.mean(err ** 2))
        g = (2.0 / len(y)) * err[:, None]
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            gw[i] = acts[i].T @ g
            gb[i] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (acts[i] > 0)
        return loss, gw, gb

    def train_step(self, x, y, lr: float = 1e-3, momentum: float = 0.0) -> float:
        """One SGD step on the batch; returns the pre-step loss."""
        if len(np.atleast_1d(y)) == 0:
            raise ValueError("empty batch")
        if not np.all(np.isfinite(y)):
            raise TrainingDiverged("non-finite regression targets")
        loss, gw, gb = self.loss_and_grads(x, y)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became {loss}")
        grads = gw + gb
        params = self.weights + self.biases
        if momentum:
            if self._velocity is None:
                self._velocity = [np.zeros_like(p) for p in params]
            for v, p, g in zip(self._velocity, params, grads):
                v *= momentum
                v -= lr * g
                p += v
        else:
            for p, g in zip(params, grads):
                p -= lr * g
        return loss

    def flat_params(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def set_flat_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        i = 0
        for k in range(len(self.weights)):
            for arr in (self.weights[k], self.biases[k]):
                arr[...] = flat[i:i + arr.size].reshape(arr.shape)
                i += arr.size
        if i != flat.size:
            raise ValueError(f"expected {i} parameters, got {flat.size}")

    def flat_grads(self, x, y) -> np.ndarray:
        _, gw, gb = self.loss_and_grads(x, y)
        return np.concatenate([a.ravel() for pair in zip(gw, gb) for a in pair])

    def save(self, path: str | Path) -> None:
        flat = self.flat_params()
        lines = [f"{MAGIC} {FORMAT_VERSION}", "layers " + " ".join(map(str, self.sizes)),
                 f"activation {self.activation}", f"params {flat.size}"]
        lines.extend(repr(float(v)) for v in flat)
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ValueNetwork":
        lines = Path(path).read_text().splitlines()
        magic, _, version = lines[0].partition(" ")
        if magic != MAGIC or int(version) != FORMAT_VERSION:
            raise ValueError(f"{path}: not a version {FORMAT_VERSION} value network file")
        sizes = [int(v) for v in lines[1].split()[1:]]
        if lines[2].split()[1] != cls.activation:
            raise ValueError(f"{path}: unsupported activation {lines[2]}")
        count = int(lines[3].split()[1])
        flat = np.array([float(v) for v in lines[4:4 + count]])
        net = cls(sizes)
        net.set_flat_params(flat)
        return net


def train_value_network(net: ValueNetwork, features, targets, lr: float = 1e-3,
                        momentum: float = 0.0) -> float:
    return net.train_step(features, targets, lr, momentum)
