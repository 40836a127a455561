"""Synthetic two-class dataset, logistic-regression training math, and
sample-weighted aggregation.

The dataset is two Gaussian clusters with overlapping tails, small enough
that a full run takes seconds. Model parameters travel as a flat float64
vector [w_0..w_{d-1}, bias].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .sim import RngStream

LEARNING_RATE = 0.1
CLUSTER_SHIFT = 2.2  # distance of each class mean from the origin, in sigma units

MSG_BROADCAST = 0
MSG_UPDATE = 1
_HEADER = struct.Struct("<BIII")  # kind, round_index, n_samples, weight count


@dataclass
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    shards: list[tuple[np.ndarray, np.ndarray]]


def make_dataset(seed: int, n_samples: int = 2000, d: int = 16, n_clients: int = 10) -> Dataset:
    """Two Gaussian clusters, 80/20 train/test, train split IID across clients."""
    if n_samples < 10 * n_clients:
        raise ValueError(f"n_samples {n_samples} < 10 * {n_clients} clients")
    rng = RngStream(seed, "data.make").numpy()
    shift = CLUSTER_SHIFT / np.sqrt(d)
    y = (rng.random(n_samples) < 0.5).astype(np.float64)
    centers = np.where(y[:, None] > 0.5, shift, -shift)
    x = centers + rng.standard_normal((n_samples, d))
    n_train = int(n_samples * 0.8)
    train_x, train_y = x[:n_train], y[:n_train]
    test_x, test_y = x[n_train:], y[n_train:]
    shards = []
    base, rem = divmod(n_train, n_clients)
    start = 0
    for i in range(n_clients):
        size = base + (1 if i < rem else 0)
        shards.append((train_x[start : start + size], train_y[start : start + size]))
        start += size
    return Dataset(train_x, train_y, test_x, test_y, shards)


def init_params(d: int) -> np.ndarray:
    return np.zeros(d + 1, dtype=np.float64)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(params: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    z = x @ params[:-1] + params[-1]
    # log(1 + exp(-s*z)) with s = +/-1, stable form
    s = 2.0 * y - 1.0
    return float(np.mean(np.logaddexp(0.0, -s * z)))


def logistic_grad(params: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = x @ params[:-1] + params[-1]
    err = _sigmoid(z) - y
    g = np.empty_like(params)
    g[:-1] = x.T @ err / len(y)
    g[-1] = float(np.mean(err))
    return g


def local_fit(params: np.ndarray, x: np.ndarray, y: np.ndarray, epochs: int, lr: float = LEARNING_RATE) -> np.ndarray:
    """Full-batch gradient descent; epochs=0 returns the input unchanged."""
    w = params.copy()
    for _ in range(epochs):
        w -= lr * logistic_grad(w, x, y)
    return w


def accuracy(params: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    z = x @ params[:-1] + params[-1]
    pred = (z >= 0.0).astype(np.float64)
    return float(np.mean(pred == y))


def aggregate_fedavg(updates: list[tuple[np.ndarray, int]]) -> np.ndarray:
    """Sample-count-weighted coordinate-wise mean."""
    if not updates:
        raise ValueError("empty update set")
    length = len(updates[0][0])
    for w, _ in updates:
        if len(w) != length:
            raise ValueError("update vectors differ in length")
    total = sum(n for _, n in updates)
    acc = np.zeros(length, dtype=np.float64)
    for w, n in updates:
        acc += np.asarray(w, dtype=np.float64) * (n / total)
    return acc


def encode_params(kind: int, round_index: int, n_samples: int, weights: np.ndarray, pad_to: int = 0) -> bytes:
    body = _HEADER.pack(kind, round_index, n_samples, len(weights)) + weights.astype("<f8").tobytes()
    if pad_to > len(body):
        body += b"\x00" * (pad_to - len(body))
    return body


def decode_params(data: bytes) -> tuple[int, int, int, np.ndarray]:
    kind, round_index, n_samples, count = _HEADER.unpack_from(data, 0)
    off = _HEADER.size
    weights = np.frombuffer(data, dtype="<f8", count=count, offset=off).copy()
    return kind, round_index, n_samples, weights
