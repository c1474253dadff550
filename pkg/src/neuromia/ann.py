"""Baseline artificial network: one hidden ReLU layer, softmax output, Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .numeric import SeededRng, ShapeError, cross_entropy, derive_seed, shuffle_indices
from .optim import AdamState, MlpParams, adam_step, init_params

HIDDEN = 1000


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    lr: float = 1e-3
    hidden: int = HIDDEN

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class MlpCache:
    x: np.ndarray
    pre: np.ndarray
    hidden: np.ndarray
    logits: np.ndarray
    params: MlpParams


@dataclass
class TrainResult:
    params: MlpParams
    train_acc: float
    test_acc: float
    epoch_losses: list[float] = field(default_factory=list)


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.W1.shape[0]:
        raise ShapeError(f"input {x.shape} does not match W1 {params.W1.shape}")
    pre = x @ params.W1 + params.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ params.W2 + params.b2
    return logits, MlpCache(x, pre, hidden, logits, params)


def logits_backward(cache: MlpCache, dlogits: np.ndarray) -> MlpParams:
    """Backpropagate an arbitrary logits gradient through the two layers."""
    p = cache.params
    dW2 = cache.hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dpre = (dlogits @ p.W2.T) * (cache.pre > 0)
    dW1 = cache.x.T @ dpre
    db1 = dpre.sum(axis=0)
    return MlpParams(dW1, db1, dW2, db2)


def mlp_backward(cache: MlpCache, labels: np.ndarray) -> tuple[float, MlpParams]:
    loss, dlogits = cross_entropy(cache.logits, labels)
    return loss, logits_backward(cache, dlogits)


def per_example_grads(params: MlpParams, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Flattened gradient of each sample's own loss, shape (batch, n_params)."""
    logits, cache = mlp_forward(params, x)
    n = x.shape[0]
    _, dlogits = cross_entropy(logits, labels)
    dlogits = dlogits * n  # undo the batch mean
    dpre = (dlogits @ params.W2.T) * (cache.pre > 0)
    gW1 = np.einsum("bd,bh->bdh", x, dpre).reshape(n, -1)
    gW2 = np.einsum("bh,bc->bhc", cache.hidden, dlogits).reshape(n, -1)
    return np.concatenate([gW1, dpre, gW2, dlogits], axis=1)


def predict(params: MlpParams, x: np.ndarray) -> np.ndarray:
    logits, _ = mlp_forward(params, x)
    return np.argmax(logits, axis=1)


def accuracy(params: MlpParams, x: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(predict(params, x) == y))


def train_ann(ds: Dataset, train_idx, test_idx, cfg: TrainConfig) -> TrainResult:
    train_idx = np.asarray(train_idx, dtype=np.int64)
    test_idx = np.asarray(test_idx, dtype=np.int64)
    rng = SeededRng(derive_seed(cfg.seed, "ann-init"))
    params = init_params(rng, ds.n_features, cfg.hidden, ds.num_classes)
    state = AdamState.for_params(params, lr=cfg.lr)
    order_rng = SeededRng(derive_seed(cfg.seed, "ann-order"))
    x, y = ds.features, ds.labels
    losses = []
    for _ in range(cfg.epochs):
        perm = train_idx[shuffle_indices(order_rng, len(train_idx))]
        total = 0.0
        for start in range(0, len(perm), cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            _, cache = mlp_forward(params, x[batch])
            loss, grads = mlp_backward(cache, y[batch])
            params, state = adam_step(params, grads, state)
            total += loss * len(batch)
        losses.append(total / len(perm))
    return TrainResult(
        params,
        accuracy(params, x[train_idx], y[train_idx]),
        accuracy(params, x[test_idx], y[test_idx]),
        losses,
    )
