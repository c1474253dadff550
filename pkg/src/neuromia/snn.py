"""Spiking baseline: spike encoders, LIF layers and arctan surrogate-gradient BPTT.

Spike trains are arrays of shape ``(steps, batch, neurons)`` holding 0.0/1.0.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .ann import TrainResult
from .data import Dataset
from .numeric import SeededRng, ShapeError, cross_entropy, derive_seed, shuffle_indices
from .optim import AdamState, SnnParams, adam_step, init_params

# Weight init bound sqrt(1/fan_in): He-scaled weights saturate the LIF layers
# with binary inputs and stall training on wide inputs.
SNN_INIT_GAIN = 1.0


@dataclass(frozen=True)
class LifConfig:
    beta: float = 0.95
    threshold: float = 1.0
    steps: int = 25

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must be in (0, 1)")
        if self.threshold <= 0 or self.steps < 1:
            raise ValueError("threshold must be positive and steps >= 1")


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "rate"
    steps: int = 25
    tau: float = 5.0
    threshold: float = 0.1

    def __post_init__(self):
        if self.kind not in ("rate", "latency", "delta"):
            raise ValueError(f"unknown encoder {self.kind!r}")
        if self.steps < 1 or self.tau <= 0 or self.threshold <= 0:
            raise ValueError("encoder parameters must be positive")


@dataclass(frozen=True)
class SurrogateConfig:
    alpha: float = 2.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


def _check_unit(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise ValueError("encoder inputs must lie in [0, 1]")
    return x


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def encode_rate(x, steps: int, rng: SeededRng) -> np.ndarray:
    """Independent Bernoulli(x) spikes at every step."""
    x, single = _as_batch(_check_unit(x))
    bits = rng.bernoulli(np.broadcast_to(x, (steps,) + x.shape))
    return bits[:, 0] if single else bits


def latency_times(x, steps: int, tau: float, threshold: float) -> np.ndarray:
    """Spike step per feature; inputs at or below ``threshold`` fire last."""
    x = _check_unit(x)
    out = np.full(x.shape, steps - 1, dtype=np.int64)
    above = x > threshold
    with np.errstate(divide="ignore"):
        t = tau * np.log(x[above] / (x[above] - threshold))
    # round half up, then clamp into the window
    out[above] = np.clip(np.floor(t + 0.5), 0, steps - 1).astype(np.int64)
    return out


def encode_latency(x, steps: int, tau: float = 5.0, threshold: float = 0.1) -> np.ndarray:
    x, single = _as_batch(_check_unit(x))
    times = latency_times(x, steps, tau, threshold)
    bits = (np.arange(steps)[:, None, None] == times[None]).astype(np.float64)
    return bits[:, 0] if single else bits


def encode_delta(x, steps: int, threshold: float = 0.1) -> np.ndarray:
    """Threshold-crossing spikes on the ramp ``x * (t + 1) / steps``.

    A per-neuron accumulator collects the change since the last spike and is
    cleared when it reaches ``threshold``.
    """
    x, single = _as_batch(_check_unit(x))
    bits = np.zeros((steps,) + x.shape)
    acc = np.zeros(x.shape)
    prev = np.zeros(x.shape)
    tol = 1e-12
    for t in range(steps):
        level = x * (t + 1) / steps
        acc += level - prev
        prev = level
        fire = acc >= threshold - tol
        bits[t] = fire
        acc[fire] = 0.0
    return bits[:, 0] if single else bits


def encode(x, cfg: EncoderConfig, rng: SeededRng | None = None) -> np.ndarray:
    if cfg.kind == "rate":
        if rng is None:
            raise ValueError("rate encoding needs an rng")
        return encode_rate(x, cfg.steps, rng)
    if cfg.kind == "latency":
        return encode_latency(x, cfg.steps, cfg.tau, cfg.threshold)
    return encode_delta(x, cfg.steps, cfg.threshold)


def row_seed(seed: int, row: np.ndarray) -> int:
    digest = hashlib.blake2b(np.ascontiguousarray(row, dtype=np.float64).tobytes(), digest_size=8)
    return derive_seed(seed, digest.hexdigest())


def encode_fixed(x: np.ndarray, cfg: EncoderConfig, seed: int) -> np.ndarray:
    """Encoding where each sample's spikes depend only on (seed, sample values).

    Used for evaluation and membership queries so that a sample always sees
    the same spike train regardless of batch composition or order.
    """
    x = _check_unit(np.atleast_2d(x))
    if cfg.kind != "rate":
        return encode(x, cfg)
    out = np.empty((cfg.steps,) + x.shape)
    for i, row in enumerate(x):
        out[:, i] = encode_rate(row, cfg.steps, SeededRng(row_seed(seed, row)))
    return out


def lif_step(u: np.ndarray, current: np.ndarray, cfg: LifConfig):
    """One LIF update with reset by subtraction. Returns ``(u_next, spikes)``."""
    u_pre = cfg.beta * np.asarray(u, dtype=np.float64) + current
    spikes = (u_pre > cfg.threshold).astype(np.float64)
    return u_pre - spikes * cfg.threshold, spikes


def atan_surrogate_grad(u_minus_theta, alpha: float = 2.0):
    """Derivative of ``atan(pi*alpha*u/2)/pi + 1/2``."""
    z = np.array(u_minus_theta, dtype=np.float64) * (math.pi * alpha / 2.0)
    if z.ndim == 0:
        return float((alpha / 2.0) / (1.0 + z * z))
    np.square(z, out=z)
    z += 1.0
    return np.divide(alpha / 2.0, z, out=z)


def atan_smooth_spike(u_minus_theta, alpha: float = 2.0):
    u = np.asarray(u_minus_theta, dtype=np.float64)
    return np.arctan(math.pi * alpha * u / 2.0) / math.pi + 0.5


@dataclass
class SnnCache:
    spikes_in: np.ndarray
    u_hidden: np.ndarray  # pre-reset membranes, (T, B, H)
    s_hidden: np.ndarray
    u_out: np.ndarray
    s_out: np.ndarray
    logits: np.ndarray
    params: SnnParams
    lif: LifConfig
    smooth: bool
    alpha: float


def _lif_layer(currents: np.ndarray, lif: LifConfig, smooth: bool, alpha: float):
    steps = currents.shape[0]
    u = np.zeros(currents.shape[1:])
    u_pre = np.empty_like(currents)
    s = np.empty_like(currents)
    for t in range(steps):
        a = u_pre[t]
        np.multiply(u, lif.beta, out=a)
        a += currents[t]
        if smooth:
            s[t] = atan_smooth_spike(a - lif.threshold, alpha)
        else:
            np.greater(a, lif.threshold, out=s[t])
        np.multiply(s[t], lif.threshold, out=u)
        np.subtract(a, u, out=u)
    return u_pre, s


def snn_forward(
    params: SnnParams,
    spikes: np.ndarray,
    lif: LifConfig,
    smooth: bool = False,
    alpha: float = 2.0,
) -> tuple[np.ndarray, SnnCache]:
    """Run both LIF layers over all steps; logits are output spike counts."""
    spikes = np.asarray(spikes, dtype=np.float64)
    if spikes.ndim != 3 or spikes.shape[2] != params.W1.shape[0]:
        raise ShapeError(f"spike train {spikes.shape} does not match W1 {params.W1.shape}")
    if spikes.shape[0] != lif.steps:
        raise ShapeError(f"spike train has {spikes.shape[0]} steps, LIF config expects {lif.steps}")
    steps, batch, d = spikes.shape
    h = params.W1.shape[1]
    cur_h = (spikes.reshape(steps * batch, d) @ params.W1 + params.b1).reshape(steps, batch, h)
    u_h, s_h = _lif_layer(cur_h, lif, smooth, alpha)
    cur_o = (s_h.reshape(steps * batch, h) @ params.W2 + params.b2).reshape(steps, batch, -1)
    u_o, s_o = _lif_layer(cur_o, lif, smooth, alpha)
    logits = s_o.sum(axis=0)
    return logits, SnnCache(spikes, u_h, s_h, u_o, s_o, logits, params, lif, smooth, alpha)


def _lif_backward(grad_s: np.ndarray, u_pre: np.ndarray, lif: LifConfig, alpha: float, detach_reset: bool):
    """Gradient w.r.t. each step's input current given gradients on the spikes."""
    grad_i = atan_surrogate_grad(u_pre - lif.threshold, alpha)
    g_after = np.zeros(grad_s.shape[1:])
    for t in range(grad_s.shape[0] - 1, -1, -1):
        ga = grad_i[t]  # holds the surrogate slope until overwritten
        if detach_reset:
            ga *= grad_s[t]
        else:
            ga *= grad_s[t] - lif.threshold * g_after
        ga += g_after
        np.multiply(ga, lif.beta, out=g_after)
    return grad_i


def _currents_grad(cache: SnnCache, dlogits: np.ndarray, detach_reset: bool):
    p, lif = cache.params, cache.lif
    steps = cache.s_out.shape[0]
    g_so = np.broadcast_to(dlogits, (steps,) + dlogits.shape)
    g_io = _lif_backward(g_so, cache.u_out, lif, cache.alpha, detach_reset)
    g_sh = g_io @ p.W2.T
    g_ih = _lif_backward(g_sh, cache.u_hidden, lif, cache.alpha, detach_reset)
    return g_io, g_ih


def logits_backward(cache: SnnCache, dlogits: np.ndarray, detach_reset: bool | None = None) -> SnnParams:
    if detach_reset is None:
        detach_reset = not cache.smooth
    g_io, g_ih = _currents_grad(cache, dlogits, detach_reset)
    steps, batch, d = cache.spikes_in.shape
    h = cache.s_hidden.shape[2]
    dW2 = cache.s_hidden.reshape(steps * batch, h).T @ g_io.reshape(steps * batch, -1)
    dW1 = cache.spikes_in.reshape(steps * batch, d).T @ g_ih.reshape(steps * batch, h)
    return SnnParams(dW1, g_ih.sum(axis=(0, 1)), dW2, g_io.sum(axis=(0, 1)))


def snn_backward(
    cache: SnnCache,
    labels: np.ndarray,
    surrogate: SurrogateConfig | None = None,
    detach_reset: bool | None = None,
    loss_scale: float = 1.0,
) -> tuple[float, SnnParams]:
    """Cross-entropy on spike counts, BPTT with the arctan pseudo-derivative.

    The reset path is detached in hard-threshold mode. In smooth mode it is
    differentiated so the result is the exact gradient of the smooth network.
    """
    if surrogate is not None and surrogate.alpha != cache.alpha:
        cache = SnnCache(**{**cache.__dict__, "alpha": surrogate.alpha})
    loss, dlogits = cross_entropy(cache.logits, labels)
    return loss_scale * loss, logits_backward(cache, loss_scale * dlogits, detach_reset)


def per_example_grads(
    params: SnnParams, spikes: np.ndarray, labels: np.ndarray, lif: LifConfig, alpha: float = 2.0
) -> np.ndarray:
    """Flattened per-sample BPTT gradients, shape (batch, n_params)."""
    logits, cache = snn_forward(params, spikes, lif, alpha=alpha)
    n = spikes.shape[1]
    _, dlogits = cross_entropy(logits, labels)
    g_io, g_ih = _currents_grad(cache, dlogits * n, detach_reset=True)
    # batched (d, T) @ (T, h) products per sample
    gW1 = np.matmul(cache.spikes_in.transpose(1, 2, 0), g_ih.transpose(1, 0, 2)).reshape(n, -1)
    gW2 = np.matmul(cache.s_hidden.transpose(1, 2, 0), g_io.transpose(1, 0, 2)).reshape(n, -1)
    return np.concatenate([gW1, g_ih.sum(axis=0), gW2, g_io.sum(axis=0)], axis=1)


@dataclass(frozen=True)
class SnnModel:
    params: SnnParams
    encoder: EncoderConfig
    lif: LifConfig
    eval_seed: int
    alpha: float = 2.0

    def encode_queries(self, x: np.ndarray, seed: int | None = None) -> np.ndarray:
        return encode_fixed(x, self.encoder, self.eval_seed if seed is None else seed)

    def logits(self, x: np.ndarray, seed: int | None = None, batch: int = 500) -> np.ndarray:
        out = []
        for start in range(0, len(x), batch):
            spikes = self.encode_queries(x[start : start + batch], seed)
            out.append(snn_forward(self.params, spikes, self.lif)[0])
        return np.concatenate(out) if out else np.zeros((0, self.params.W2.shape[1]))

    def accuracy(self, x: np.ndarray, y: np.ndarray) -> float:
        if len(y) == 0:
            return float("nan")
        return float(np.mean(np.argmax(self.logits(x), axis=1) == y))


def _check_steps(encoder: EncoderConfig, lif: LifConfig) -> None:
    if encoder.steps != lif.steps:
        raise ValueError(f"encoder steps {encoder.steps} != LIF steps {lif.steps}")


def train_snn(
    ds: Dataset,
    train_idx,
    test_idx,
    cfg,
    encoder: EncoderConfig = EncoderConfig(),
    lif: LifConfig = LifConfig(),
    surrogate: SurrogateConfig = SurrogateConfig(),
) -> tuple[SnnModel, TrainResult]:
    """Adam over surrogate-gradient BPTT; evaluation uses a fixed encoding seed."""
    _check_steps(encoder, lif)
    train_idx = np.asarray(train_idx, dtype=np.int64)
    test_idx = np.asarray(test_idx, dtype=np.int64)
    params = init_params(
        SeededRng(derive_seed(cfg.seed, "snn-init")), ds.n_features, cfg.hidden, ds.num_classes, SNN_INIT_GAIN
    )
    state = AdamState.for_params(params, lr=cfg.lr)
    order_rng = SeededRng(derive_seed(cfg.seed, "snn-order"))
    enc_rng = SeededRng(derive_seed(cfg.seed, "snn-train-encoding"))
    x, y = ds.features, ds.labels
    losses = []
    for _ in range(cfg.epochs):
        perm = train_idx[shuffle_indices(order_rng, len(train_idx))]
        total = 0.0
        for start in range(0, len(perm), cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            spikes = encode(x[batch], encoder, enc_rng)
            _, cache = snn_forward(params, spikes, lif, alpha=surrogate.alpha)
            loss, grads = snn_backward(cache, y[batch])
            params, state = adam_step(params, grads, state)
            total += loss * len(batch)
        losses.append(total / len(perm))
    model = SnnModel(params, encoder, lif, derive_seed(cfg.seed, "snn-eval-encoding"), surrogate.alpha)
    result = TrainResult(
        params,
        model.accuracy(x[train_idx], y[train_idx]),
        model.accuracy(x[test_idx], y[test_idx]),
        losses,
    )
    return model, result
