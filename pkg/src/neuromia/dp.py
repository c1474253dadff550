"""DPSGD: Poisson lots, per-example clipping, Gaussian noise, plain SGD updates.

Privacy is tracked with a Renyi-DP accountant for the subsampled Gaussian
mechanism (integer orders use the binomial expansion, fractional orders the
two-sided series), converted to (epsilon, delta) by minimising over orders.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .ann import TrainConfig, accuracy, mlp_backward, mlp_forward, per_example_grads as ann_per_example_grads
from .data import Dataset
from .numeric import SeededRng, derive_seed, gaussian
from .optim import MlpParams, init_params, sgd_step
from .snn import (
    SNN_INIT_GAIN,
    EncoderConfig,
    LifConfig,
    SnnModel,
    encode,
    per_example_grads as snn_per_example_grads,
    snn_backward,
    snn_forward,
)

DEFAULT_ORDERS = (1.5,) + tuple(float(a) for a in range(2, 257))
SIGMA_CAP = 1e6


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class DpConfig:
    clip: float = 5.0
    sigma: float | None = None
    lot_size: int = 64
    lr: float = 0.05
    epochs: float = 15.0
    target_epsilon: float = 1.0
    delta: float = 1e-5

    def __post_init__(self):
        if self.clip <= 0:
            raise ValueError("clip bound must be positive")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0 < self.delta < 1:
            raise ValueError("delta must be in (0, 1)")
        if self.target_epsilon <= 0:
            raise ValueError("target epsilon must be positive")
        if self.lot_size < 1:
            raise ValueError("lot size must be >= 1")

    def sampling_rate(self, n: int) -> float:
        return min(1.0, self.lot_size / n)

    def steps(self, n: int) -> int:
        return max(1, int(round(self.epochs / self.sampling_rate(n))))


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float


def clip_gradient(g: np.ndarray, clip: float) -> np.ndarray:
    """Scale ``g`` by ``1 / max(1, |g|_2 / clip)``."""
    if clip <= 0:
        raise ValueError("clip bound must be positive")
    g = np.asarray(g, dtype=np.float64)
    norm = np.linalg.norm(g)
    return g / max(1.0, norm / clip)


def clip_rows(grads: np.ndarray, clip: float) -> np.ndarray:
    norms = np.linalg.norm(grads, axis=1, keepdims=True)
    return grads / np.maximum(1.0, norms / clip)


def poisson_sample(n: int, q: float, rng: SeededRng) -> np.ndarray:
    if not 0 <= q <= 1:
        raise ValueError("sampling rate must be in [0, 1]")
    return np.flatnonzero(rng.uniform(n) < q)


def noisy_aggregate(clipped: np.ndarray, sigma: float, clip: float, lot_size: float, rng: SeededRng, dim: int | None = None) -> np.ndarray:
    """``(sum of clipped grads + N(0, sigma^2 C^2 I)) / L`` with L the expected lot size.

    An empty lot yields pure noise over ``dim`` coordinates.
    """
    clipped = np.asarray(clipped, dtype=np.float64)
    if clipped.ndim == 1:
        clipped = clipped[None, :]
    if clipped.shape[0] == 0:
        if dim is None and clipped.shape[1] == 0:
            raise ValueError("empty lot needs an explicit dimension")
        total = np.zeros(dim if dim is not None else clipped.shape[1])
    else:
        total = clipped.sum(axis=0)
    if sigma > 0:
        total = total + gaussian(rng, 0.0, sigma * clip, total.shape)
    return total / lot_size


# -- accountant ---------------------------------------------------------------


def _log_add(a: float, b: float) -> float:
    hi, lo = max(a, b), min(a, b)
    if lo == -math.inf:
        return hi
    return hi + math.log1p(math.exp(lo - hi))


def _log_sub(a: float, b: float) -> float:
    if b == -math.inf:
        return a
    if a == b:
        return -math.inf
    if a < b:
        raise ValueError("log_sub of a smaller value")
    return a + math.log1p(-math.exp(b - a))


def _log_a_int(q: float, sigma: float, alpha: int) -> float:
    k = np.arange(alpha + 1, dtype=np.float64)
    log_terms = (
        special.gammaln(alpha + 1) - special.gammaln(k + 1) - special.gammaln(alpha - k + 1)
        + k * math.log(q) + (alpha - k) * math.log1p(-q)
        + (k * k - k) / (2.0 * sigma**2)
    )
    return float(special.logsumexp(log_terms))


def _log_erfc(x: float) -> float:
    return math.log(2.0) + float(special.log_ndtr(-x * math.sqrt(2.0)))


def _log_a_frac(q: float, sigma: float, alpha: float) -> float:
    log_a0, log_a1 = -math.inf, -math.inf
    z0 = sigma**2 * math.log(1.0 / q - 1.0) + 0.5
    i = 0
    while True:
        coef = special.binom(alpha, i)
        log_coef = math.log(abs(coef))
        j = alpha - i
        log_t0 = log_coef + i * math.log(q) + j * math.log1p(-q)
        log_t1 = log_coef + j * math.log(q) + i * math.log1p(-q)
        log_e0 = math.log(0.5) + _log_erfc((i - z0) / (math.sqrt(2.0) * sigma))
        log_e1 = math.log(0.5) + _log_erfc((z0 - j) / (math.sqrt(2.0) * sigma))
        log_s0 = log_t0 + (i * i - i) / (2.0 * sigma**2) + log_e0
        log_s1 = log_t1 + (j * j - j) / (2.0 * sigma**2) + log_e1
        if coef > 0:
            log_a0 = _log_add(log_a0, log_s0)
            log_a1 = _log_add(log_a1, log_s1)
        else:
            log_a0 = _log_sub(log_a0, log_s0)
            log_a1 = _log_sub(log_a1, log_s1)
        i += 1
        if max(log_s0, log_s1) < -30:
            break
    return _log_add(log_a0, log_a1)


def rdp_per_step(q: float, sigma: float, alpha: float) -> float:
    """Renyi divergence bound of one subsampled-Gaussian step at order ``alpha``."""
    if sigma <= 0:
        return math.inf
    if q == 0:
        return 0.0
    if q == 1.0:
        return alpha / (2.0 * sigma**2)
    if float(alpha).is_integer():
        return _log_a_int(q, sigma, int(alpha)) / (alpha - 1)
    return _log_a_frac(q, sigma, alpha) / (alpha - 1)


@functools.lru_cache(maxsize=1024)
def _rdp_curve(q: float, sigma: float, orders: tuple) -> np.ndarray:
    return np.array([rdp_per_step(q, sigma, a) for a in orders])


def rdp_epsilon(sigma: float, q: float, steps: int, delta: float, orders=DEFAULT_ORDERS) -> float:
    """``min over orders of steps * rho(alpha) + log(1/delta) / (alpha - 1)``."""
    if sigma <= 0:
        return math.inf
    orders = tuple(float(a) for a in orders)
    rho = _rdp_curve(float(q), float(sigma), orders)
    return float(np.min(steps * rho + math.log(1.0 / delta) / (np.array(orders) - 1)))


@functools.lru_cache(maxsize=256)
def calibrate_sigma(target_epsilon: float, delta: float, q: float, steps: int, rtol: float = 1e-3) -> float:
    """Smallest noise multiplier (to ``rtol``) meeting the target epsilon."""
    if target_epsilon <= 0:
        raise CalibrationError("target epsilon must be positive")
    hi = 1.0
    while rdp_epsilon(hi, q, steps, delta) > target_epsilon:
        hi *= 2.0
        if hi > SIGMA_CAP:
            raise CalibrationError(f"epsilon {target_epsilon} unreachable with sigma <= {SIGMA_CAP:g}")
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while (hi - lo) > rtol * hi:
        mid = 0.5 * (lo + hi)
        if rdp_epsilon(mid, q, steps, delta) <= target_epsilon:
            hi = mid
        else:
            lo = mid
    return hi


# -- training -----------------------------------------------------------------


@dataclass
class DpResult:
    model: object
    params: MlpParams
    train_acc: float
    test_acc: float
    budget: PrivacyBudget
    sigma: float
    steps: int
    history: list[dict] = field(default_factory=list)

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "epsilon_spent", "train_acc", "test_acc"])
            for row in self.history:
                w.writerow([row["step"], repr(row["epsilon_spent"]), repr(row["train_acc"]), repr(row["test_acc"])])


def train_dpsgd(
    kind: str,
    ds: Dataset,
    train_idx,
    test_idx,
    dp: DpConfig,
    cfg: TrainConfig,
    encoder: EncoderConfig | None = None,
    lif: LifConfig | None = None,
    alpha: float = 2.0,
    skip_noise: bool = False,
    record_every: int | None = None,
) -> DpResult:
    """Run DPSGD for ``dp.steps(n)`` steps and report the accountant epsilon.

    ``sigma`` defaults to the value calibrated for ``dp.target_epsilon``.
    ``skip_noise`` bypasses sampling, clipping and noising: plain full-batch SGD.
    """
    if kind not in ("ann", "snn"):
        raise ValueError(f"unknown model kind {kind!r}")
    train_idx = np.asarray(train_idx, dtype=np.int64)
    test_idx = np.asarray(test_idx, dtype=np.int64)
    n = len(train_idx)
    q = dp.sampling_rate(n)
    steps = dp.steps(n)
    sigma = dp.sigma if dp.sigma is not None else calibrate_sigma(dp.target_epsilon, dp.delta, q, steps)
    encoder = encoder or EncoderConfig()
    lif = lif or LifConfig()

    gain = 6.0 if kind == "ann" else SNN_INIT_GAIN
    params = init_params(SeededRng(derive_seed(cfg.seed, f"{kind}-init")), ds.n_features, cfg.hidden, ds.num_classes, gain)
    lot_rng = SeededRng(derive_seed(cfg.seed, "dp-lots"))
    noise_rng = SeededRng(derive_seed(cfg.seed, "dp-noise"))
    enc_rng = SeededRng(derive_seed(cfg.seed, "dp-encoding"))
    x, y = ds.features, ds.labels
    eval_seed = derive_seed(cfg.seed, "snn-eval-encoding")

    def grads_for(idx):
        if kind == "ann":
            return ann_per_example_grads(params, x[idx], y[idx])
        spikes = encode(x[idx], encoder, enc_rng)
        return snn_per_example_grads(params, spikes, y[idx], lif, alpha)

    def batch_grad(idx):
        if kind == "ann":
            return mlp_backward(mlp_forward(params, x[idx])[1], y[idx])[1]
        spikes = encode(x[idx], encoder, enc_rng)
        return snn_backward(snn_forward(params, spikes, lif, alpha=alpha)[1], y[idx])[1]

    def as_model(p):
        return p if kind == "ann" else SnnModel(p, encoder, lif, eval_seed, alpha)

    def acc(p, idx):
        if kind == "ann":
            return accuracy(p, x[idx], y[idx])
        return as_model(p).accuracy(x[idx], y[idx])

    history = []
    for step in range(1, steps + 1):
        if skip_noise:
            params = sgd_step(params, batch_grad(train_idx), dp.lr)
        else:
            lot = train_idx[poisson_sample(n, q, lot_rng)]
            chunks = []
            for start in range(0, len(lot), 256):
                chunks.append(clip_rows(grads_for(lot[start : start + 256]), dp.clip))
            clipped = np.concatenate(chunks) if chunks else np.zeros((0, params.size))
            g = noisy_aggregate(clipped, sigma, dp.clip, dp.lot_size, noise_rng, dim=params.size)
            params = sgd_step(params, params.unflatten(g), dp.lr)
        if record_every and (step % record_every == 0 or step == steps):
            history.append({
                "step": step,
                "epsilon_spent": rdp_epsilon(sigma, q, step, dp.delta) if not skip_noise else math.inf,
                "train_acc": acc(params, train_idx),
                "test_acc": acc(params, test_idx),
            })

    eps = math.inf if skip_noise else rdp_epsilon(sigma, q, steps, dp.delta)
    return DpResult(
        as_model(params), params, acc(params, train_idx), acc(params, test_idx),
        PrivacyBudget(eps, dp.delta), sigma, steps, history,
    )
