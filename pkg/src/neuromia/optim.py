"""Parameter containers and optimizers shared by the ANN and SNN trainers."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .numeric import SeededRng, check_finite


@dataclass
class MlpParams:
    """Two dense layers: ``W1`` (D x H), ``b1`` (H), ``W2`` (H x C), ``b2`` (C)."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.W1.shape[0], self.W1.shape[1], self.W2.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def map(self, fn) -> "MlpParams":
        return MlpParams(**{k: fn(v) for k, v in self.arrays().items()})

    def zip_map(self, other: "MlpParams", fn) -> "MlpParams":
        o = other.arrays()
        return MlpParams(**{k: fn(v, o[k]) for k, v in self.arrays().items()})

    def copy(self) -> "MlpParams":
        return self.map(np.copy)

    def flatten(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays().values()])

    def unflatten(self, flat: np.ndarray) -> "MlpParams":
        out, pos = {}, 0
        for k, v in self.arrays().items():
            out[k] = flat[pos : pos + v.size].reshape(v.shape).copy()
            pos += v.size
        return MlpParams(**out)

    @property
    def size(self) -> int:
        return sum(v.size for v in self.arrays().values())


# Spiking networks reuse the dense layout; LIF dynamics replace ReLU.
SnnParams = MlpParams


def he_uniform(rng: SeededRng, fan_in: int, fan_out: int, gain: float = 6.0) -> np.ndarray:
    """U(-b, b) with ``b = sqrt(gain / fan_in)``; gain 6 is He, gain 1 is LeCun."""
    bound = np.sqrt(gain / fan_in)
    return (rng.uniform((fan_in, fan_out)) * 2.0 - 1.0) * bound


def init_params(rng: SeededRng, d: int, h: int, c: int, gain: float = 6.0) -> MlpParams:
    return MlpParams(
        W1=he_uniform(rng, d, h, gain),
        b1=np.zeros(h),
        W2=he_uniform(rng, h, c, gain),
        b2=np.zeros(c),
    )


@dataclass
class AdamState:
    m: MlpParams
    v: MlpParams
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 1e-3, **kw) -> "AdamState":
        zeros = params.map(np.zeros_like)
        return cls(m=zeros, v=zeros.copy(), lr=lr, **kw)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState) -> tuple[MlpParams, AdamState]:
    """Bias-corrected Adam; ``denom = sqrt(v_hat) + eps``."""
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    m = state.m.zip_map(grads, lambda m, g: b1 * m + (1.0 - b1) * g)
    v = state.v.zip_map(grads, lambda v, g: b2 * v + (1.0 - b2) * g * g)
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    lr, eps = state.lr, state.eps
    new = {}
    mp, vp = m.arrays(), v.arrays()
    for k, p in params.arrays().items():
        new[k] = p - lr * (mp[k] / c1) / (np.sqrt(vp[k] / c2) + eps)
    out = MlpParams(**new)
    check_finite(*out.arrays().values())
    return out, replace(state, m=m, v=v, t=t)


def sgd_step(params: MlpParams, grads: MlpParams, lr: float) -> MlpParams:
    return params.zip_map(grads, lambda p, g: p - lr * g)
