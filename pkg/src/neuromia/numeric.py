"""Dense float64 numerics and the seeded random stream shared by every module.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The random
stream is xoshiro256** seeded through a splitmix64 expansion of a 64-bit
integer, so a seed reproduces the same bits on every platform.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
from randomgen import Xoshiro256

MASK64 = (1 << 64) - 1
_TWO_NEG53 = 1.0 / (1 << 53)


class ShapeError(ValueError):
    """Raised when operand shapes are not conformable."""


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step. Returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def expand_seed(seed: int) -> list[int]:
    """Four splitmix64 outputs used as the xoshiro256** state."""
    state = seed & MASK64
    words = []
    for _ in range(4):
        state, out = splitmix64(state)
        words.append(out)
    return words


def derive_seed(parent: int, *tags) -> int:
    """Child seed for an independent sub-task, ``hash(parent, tags...)``."""
    h = hashlib.blake2b(digest_size=8)
    h.update((parent & MASK64).to_bytes(8, "little"))
    for tag in tags:
        h.update(b"\x1f")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest(), "little")


class SeededRng:
    """xoshiro256** stream with Box-Muller normals.

    Not thread-safe; give each concurrent task its own instance built from
    :func:`derive_seed`.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._bits = Xoshiro256(0)
        st = self._bits.state
        st["s"] = np.array(expand_seed(self.seed), dtype=np.uint64)
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bits.state = st
        self._cached_normal: float | None = None

    def child(self, *tags) -> "SeededRng":
        return SeededRng(derive_seed(self.seed, *tags))

    def raw(self, n: int) -> np.ndarray:
        """``n`` raw 64-bit outputs."""
        if n == 0:
            return np.empty(0, dtype=np.uint64)
        return np.asarray(self._bits.random_raw(n), dtype=np.uint64)

    def next_u64(self) -> int:
        return int(self._bits.random_raw())

    def uniform(self, size=None):
        """Uniform on [0, 1) with 53 random bits."""
        n = 1 if size is None else int(np.prod(size))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * _TWO_NEG53
        if size is None:
            return float(u[0])
        return u.reshape(size)

    def bernoulli(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        return (self.uniform(p.shape) < p).astype(np.float64)

    def integer(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` via a 128-bit multiply-shift."""
        return (self.next_u64() * n) >> 64

    def standard_normal(self, size=None):
        """Box-Muller normals; the second value of each pair is cached."""
        n = 1 if size is None else int(np.prod(size))
        out = np.empty(n)
        filled = 0
        if self._cached_normal is not None and n > 0:
            out[0] = self._cached_normal
            self._cached_normal = None
            filled = 1
        pairs = (n - filled + 1) // 2
        if pairs:
            u = self.uniform(2 * pairs)
            u1 = 1.0 - u[0::2]  # (0, 1] keeps the log finite
            u2 = u[1::2]
            r = np.sqrt(-2.0 * np.log(u1))
            z = np.empty(2 * pairs)
            z[0::2] = r * np.cos(2.0 * math.pi * u2)
            z[1::2] = r * np.sin(2.0 * math.pi * u2)
            need = n - filled
            out[filled:] = z[:need]
            if need < 2 * pairs:
                self._cached_normal = float(z[-1])
        if size is None:
            return float(out[0])
        return out.reshape(size)


def gaussian(rng: SeededRng, mean: float, std: float, size=None):
    """Draw from Normal(mean, std**2)."""
    if std < 0:
        raise ValueError(f"std must be non-negative, got {std}")
    z = rng.standard_normal(size)
    if std == 0:
        return mean if size is None else np.full(size, float(mean))
    return mean + std * z


def shuffle_indices(rng: SeededRng, n: int) -> np.ndarray:
    """Fisher-Yates permutation of ``0..n-1``."""
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = rng.integer(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def sample_without_replacement(rng: SeededRng, n: int, k: int) -> np.ndarray:
    """First ``k`` entries of a partial Fisher-Yates shuffle."""
    if not 0 <= k <= n:
        raise ValueError(f"cannot draw {k} of {n}")
    pool = np.arange(n)
    for i in range(k):
        j = i + rng.integer(n - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k].copy()


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - np.max(z, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - np.max(z, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"label out of range [0, {c})")
    logp = log_softmax(logits)
    rows = np.arange(n)
    loss = -float(np.mean(logp[rows, labels]))
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return loss, grad / n


def check_finite(*arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite value produced")
