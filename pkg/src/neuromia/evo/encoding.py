"""Bin encoders turning normalized features into input-node spike schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BinEncoderConfig:
    kind: str = "flipflop"
    bins: int = 8
    window: int = 16
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("flipflop", "triangle"):
            raise ValueError(f"unknown bin encoder {self.kind!r}")
        if self.bins < 2:
            raise ValueError("need at least two bins")
        if self.window < 1 or self.scale <= 0:
            raise ValueError("window and scale must be positive")


def flipflop_percentages(x, bins: int) -> np.ndarray:
    """Position (in %) of x inside its bin, inverted for even (0-based) bins."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    b = np.minimum(np.floor(x * bins), bins - 1).astype(np.int64)
    pos = (x * bins - b) * 100.0
    val = np.where(b % 2 == 0, 100.0 - pos, pos)
    out = np.zeros(x.shape + (bins,))
    np.put_along_axis(out, b[..., None], val[..., None], axis=-1)
    return out


def triangle_percentages(x, bins: int) -> np.ndarray:
    """Triangular memberships centred at b/(bins-1); neighbours sum to 100."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    centres = np.arange(bins) / (bins - 1)
    return np.maximum(0.0, 1.0 - np.abs(x[..., None] - centres) * (bins - 1)) * 100.0


def bin_percentages(x, cfg: BinEncoderConfig) -> np.ndarray:
    if cfg.kind == "flipflop":
        return flipflop_percentages(x, cfg.bins)
    return triangle_percentages(x, cfg.bins)


def spike_count(p: float, cfg: BinEncoderConfig) -> int:
    return min(cfg.window, int(math.floor(cfg.scale * p / 100.0 * cfg.window + 1e-9)))


def encode_bins(x, cfg: BinEncoderConfig, steps: int | None = None) -> np.ndarray:
    """Bool spikes of shape ``(samples, features * bins, steps)``, feature-major.

    A bin at p% fires ``floor(p/100 * window)`` times, evenly spaced from step 0.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    steps = cfg.window if steps is None else steps
    pct = bin_percentages(x, cfg).reshape(x.shape[0], -1)
    counts = np.minimum(cfg.window, np.floor(cfg.scale * pct / 100.0 * cfg.window + 1e-9)).astype(np.int64)
    out = np.zeros(pct.shape + (max(steps, cfg.window),), dtype=bool)
    for n in np.unique(counts):
        if n == 0:
            continue
        times = (np.arange(n) * cfg.window) // n
        rows, cols = np.nonzero(counts == n)
        out[rows[:, None], cols[:, None], times[None, :]] = True
    return out[:, :, :steps]
