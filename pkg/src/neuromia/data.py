"""Dataset loaders (Iris CSV, WDBC CSV, IDX binaries) and split plans."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numeric import SeededRng, shuffle_indices

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049
SHADOW_FRACTION = 0.8


class ParseError(ValueError):
    pass


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("features must be 2-D")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on sample count")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("label out of range")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.name, self.features[idx], self.labels[idx], self.num_classes, self.class_names)


@dataclass(frozen=True)
class SplitPlan:
    target_train: np.ndarray
    target_test: np.ndarray
    shadow_train: np.ndarray
    shadow_test: np.ndarray
    seed: int = 0

    def check(self) -> None:
        tt, te = set(self.target_train.tolist()), set(self.target_test.tolist())
        st, ste = set(self.shadow_train.tolist()), set(self.shadow_test.tolist())
        if tt & te:
            raise AssertionError("target train/test overlap")
        if not st <= tt:
            raise AssertionError("shadow_train not inside target_train")
        if len(st) != math.ceil(SHADOW_FRACTION * len(tt)):
            raise AssertionError("shadow_train has the wrong size")
        if st & ste:
            raise AssertionError("shadow train/test overlap")


def _read_lines(path) -> list[str]:
    return Path(path).read_text().splitlines()


def load_iris(path) -> Dataset:
    """Iris CSV: four numeric columns then a class name per row."""
    rows, names, classes = [], [], {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 5:
            raise ParseError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts[:4]])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
        name = parts[4]
        if name not in classes:
            classes[name] = len(classes)
            names.append(name)
        rows[-1].append(classes[name])
    if len(classes) != 3:
        raise ParseError(f"{path}: expected 3 classes, found {len(classes)}")
    arr = np.array(rows, dtype=np.float64)
    return Dataset("iris", arr[:, :4], arr[:, 4].astype(np.int64), 3, tuple(names))


def load_wdbc(path) -> Dataset:
    """WDBC CSV: id, diagnosis (M/B), 30 real features. M maps to 1."""
    feats, labels = [], []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 32:
            raise ParseError(f"{path}:{lineno}: expected 32 fields, got {len(parts)}")
        if parts[1] not in ("M", "B"):
            raise ParseError(f"{path}:{lineno}: diagnosis must be M or B, got {parts[1]!r}")
        labels.append(1 if parts[1] == "M" else 0)
        try:
            feats.append([float(v) for v in parts[2:]])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    return Dataset(
        "wdbc",
        np.array(feats, dtype=np.float64).reshape(-1, 30),
        np.array(labels, dtype=np.int64),
        2,
        ("B", "M"),
    )


def _read_idx(path, expected_magic: int) -> tuple[tuple[int, ...], bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">i", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: magic {magic}, expected {expected_magic}")
    ndim = raw[3]
    dims = struct.unpack(f">{ndim}i", raw[4 : 4 + 4 * ndim])
    body = raw[4 + 4 * ndim :]
    if len(body) != int(np.prod(dims)):
        raise FormatError(f"{path}: payload size {len(body)} does not match dims {dims}")
    return dims, body


def load_idx(images_path, labels_path, limit: int | None = None, name: str = "mnist") -> Dataset:
    """MNIST-style IDX pair. Pixels are flattened and scaled by 1/255."""
    idims, ibody = _read_idx(images_path, IDX_IMAGES_MAGIC)
    ldims, lbody = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if idims[0] != ldims[0]:
        raise FormatError(f"image count {idims[0]} != label count {ldims[0]}")
    n = idims[0] if limit is None else min(limit, idims[0])
    width = int(np.prod(idims[1:]))
    pixels = np.frombuffer(ibody, dtype=np.uint8, count=n * width).reshape(n, width)
    labels = np.frombuffer(lbody, dtype=np.uint8, count=n).astype(np.int64)
    return Dataset(name, pixels.astype(np.float64) / 255.0, labels, 10)


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array in IDX format (images if 3-D, labels if 1-D)."""
    array = np.asarray(array, dtype=np.uint8)
    magic = {1: IDX_LABELS_MAGIC, 3: IDX_IMAGES_MAGIC}[array.ndim]
    header = struct.pack(">i", magic) + struct.pack(f">{array.ndim}i", *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def normalize(ds: Dataset) -> Dataset:
    """Per-feature min-max scaling to [0, 1]; constant columns become 0."""
    x = ds.features
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (x - lo) / safe, 0.0)
    return Dataset(ds.name, np.clip(out, 0.0, 1.0), ds.labels, ds.num_classes, ds.class_names)


def concat(a: Dataset, b: Dataset) -> Dataset:
    return Dataset(
        a.name,
        np.vstack([a.features, b.features]),
        np.concatenate([a.labels, b.labels]),
        max(a.num_classes, b.num_classes),
        a.class_names,
    )


def _shadow_from(target_train: np.ndarray, target_test: np.ndarray, rng: SeededRng, seed: int) -> SplitPlan:
    k = math.ceil(SHADOW_FRACTION * len(target_train))
    perm = shuffle_indices(rng, len(target_train))
    shadow_train = np.sort(target_train[perm[:k]])
    plan = SplitPlan(target_train, target_test, shadow_train, target_test.copy(), seed)
    return plan


def make_split_plan(ds: Dataset, test_fraction: float, seed: int) -> SplitPlan:
    """Shuffle into target train/test; shadow trains on 80% of target train.

    The shadow's OUT pool is the target test split.
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = ds.n_samples
    n_test = int(round(test_fraction * n))
    if n_test < 1 or n - n_test < 2:
        raise ValueError(f"dataset of {n} samples too small for test_fraction {test_fraction}")
    rng = SeededRng(seed)
    perm = shuffle_indices(rng, n)
    target_test = np.sort(perm[:n_test])
    target_train = np.sort(perm[n_test:])
    return _shadow_from(target_train, target_test, rng, seed)


def split_plan_from_partition(train_idx, test_idx, seed: int) -> SplitPlan:
    """Plan for datasets that ship with a fixed train/test partition."""
    rng = SeededRng(seed)
    return _shadow_from(np.asarray(train_idx, np.int64), np.asarray(test_idx, np.int64), rng, seed)
