"""Materialize the data directory from locally installed packages.

Iris and WDBC come from the CSV copies bundled with scikit-learn. The only
offline MNIST source is the 5000-image sample shipped inside mlxtend; it is
shuffled with a fixed seed and written as IDX files (4000 train, 1000 test).
"""

from __future__ import annotations

import gzip
import importlib.util
import os
from pathlib import Path

import numpy as np

from .data import write_idx
from .numeric import SeededRng, shuffle_indices

IRIS_NAMES = ("Iris-setosa", "Iris-versicolor", "Iris-virginica")
MNIST_SPLIT_SEED = 20240601
MNIST_TRAIN = 4000


def _package_dir(name: str) -> Path:
    spec = importlib.util.find_spec(name)
    if spec is None or spec.origin is None:
        raise RuntimeError(f"package {name!r} is required to prepare this dataset")
    return Path(spec.origin).parent


def _sklearn_csv(name: str) -> list[list[str]]:
    path = _package_dir("sklearn") / "datasets" / "data" / name
    lines = path.read_text().splitlines()
    return [line.split(",") for line in lines[1:] if line.strip()]


def write_iris(out: Path) -> Path:
    rows = _sklearn_csv("iris.csv")
    path = out / "iris.data"
    with path.open("w") as fh:
        for r in rows:
            fh.write(",".join(r[:4]) + "," + IRIS_NAMES[int(r[4])] + "\n")
    return path


def write_wdbc(out: Path) -> Path:
    rows = _sklearn_csv("breast_cancer.csv")
    path = out / "wdbc.data"
    with path.open("w") as fh:
        for i, r in enumerate(rows):
            # sklearn target: 0 malignant, 1 benign; ids are not bundled
            diag = "M" if int(r[30]) == 0 else "B"
            fh.write(f"{900000 + i},{diag}," + ",".join(r[:30]) + "\n")
    return path


def write_mnist_subset(out: Path) -> Path:
    src = _package_dir("mlxtend") / "data" / "data" / "mnist_5k.csv.gz"
    with gzip.open(src, "rt") as fh:
        table = np.loadtxt(fh, delimiter=",", dtype=np.float64)
    pixels = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)
    perm = shuffle_indices(SeededRng(MNIST_SPLIT_SEED), len(labels))
    pixels, labels = pixels[perm], labels[perm]
    mdir = out / "mnist"
    mdir.mkdir(parents=True, exist_ok=True)
    write_idx(mdir / "train-images-idx3-ubyte", pixels[:MNIST_TRAIN])
    write_idx(mdir / "train-labels-idx1-ubyte", labels[:MNIST_TRAIN])
    write_idx(mdir / "t10k-images-idx3-ubyte", pixels[MNIST_TRAIN:])
    write_idx(mdir / "t10k-labels-idx1-ubyte", labels[MNIST_TRAIN:])
    return mdir


def prepare_data(out, mnist: bool = True) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_iris(out)
    write_wdbc(out)
    if mnist:
        write_mnist_subset(out)
    return out


def default_data_dir() -> Path:
    return Path(os.environ.get("NEUROMIA_DATA", "data"))
