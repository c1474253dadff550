"""Versioned ``.npz`` checkpoints: parameter arrays plus a JSON header."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .optim import MlpParams

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: MlpParams, meta: dict | None = None) -> Path:
    path = Path(path)
    header = {"format": "neuromia-checkpoint", "version": FORMAT_VERSION, **(meta or {})}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(header, sort_keys=True)), **params.arrays())
    return path


def load_checkpoint(path) -> tuple[MlpParams, dict]:
    with np.load(path, allow_pickle=False) as z:
        try:
            meta = json.loads(str(z["meta"]))
        except KeyError:
            raise CheckpointError(f"{path}: missing header") from None
        if meta.get("version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')!r}")
        params = MlpParams(*(z[k].astype(np.float64) for k in ("W1", "b1", "W2", "b2")))
    return params, meta
