"""Shadow-model membership inference: queries, balanced IN/OUT sets, SVM, ROC."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .ann import TrainConfig, TrainResult, mlp_forward, train_ann
from .data import Dataset, SplitPlan
from .numeric import SeededRng, derive_seed, sample_without_replacement, shuffle_indices, softmax
from .optim import MlpParams
from .snn import EncoderConfig, LifConfig, SnnModel, SurrogateConfig, train_snn

IN, OUT = 1, 0


class AttackError(ValueError):
    pass


@dataclass
class AttackSet:
    """Sorted confidence vectors with IN (1) / OUT (0) membership labels."""

    features: np.ndarray
    labels: np.ndarray
    source: str
    sample_idx: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class LinearSvm:
    weights: np.ndarray
    bias: float
    lam: float

    def decision(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weights + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return (self.decision(x) > 0).astype(np.int64)


@dataclass
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "fpr", "tpr"])
            for t, f, p in zip(self.thresholds, self.fpr, self.tpr):
                w.writerow([repr(float(t)), repr(float(f)), repr(float(p))])


@dataclass(frozen=True)
class AttackConfig:
    lam: float = 1e-3
    epochs: int = 200
    seed: int = 0
    resample_queries: bool = False


def query_confidences(model, x: np.ndarray, seed: int | None = None) -> np.ndarray:
    """Per-sample class confidences sorted in descending order.

    ANN: softmax of logits. SNN: softmax of spike-count logits under the
    model's fixed query encoding (``seed`` overrides it). Models exposing a
    ``confidences`` method (evolved networks) supply their own.
    """
    x = np.asarray(x, dtype=np.float64)
    if isinstance(model, MlpParams):
        conf = softmax(mlp_forward(model, x)[0])
    elif isinstance(model, SnnModel):
        conf = softmax(model.logits(x, seed=seed))
    elif hasattr(model, "confidences"):
        conf = np.asarray(model.confidences(x), dtype=np.float64)
    else:
        raise TypeError(f"cannot query model of type {type(model).__name__}")
    return -np.sort(-conf, axis=1)


def balance(labels: np.ndarray, rng: SeededRng) -> np.ndarray:
    """Indices keeping every minority record and an equal random draw of the majority."""
    ins = np.flatnonzero(labels == IN)
    outs = np.flatnonzero(labels == OUT)
    if len(ins) == 0 or len(outs) == 0:
        raise AttackError("attack set needs both IN and OUT records")
    k = min(len(ins), len(outs))
    if len(ins) > k:
        ins = np.sort(ins[sample_without_replacement(rng, len(ins), k)])
    if len(outs) > k:
        outs = np.sort(outs[sample_without_replacement(rng, len(outs), k)])
    return np.concatenate([ins, outs])


def _labelled_queries(model, ds: Dataset, members, non_members, source, rng, seed) -> AttackSet:
    members = np.asarray(members, dtype=np.int64)
    non_members = np.asarray(non_members, dtype=np.int64)
    if len(members) == 0 or len(non_members) == 0:
        raise AttackError(f"{source}: empty member or non-member partition")
    idx = np.concatenate([members, non_members])
    labels = np.concatenate([np.full(len(members), IN), np.full(len(non_members), OUT)])
    keep = balance(labels, rng)
    feats = query_confidences(model, ds.features[idx[keep]], seed=seed)
    return AttackSet(feats, labels[keep], source, idx[keep])


def build_attack_sets(target, shadow, ds: Dataset, plan: SplitPlan, seed: int = 0, resample_queries: bool = False):
    """Attack training set from the shadow model, evaluation set from the target."""
    rng = SeededRng(derive_seed(seed, "balance"))
    q_shadow = derive_seed(seed, "query", "shadow") if resample_queries else None
    q_target = derive_seed(seed, "query", "target") if resample_queries else None
    train = _labelled_queries(shadow, ds, plan.shadow_train, plan.shadow_test, "shadow", rng, q_shadow)
    evaluate = _labelled_queries(target, ds, plan.target_train, plan.target_test, "target", rng, q_target)
    return train, evaluate


def train_attack_svm(attack: AttackSet, lam: float = 1e-3, epochs: int = 200, rng: SeededRng | None = None) -> LinearSvm:
    """Pegasos: minimise lam/2 |w|^2 + mean hinge with step 1/(lam t).

    The bias is folded in as a constant feature (and therefore regularised).
    """
    y = np.where(attack.labels == IN, 1.0, -1.0)
    if len(np.unique(y)) < 2:
        raise AttackError("SVM training needs both IN and OUT labels")
    rng = rng or SeededRng(0)
    x = np.hstack([attack.features, np.ones((len(y), 1))])
    w = np.zeros(x.shape[1])
    radius = 1.0 / np.sqrt(lam)
    t = 0
    for _ in range(epochs):
        for i in shuffle_indices(rng, len(y)):
            t += 1
            eta = 1.0 / (lam * t)
            margin = y[i] * (x[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * y[i] * x[i]
            norm = np.linalg.norm(w)
            if norm > radius:
                w *= radius / norm
    return LinearSvm(w[:-1].copy(), float(w[-1]), lam)


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their mean rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    sorted_v = values[order]
    ranks = np.empty(len(values))
    start = 0
    n = len(values)
    while start < n:
        stop = start + 1
        while stop < n and sorted_v[stop] == sorted_v[start]:
            stop += 1
        ranks[order[start:stop]] = 0.5 * (start + 1 + stop)
        start = stop
    return ranks


def roc_auc(scores, labels) -> RocCurve:
    """Mann-Whitney AUC and the threshold-sweep ROC curve (score >= t is IN)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    pos = labels == IN
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise AttackError("AUC is undefined with a single class")
    ranks = average_ranks(scores)
    auc = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    thresholds = np.unique(scores)[::-1]
    tp = np.array([np.sum(pos & (scores >= t)) for t in thresholds])
    fp = np.array([np.sum(~pos & (scores >= t)) for t in thresholds])
    return RocCurve(
        np.concatenate([[np.inf], thresholds]),
        np.concatenate([[0.0], fp / n_neg]),
        np.concatenate([[0.0], tp / n_pos]),
        float(auc),
    )


@dataclass
class MiaResult:
    auc: float
    roc: RocCurve
    train_acc: float
    test_acc: float
    target: object
    shadow: object
    shadow_train_acc: float
    attack_train: AttackSet
    attack_eval: AttackSet
    svm: LinearSvm


# (train_idx, test_idx, role) -> (model, train_acc, test_acc)
Trainer = Callable[[np.ndarray, np.ndarray, str], tuple]


def attack_with(trainer: Trainer, ds: Dataset, plan: SplitPlan, attack: AttackConfig) -> MiaResult:
    """Train target and shadow with ``trainer`` and score the attack on the target."""
    target, tr_acc, te_acc = trainer(plan.target_train, plan.target_test, "target")
    shadow, sh_acc, _ = trainer(plan.shadow_train, plan.shadow_test, "shadow")
    a_train, a_eval = build_attack_sets(target, shadow, ds, plan, attack.seed, attack.resample_queries)
    svm = train_attack_svm(a_train, attack.lam, attack.epochs, SeededRng(derive_seed(attack.seed, "svm")))
    roc = roc_auc(svm.decision(a_eval.features), a_eval.labels)
    return MiaResult(roc.auc, roc, tr_acc, te_acc, target, shadow, sh_acc, a_train, a_eval, svm)


def gradient_trainer(
    kind: str,
    ds: Dataset,
    cfg: TrainConfig,
    encoder: EncoderConfig | None = None,
    lif: LifConfig | None = None,
    surrogate: SurrogateConfig | None = None,
) -> Trainer:
    """Trainer for the ANN or surrogate-gradient SNN; the shadow gets its own seed."""
    if kind not in ("ann", "snn"):
        raise ValueError(f"unknown model kind {kind!r}")

    def train(train_idx, test_idx, role):
        role_cfg = TrainConfig(**{**cfg.__dict__, "seed": derive_seed(cfg.seed, role)})
        if kind == "ann":
            res: TrainResult = train_ann(ds, train_idx, test_idx, role_cfg)
            return res.params, res.train_acc, res.test_acc
        model, res = train_snn(
            ds, train_idx, test_idx, role_cfg,
            encoder or EncoderConfig(), lif or LifConfig(), surrogate or SurrogateConfig(),
        )
        return model, res.train_acc, res.test_acc

    return train


def run_mia(
    kind: str,
    ds: Dataset,
    plan: SplitPlan,
    cfg: TrainConfig,
    attack: AttackConfig = AttackConfig(),
    encoder: EncoderConfig | None = None,
    lif: LifConfig | None = None,
    surrogate: SurrogateConfig | None = None,
) -> MiaResult:
    return attack_with(gradient_trainer(kind, ds, cfg, encoder, lif, surrogate), ds, plan, attack)
