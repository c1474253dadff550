"""Generational evolution of spiking genomes and membership inference on the result."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset, SplitPlan
from ..mia import AttackConfig, MiaResult, attack_with
from ..numeric import SeededRng, derive_seed
from .encoding import BinEncoderConfig, encode_bins
from .genome import Genome
from .ops import ParamRanges, crossover, mutate, random_genome, tournament_select
from .risp import CompiledNet


@dataclass(frozen=True)
class EvoConfig:
    population_size: int = 100
    mutation_rate: float = 0.5
    crossover_rate: float = 0.5
    tournament_size: int = 4
    generations: int = 50
    elitism: int = 1
    sim_steps: int = 24
    seed: int = 0
    target_fitness: float | None = None
    merge_prob: float = 0.1
    ranges: ParamRanges = ParamRanges()

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population must hold at least two genomes")
        for name in ("mutation_rate", "crossover_rate", "merge_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.tournament_size < 1 or self.generations < 0 or self.sim_steps < 1:
            raise ValueError("tournament size, generations and sim steps must be positive")
        if not 0 <= self.elitism <= self.population_size:
            raise ValueError("elitism must be within the population size")


def output_counts(genome: Genome, spikes: np.ndarray, steps: int) -> np.ndarray:
    return CompiledNet(genome).run(spikes, steps)


def classify(counts: np.ndarray) -> np.ndarray:
    return np.argmax(counts, axis=1)  # ties resolve to the lowest class


def fitness(genome: Genome, ds: Dataset, idx, encoder: BinEncoderConfig, steps: int = 24) -> float:
    """Training accuracy of argmax output spike counts."""
    idx = np.asarray(idx, dtype=np.int64)
    spikes = encode_bins(ds.features[idx], encoder, steps)
    return float(np.mean(classify(output_counts(genome, spikes, steps)) == ds.labels[idx]))


@dataclass
class EvolvedModel:
    genome: Genome
    encoder: BinEncoderConfig
    steps: int

    def counts(self, x: np.ndarray) -> np.ndarray:
        return output_counts(self.genome, encode_bins(x, self.encoder, self.steps), self.steps)

    def confidences(self, x: np.ndarray) -> np.ndarray:
        """Output counts normalized to sum to one; silent outputs give a uniform vector."""
        c = self.counts(x).astype(np.float64)
        total = c.sum(axis=1, keepdims=True)
        uniform = np.full_like(c, 1.0 / c.shape[1])
        return np.where(total > 0, c / np.where(total > 0, total, 1.0), uniform)

    def accuracy(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(classify(self.counts(x)) == y))


@dataclass
class EvoResult:
    best: Genome
    best_fitness: float
    history: list[dict] = field(default_factory=list)
    final_fitness: list[float] = field(default_factory=list)

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["generation", "best", "mean", "best_ever"])
            for h in self.history:
                w.writerow([h["generation"], repr(h["best"]), repr(h["mean"]), repr(h["best_ever"])])


class _Evaluator:
    """Fitness with a cache keyed by canonical genome text (clones are common)."""

    def __init__(self, ds: Dataset, idx, encoder: BinEncoderConfig, steps: int):
        idx = np.asarray(idx, dtype=np.int64)
        self.spikes = encode_bins(ds.features[idx], encoder, steps)
        self.labels = ds.labels[idx]
        self.steps = steps
        self.cache: dict[str, float] = {}

    def __call__(self, g: Genome) -> float:
        key = g.canonical()
        if key not in self.cache:
            pred = classify(output_counts(g, self.spikes, self.steps))
            self.cache[key] = float(np.mean(pred == self.labels))
        return self.cache[key]


def evolve(ds: Dataset, train_idx, evo: EvoConfig, encoder: BinEncoderConfig = BinEncoderConfig()) -> EvoResult:
    rng = SeededRng(derive_seed(evo.seed, "evolve"))
    n_inputs = ds.n_features * encoder.bins
    evaluate = _Evaluator(ds, train_idx, encoder, evo.sim_steps)
    pop = [random_genome(rng, n_inputs, ds.num_classes, evo.ranges) for _ in range(evo.population_size)]
    ids = list(range(len(pop)))
    next_gid = len(pop)
    best, best_fit = None, -1.0
    history = []
    fit: list[float] = []
    for gen in range(evo.generations + 1):
        fit = [evaluate(g) for g in pop]
        order = sorted(range(len(pop)), key=lambda i: (-fit[i], ids[i]))
        if fit[order[0]] > best_fit:
            best, best_fit = pop[order[0]].copy(), fit[order[0]]
        history.append({"generation": gen, "best": fit[order[0]], "mean": float(np.mean(fit)), "best_ever": best_fit})
        if gen == evo.generations or (evo.target_fitness is not None and best_fit >= evo.target_fitness):
            break
        children = [pop[i].copy() for i in order[: evo.elitism]]
        child_ids = [ids[i] for i in order[: evo.elitism]]
        while len(children) < evo.population_size:
            a = pop[tournament_select(fit, ids, evo.tournament_size, rng)]
            if rng.uniform() < evo.crossover_rate:
                b = pop[tournament_select(fit, ids, evo.tournament_size, rng)]
                child = crossover(a, b, rng, evo.merge_prob)
            else:
                child = a.copy()
            children.append(mutate(child, evo.mutation_rate, rng, evo.ranges))
            child_ids.append(next_gid)
            next_gid += 1
        pop, ids = children, child_ids
    return EvoResult(best, best_fit, history, fit)


def evo_trainer(ds: Dataset, evo: EvoConfig, encoder: BinEncoderConfig = BinEncoderConfig()):
    def train(train_idx, test_idx, role):
        role_cfg = EvoConfig(**{**evo.__dict__, "seed": derive_seed(evo.seed, role)})
        res = evolve(ds, train_idx, role_cfg, encoder)
        model = EvolvedModel(res.best, encoder, evo.sim_steps)
        x, y = ds.features, ds.labels
        test_idx = np.asarray(test_idx, dtype=np.int64)
        return model, res.best_fitness, model.accuracy(x[test_idx], y[test_idx])

    return train


def run_evo_mia(
    ds: Dataset,
    plan: SplitPlan,
    evo: EvoConfig,
    encoder: BinEncoderConfig = BinEncoderConfig(),
    attack: AttackConfig = AttackConfig(),
) -> MiaResult:
    """Evolve target and shadow genomes and attack the target with the shared pipeline."""
    return attack_with(evo_trainer(ds, evo, encoder), ds, plan, attack)
