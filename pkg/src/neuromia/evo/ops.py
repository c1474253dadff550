"""Genetic operators: random genomes, tournament selection, crossover, mutation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numeric import SeededRng, gaussian, sample_without_replacement
from .genome import Genome


@dataclass(frozen=True)
class ParamRanges:
    weight: tuple[float, float] = (-1.0, 1.0)
    threshold: tuple[float, float] = (0.1, 1.0)
    max_delay: int = 16
    init_delay: int = 3
    max_hidden: int = 8
    edge_density: float = 0.3
    weight_step: float = 0.25
    threshold_step: float = 0.1


MUTATIONS = (
    "add_node", "delete_node", "add_edge", "delete_edge",
    "perturb_weight", "perturb_threshold", "perturb_delay",
)


def _uniform(rng: SeededRng, lo: float, hi: float) -> float:
    return lo + (hi - lo) * float(rng.uniform())


def _choice(rng: SeededRng, items):
    return items[rng.integer(len(items))]


def _new_edge(rng: SeededRng, r: ParamRanges) -> tuple[float, int]:
    return _uniform(rng, *r.weight), 1 + rng.integer(r.init_delay)


def random_genome(rng: SeededRng, n_inputs: int, n_outputs: int, r: ParamRanges = ParamRanges()) -> Genome:
    """Ids: inputs first, then outputs, then 0..max_hidden hidden nodes."""
    inputs = tuple(range(n_inputs))
    outputs = tuple(range(n_inputs, n_inputs + n_outputs))
    n_hidden = rng.integer(r.max_hidden + 1)
    total = n_inputs + n_outputs + n_hidden
    thresholds = {i: _uniform(rng, *r.threshold) for i in range(total)}
    edges = {}
    for src in range(total):
        for dst in range(n_inputs, total):
            if src != dst and rng.uniform() < r.edge_density:
                edges[(src, dst)] = _new_edge(rng, r)
    return Genome(thresholds, edges, inputs, outputs)


def tournament_select(fitness, ids, k: int, rng: SeededRng) -> int:
    """Position of the fittest of ``k`` distinct random entrants; ties go to the lower id."""
    n = len(fitness)
    if n == 0:
        raise ValueError("empty population")
    k = max(1, min(k, n))
    entrants = sample_without_replacement(rng, n, k)
    return int(min(entrants, key=lambda i: (-fitness[i], ids[i])))


def crossover(a: Genome, b: Genome, rng: SeededRng, merge_prob: float = 0.1) -> Genome:
    """Node/edge recombination, or with ``merge_prob`` a union of both parents."""
    if a.inputs != b.inputs or a.outputs != b.outputs:
        raise ValueError("parents must share input and output ids")
    if rng.uniform() < merge_prob:
        return merge(a, b)
    parents = (a, b)
    thresholds = {}
    for nid in sorted(a.io_ids):
        thresholds[nid] = parents[rng.integer(2)].thresholds[nid]
    for nid in sorted(set(a.hidden_ids()) | set(b.hidden_ids())):
        src = parents[rng.integer(2)]
        if nid in src.thresholds:
            thresholds[nid] = src.thresholds[nid]
    edges = {}
    for key in sorted(set(a.edges) | set(b.edges)):
        if key[0] not in thresholds or key[1] not in thresholds:
            continue
        if key in a.edges and key in b.edges:
            edges[key] = parents[rng.integer(2)].edges[key]
        else:
            edges[key] = (a.edges if key in a.edges else b.edges)[key]
    return Genome(thresholds, edges, a.inputs, a.outputs)


def merge(a: Genome, b: Genome) -> Genome:
    """All nodes and edges of both parents; ``a`` wins on conflicts."""
    thresholds = {**b.thresholds, **a.thresholds}
    edges = {**b.edges, **a.edges}
    return Genome(thresholds, edges, a.inputs, a.outputs)


def _clamp(v, lo, hi):
    return min(hi, max(lo, v))


def mutate(g: Genome, rate: float, rng: SeededRng, r: ParamRanges = ParamRanges()) -> Genome:
    """With probability ``rate`` apply one uniformly chosen operator; returns a new genome."""
    if not 0 <= rate <= 1:
        raise ValueError("mutation rate must be in [0, 1]")
    g = g.copy()
    if rate == 0 or rng.uniform() >= rate:
        return g
    op = MUTATIONS[rng.integer(len(MUTATIONS))]
    nodes = g.node_ids()
    targets = [i for i in nodes if i not in set(g.inputs)]
    edge_keys = sorted(g.edges)
    if op == "add_node":
        nid = g.next_id()
        g.thresholds[nid] = _uniform(rng, *r.threshold)
        g.edges[(_choice(rng, nodes), nid)] = _new_edge(rng, r)
        g.edges[(nid, _choice(rng, targets))] = _new_edge(rng, r)
    elif op == "delete_node":
        hidden = g.hidden_ids()
        if hidden:
            g.remove_node(_choice(rng, hidden))
    elif op == "add_edge":
        free = [(s, t) for s in nodes for t in targets if s != t and (s, t) not in g.edges]
        if free:
            g.edges[_choice(rng, free)] = _new_edge(rng, r)
    elif op == "delete_edge":
        if edge_keys:
            del g.edges[_choice(rng, edge_keys)]
    elif op == "perturb_weight":
        if edge_keys:
            key = _choice(rng, edge_keys)
            w, d = g.edges[key]
            g.edges[key] = (_clamp(w + float(gaussian(rng, 0.0, r.weight_step)), *r.weight), d)
    elif op == "perturb_threshold":
        nid = _choice(rng, targets)
        g.thresholds[nid] = _clamp(g.thresholds[nid] + float(gaussian(rng, 0.0, r.threshold_step)), *r.threshold)
    elif op == "perturb_delay":
        if edge_keys:
            key = _choice(rng, edge_keys)
            w, d = g.edges[key]
            step = 1 if rng.uniform() < 0.5 else -1
            g.edges[key] = (w, int(_clamp(d + step, 1, r.max_delay)))
    return g
