"""Discrete-time integrate-and-fire simulator with integer synaptic delays.

Semantics: at step t every non-input node adds the weighted spikes arriving
at t to its potential and fires if the potential exceeds its threshold, then
resets to zero. Potentials do not leak. Input nodes fire exactly at their
scheduled steps. A spike fired at t along an edge with delay d arrives at
t + d; arrivals at or after the horizon are dropped.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .genome import Genome, GenomeError


class CompiledNet:
    """Dense per-delay weight blocks for vectorised simulation of one genome."""

    def __init__(self, genome: Genome):
        genome.validate()
        self.genome = genome
        self.ids = genome.node_ids()
        self.index = {nid: k for k, nid in enumerate(self.ids)}
        n = len(self.ids)
        self.in_idx = np.array([self.index[i] for i in genome.inputs], dtype=np.int64)
        self.out_idx = np.array([self.index[i] for i in genome.outputs], dtype=np.int64)
        self.thr = np.array([genome.thresholds[i] for i in self.ids])
        is_input = np.zeros(n, dtype=bool)
        is_input[self.in_idx] = True
        self.is_input = is_input
        self.delays = sorted({d for _, d in genome.edges.values()})
        self.max_delay = max(self.delays, default=1)
        blocks = np.zeros((len(self.delays), n, n))
        slot = {d: k for k, d in enumerate(self.delays)}
        for (src, dst), (w, d) in genome.edges.items():
            blocks[slot[d], self.index[src], self.index[dst]] += w
        # (n, n_delays * n): one matmul per step fans every spike out to all delays
        self.fanout = blocks.transpose(1, 0, 2).reshape(n, -1)

    def run(self, input_spikes: np.ndarray, steps: int) -> np.ndarray:
        """``input_spikes``: bool (samples, n_inputs, >= steps); returns output counts."""
        input_spikes = np.asarray(input_spikes, dtype=bool)
        if input_spikes.ndim != 3 or input_spikes.shape[1] != len(self.in_idx):
            raise GenomeError(f"input spikes {input_spikes.shape} do not match {len(self.in_idx)} input nodes")
        if input_spikes.shape[2] < steps:
            raise GenomeError("input schedule shorter than the simulation horizon")
        samples, n = input_spikes.shape[0], len(self.ids)
        counts = np.zeros((samples, len(self.out_idx)), dtype=np.int64)
        ring = self.max_delay + 1
        buf = np.zeros((ring, samples, n))
        v = np.zeros((samples, n))
        nd = len(self.delays)
        for t in range(steps):
            slot = t % ring
            v += buf[slot]
            buf[slot] = 0.0
            fire = v > self.thr
            fire[:, self.is_input] = False
            fire[:, self.in_idx] = input_spikes[:, :, t]
            v[fire] = 0.0
            # input potentials are never read; keep them at zero
            v[:, self.is_input] = 0.0
            counts += fire[:, self.out_idx]
            if t + 1 < steps and fire.any():
                out = (fire.astype(np.float64) @ self.fanout).reshape(samples, nd, n)
                for k, d in enumerate(self.delays):
                    if t + d < steps:
                        buf[(t + d) % ring] += out[:, k]
        return counts


def risp_simulate(genome: Genome, schedules: Mapping[int, object], steps: int) -> np.ndarray:
    """Output spike counts of one run, ordered like ``genome.outputs``.

    ``schedules`` maps input node ids to iterables of firing steps.
    """
    net = CompiledNet(genome)
    spikes = np.zeros((1, len(genome.inputs), steps), dtype=bool)
    pos = {nid: k for k, nid in enumerate(genome.inputs)}
    for nid, times in schedules.items():
        if nid not in pos:
            raise GenomeError(f"schedule references non-input node {nid}")
        for t in times:
            if 0 <= int(t) < steps:
                spikes[0, pos[nid], int(t)] = True
    return net.run(spikes, steps)[0]
