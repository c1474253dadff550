"""Spiking-network genomes and their text serialization.

Grammar (one record per line, ``#`` starts a comment)::

    genome 1
    inputs <id> <id> ...
    outputs <id> <id> ...
    node <id> <threshold>
    edge <from> <to> <weight> <delay>

Every input and output id needs a ``node`` line. Floats are written with
``repr`` so a round trip is lossless.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class GenomeError(ValueError):
    pass


@dataclass
class Genome:
    thresholds: dict[int, float]
    edges: dict[tuple[int, int], tuple[float, int]]  # (src, dst) -> (weight, delay)
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def io_ids(self) -> set[int]:
        return set(self.inputs) | set(self.outputs)

    def hidden_ids(self) -> list[int]:
        io = self.io_ids
        return sorted(i for i in self.thresholds if i not in io)

    def node_ids(self) -> list[int]:
        return sorted(self.thresholds)

    def next_id(self) -> int:
        return max(self.thresholds) + 1 if self.thresholds else 0

    def copy(self) -> "Genome":
        return Genome(dict(self.thresholds), dict(self.edges), self.inputs, self.outputs)

    def remove_node(self, nid: int) -> None:
        if nid in self.io_ids:
            raise GenomeError(f"node {nid} is an input or output node")
        del self.thresholds[nid]
        self.edges = {k: v for k, v in self.edges.items() if nid not in k}

    def validate(self) -> None:
        ins, outs = set(self.inputs), set(self.outputs)
        if len(ins) != len(self.inputs) or len(outs) != len(self.outputs):
            raise GenomeError("duplicate input/output ids")
        if ins & outs:
            raise GenomeError("a node cannot be both input and output")
        missing = (ins | outs) - set(self.thresholds)
        if missing:
            raise GenomeError(f"input/output nodes missing: {sorted(missing)}")
        for (src, dst), (w, d) in self.edges.items():
            if src not in self.thresholds or dst not in self.thresholds:
                raise GenomeError(f"edge {src}->{dst} references a missing node")
            if dst in ins:
                raise GenomeError(f"edge {src}->{dst} targets an input node")
            if int(d) != d or d < 1:
                raise GenomeError(f"edge {src}->{dst} has invalid delay {d}")

    def canonical(self) -> str:
        return to_text(self)


def to_text(g: Genome) -> str:
    lines = [
        "genome 1",
        "inputs " + " ".join(map(str, g.inputs)),
        "outputs " + " ".join(map(str, g.outputs)),
    ]
    lines += [f"node {i} {g.thresholds[i]!r}" for i in sorted(g.thresholds)]
    lines += [f"edge {s} {t} {w!r} {d}" for (s, t), (w, d) in sorted(g.edges.items())]
    return "\n".join(lines) + "\n"


def from_text(text: str) -> Genome:
    thresholds: dict[int, float] = {}
    edges: dict[tuple[int, int], tuple[float, int]] = {}
    inputs = outputs = None
    seen_header = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "genome":
                if tok[1:] != ["1"]:
                    raise GenomeError(f"unsupported genome version {' '.join(tok[1:])!r}")
                seen_header = True
            elif tok[0] == "inputs":
                inputs = tuple(int(t) for t in tok[1:])
            elif tok[0] == "outputs":
                outputs = tuple(int(t) for t in tok[1:])
            elif tok[0] == "node" and len(tok) == 3:
                nid = int(tok[1])
                if nid in thresholds:
                    raise GenomeError(f"duplicate node {nid}")
                thresholds[nid] = float(tok[2])
            elif tok[0] == "edge" and len(tok) == 5:
                key = (int(tok[1]), int(tok[2]))
                if key in edges:
                    raise GenomeError(f"duplicate edge {key[0]}->{key[1]}")
                edges[key] = (float(tok[3]), int(tok[4]))
            else:
                raise GenomeError(f"unrecognised record {line!r}")
        except (ValueError, IndexError) as exc:
            raise GenomeError(f"line {lineno}: {exc}") from None
    if not seen_header or inputs is None or outputs is None:
        raise GenomeError("genome text needs header, inputs and outputs lines")
    g = Genome(thresholds, edges, inputs, outputs)
    g.validate()
    return g
