"""Find the missing edges that break a reference module apart.

A module of the reference ("healthy") graph is a connected component. When
its nodes end up in two or more components of the comparison ("patient")
graph, every pair of those patient components is examined: the edges of the
healthy graph induced on the pair's nodes, minus the patient edges induced on
the same nodes, are the candidates. A candidate is a *disconnector* when its
endpoints sit in different patient modules and inside the healthy module
being analysed. A pair with no disconnector has been cut off only through
other modules (an *indirect* disconnection).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

from .errors import InputError
from .graph import (
    Edge,
    LabeledGraph,
    ModulePartition,
    check_same_space,
    connected_components,
    edge_difference,
    induced_subgraph,
)


@dataclass(frozen=True)
class SplitRecord:
    healthy_module: int
    patient_modules: tuple[int, ...]


@dataclass(frozen=True)
class PairResult:
    """Outcome for one 2-combination of patient modules inside a split."""

    healthy_module: int
    pair: tuple[int, int]
    direct: tuple[Edge, ...]
    rejected: tuple[Edge, ...]

    @property
    def indirect(self) -> bool:
        return not self.direct


@dataclass
class DisconnectorReport:
    healthy: ModulePartition
    patient: ModulePartition
    splits: list[SplitRecord] = field(default_factory=list)
    pairs: list[PairResult] = field(default_factory=list)

    @property
    def direct(self) -> dict[tuple[int, int, int], tuple[Edge, ...]]:
        """``(healthy, patient_a, patient_b) -> disconnector edges``."""
        return {(r.healthy_module, *r.pair): r.direct for r in self.pairs if r.direct}

    @property
    def indirect(self) -> list[tuple[int, int, int]]:
        return [(r.healthy_module, *r.pair) for r in self.pairs if r.indirect]

    @property
    def rejected(self) -> frozenset[Edge]:
        return frozenset(e for r in self.pairs for e in r.rejected)

    def direct_edges(self) -> frozenset[Edge]:
        return frozenset(e for r in self.pairs for e in r.direct)

    def split_disconnectors(self, healthy_module: int) -> frozenset[Edge]:
        """All disconnectors found anywhere inside one split healthy module.

        This is the set that blocks every path between any two of its patient
        modules, e.g. for pairs that are only indirectly disconnected.
        """
        return frozenset(e for r in self.pairs if r.healthy_module == healthy_module for e in r.direct)

    def is_empty(self) -> bool:
        return not self.splits

    def to_dict(self) -> dict:
        one = lambda e: [e[0] + 1, e[1] + 1]  # noqa: E731
        return {
            "healthy_modules": self.healthy.to_list(),
            "patient_modules": self.patient.to_list(),
            "splits": [
                {
                    "healthy_module": s.healthy_module + 1,
                    "patient_modules": [m + 1 for m in s.patient_modules],
                    "disconnectors": [one(e) for e in sorted(self.split_disconnectors(s.healthy_module))],
                }
                for s in self.splits
            ],
            "direct": [
                {
                    "healthy_module": r.healthy_module + 1,
                    "patient_pair": [r.pair[0] + 1, r.pair[1] + 1],
                    "edges": [one(e) for e in r.direct],
                }
                for r in self.pairs
                if r.direct
            ],
            "indirect": [
                {"healthy_module": h + 1, "patient_pair": [a + 1, b + 1]} for h, a, b in self.indirect
            ],
            "rejected": [one(e) for e in sorted(self.rejected)],
            "disconnectors": [one(e) for e in sorted(self.direct_edges())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def to_text(self) -> str:
        fmt_edges = lambda es: ", ".join(f"({u + 1},{v + 1})" for u, v in sorted(es))  # noqa: E731
        lines = [
            f"healthy modules: {len(self.healthy)}, patient modules: {len(self.patient)}",
        ]
        if not self.splits:
            lines.append("no healthy module splits in the patient graph")
            return "\n".join(lines) + "\n"
        for s in self.splits:
            members = ",".join(str(n + 1) for n in sorted(self.healthy.modules[s.healthy_module]))
            parts = ", ".join(f"P{m + 1}" for m in s.patient_modules)
            lines.append(f"healthy module H{s.healthy_module + 1} {{{members}}} spreads into {parts}")
            for r in self.pairs:
                if r.healthy_module != s.healthy_module:
                    continue
                a, b = r.pair
                if r.direct:
                    lines.append(f"  P{a + 1}-P{b + 1}: missing {fmt_edges(r.direct)}")
                else:
                    lines.append(f"  P{a + 1}-P{b + 1}: indirectly disconnected through other module(s)")
                if r.rejected:
                    lines.append(f"    (not disconnectors: {fmt_edges(r.rejected)})")
        lines.append(f"missing edges associated with disconnectivity: {fmt_edges(self.direct_edges()) or 'none'}")
        return "\n".join(lines) + "\n"


def detect_splits(hp: ModulePartition, pp: ModulePartition) -> list[SplitRecord]:
    """Healthy modules whose nodes fall into two or more patient modules."""
    if hp.nodes != pp.nodes:
        raise InputError("partitions cover different node sets")
    out = []
    for h_idx, members in enumerate(hp.modules):
        touched = sorted({pp.module_of(n) for n in members})
        if len(touched) >= 2:
            out.append(SplitRecord(h_idx, tuple(touched)))
    return out


def find_disconnectors(healthy: LabeledGraph, patient: LabeledGraph) -> DisconnectorReport:
    check_same_space(healthy, patient)
    hp = connected_components(healthy)
    pp = connected_components(patient)
    report = DisconnectorReport(hp, pp, detect_splits(hp, pp))

    for split in report.splits:
        h_nodes = hp.modules[split.healthy_module]
        for a, b in combinations(split.patient_modules, 2):
            union = pp.modules[a] | pp.modules[b]
            diff = edge_difference(induced_subgraph(healthy, union), induced_subgraph(patient, union))
            direct, rejected = [], []
            for u, v in sorted(diff):
                crosses = pp.module_of(u) != pp.module_of(v)
                if crosses and u in h_nodes and v in h_nodes:
                    direct.append((u, v))
                else:
                    rejected.append((u, v))
            report.pairs.append(PairResult(split.healthy_module, (a, b), tuple(direct), tuple(rejected)))
    return report


def _reachable(adj: dict[int, list[int]], src: int) -> set[int]:
    seen = {src}
    queue = deque([src])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                queue.append(y)
    return seen


def disconnector_oracle(healthy: LabeledGraph, patient: LabeledGraph) -> frozenset[Edge]:
    """Brute-force reference: healthy-only edges whose endpoints lose their path.

    Deliberately shares no code with :func:`find_disconnectors`; reachability
    is recomputed by breadth-first search for every candidate edge.
    """
    check_same_space(healthy, patient)
    h_adj, p_adj = healthy.neighbors(), patient.neighbors()
    out = set()
    for u, v in healthy.edges - patient.edges:
        if v in _reachable(h_adj, u) and v not in _reachable(p_adj, u):
            out.add((u, v))
    return frozenset(out)
