"""Undirected labeled graphs, connected components and edge-set algebra.

Node ids are 0-based in memory. Every file format uses 1-based ids so that
graphs can be written down exactly as they are drawn in figures; the
conversion happens only in the ``read_*``/``write_*``/``to_dict`` helpers.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError

logger = logging.getLogger(__name__)

Edge = tuple[int, int]


def canonical_edge(u: int, v: int) -> Edge:
    """Return ``(min, max)`` for an undirected pair; rejects self-loops."""
    u, v = int(u), int(v)
    if u == v:
        raise InputError(f"self-loop on node {u} is not allowed")
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class LabeledGraph:
    """Simple undirected graph whose nodes carry a modality tag.

    ``p`` fixes the id space ``0..p-1`` and ``modalities`` has one entry per
    id. ``nodes`` is the set of ids actually present; it equals the full id
    space except for induced subgraphs, which keep the parent's ids.
    """

    p: int
    modalities: tuple[str, ...]
    edges: frozenset[Edge]
    nodes: frozenset[int] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.p < 0:
            raise InputError("node count must be non-negative")
        if len(self.modalities) != self.p:
            raise InputError(f"expected {self.p} modality labels, got {len(self.modalities)}")
        if any(not isinstance(m, str) or not m for m in self.modalities):
            raise InputError("modality labels must be non-empty strings")
        if self.nodes is None:
            object.__setattr__(self, "nodes", frozenset(range(self.p)))
        for u, v in self.edges:
            if not (0 <= u < v < self.p):
                raise InputError(f"edge ({u}, {v}) is not canonical or out of range for p={self.p}")
            if u not in self.nodes or v not in self.nodes:
                raise InputError(f"edge ({u}, {v}) has an endpoint outside the node set")

    @classmethod
    def from_edges(
        cls,
        p: int,
        edges: Iterable[Sequence[int]],
        modalities: Sequence[str] | None = None,
    ) -> "LabeledGraph":
        """Build a graph from 0-based pairs in any orientation.

        Duplicate and reversed pairs collapse to one canonical edge. Without
        ``modalities`` every node is tagged ``"A"``.
        """
        if modalities is None:
            modalities = ["A"] * p
        canon = set()
        for e in edges:
            u, v = e[0], e[1]
            if not (0 <= int(u) < p and 0 <= int(v) < p):
                raise InputError(f"edge ({u}, {v}) out of range for p={p}")
            canon.add(canonical_edge(u, v))
        return cls(p=p, modalities=tuple(modalities), edges=frozenset(canon))

    @classmethod
    def from_adjacency(cls, adj: np.ndarray, modalities: Sequence[str] | None = None) -> "LabeledGraph":
        adj = np.asarray(adj)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise InputError("adjacency must be a square matrix")
        iu, ju = np.nonzero(np.triu(adj != 0, k=1))
        return cls.from_edges(adj.shape[0], zip(iu.tolist(), ju.tolist()), modalities)

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def sorted_nodes(self) -> list[int]:
        return sorted(self.nodes)

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 matrix over the full id space."""
        a = np.zeros((self.p, self.p), dtype=np.int8)
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1
        return a

    def neighbors(self) -> dict[int, list[int]]:
        nbrs: dict[int, list[int]] = {n: [] for n in self.nodes}
        for u, v in self.sorted_edges():
            nbrs[u].append(v)
            nbrs[v].append(u)
        return nbrs

    def with_edges(self, edges: Iterable[Edge]) -> "LabeledGraph":
        """Same nodes and labels, different edge set."""
        return LabeledGraph(self.p, self.modalities, frozenset(canonical_edge(*e) for e in edges), self.nodes)

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n + 1, "modality": self.modalities[n]} for n in self.sorted_nodes()],
            "edges": [[u + 1, v + 1] for u, v in self.sorted_edges()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


@dataclass(frozen=True)
class ModulePartition:
    """Connected components of a graph, ordered by their smallest member."""

    modules: tuple[frozenset[int], ...]
    node_to_module: Mapping[int, int]

    @classmethod
    def from_modules(cls, modules: Iterable[Iterable[int]]) -> "ModulePartition":
        mods = sorted((frozenset(m) for m in modules if m), key=min)
        lookup = {}
        for idx, mod in enumerate(mods):
            for n in mod:
                if n in lookup:
                    raise InputError(f"node {n} appears in two modules")
                lookup[n] = idx
        return cls(tuple(mods), lookup)

    def __len__(self) -> int:
        return len(self.modules)

    @property
    def nodes(self) -> frozenset[int]:
        return frozenset(self.node_to_module)

    def module_of(self, node: int) -> int:
        return self.node_to_module[node]

    def to_list(self, one_based: bool = True) -> list[list[int]]:
        off = 1 if one_based else 0
        return [sorted(n + off for n in mod) for mod in self.modules]


def connected_components(g: LabeledGraph) -> ModulePartition:
    """Partition ``g.nodes`` into maximal connected sets.

    Union-find with path halving; the result is independent of edge order
    because modules are sorted by smallest member afterwards.
    """
    parent = {n: n for n in g.nodes}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in g.edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            if ru < rv:
                parent[rv] = ru
            else:
                parent[ru] = rv

    groups: dict[int, set[int]] = {}
    for n in g.nodes:
        groups.setdefault(find(n), set()).add(n)
    return ModulePartition.from_modules(groups.values())


def induced_subgraph(g: LabeledGraph, nodes: Iterable[int]) -> LabeledGraph:
    """Subgraph on ``nodes`` keeping every edge with both endpoints inside."""
    keep = frozenset(int(n) for n in nodes)
    bad = [n for n in keep if n not in g.nodes]
    if bad:
        raise InputError(f"node ids {sorted(bad)} are not in the graph")
    edges = frozenset(e for e in g.edges if e[0] in keep and e[1] in keep)
    return LabeledGraph(g.p, g.modalities, edges, keep)


def edge_difference(a: LabeledGraph, b: LabeledGraph) -> frozenset[Edge]:
    """Edges of ``a`` that are missing from ``b``."""
    if a.p != b.p:
        raise InputError(f"graphs live on different id spaces (p={a.p} vs p={b.p})")
    return a.edges - b.edges


def check_same_space(a: LabeledGraph, b: LabeledGraph) -> None:
    if a.p != b.p or a.nodes != b.nodes:
        raise InputError(f"graphs do not share a node space (p={a.p} vs p={b.p})")
    if a.modalities != b.modalities:
        raise InputError("graphs disagree on node modality labels")


# --------------------------------------------------------------------------
# I/O
# --------------------------------------------------------------------------


def graph_from_dict(doc: Mapping) -> LabeledGraph:
    """Parse the JSON graph document (1-based ids)."""
    try:
        raw_nodes = doc["nodes"]
        raw_edges = doc.get("edges", [])
    except (KeyError, AttributeError, TypeError) as exc:
        raise InputError("graph document needs a 'nodes' list") from exc

    labels: dict[int, str] = {}
    for item in raw_nodes:
        if isinstance(item, Mapping):
            nid, mod = item.get("id"), item.get("modality", "A")
        else:
            nid, mod = item, "A"
        if not isinstance(nid, int) or nid < 1:
            raise InputError(f"node id {nid!r} must be a positive integer")
        if nid in labels:
            raise InputError(f"duplicate node id {nid}")
        labels[nid] = str(mod)
    p = len(labels)
    if set(labels) != set(range(1, p + 1)):
        raise InputError("node ids must be exactly 1..p")

    edges = []
    warned = False
    for e in raw_edges:
        if isinstance(e, Mapping):
            u, v = e.get("u", e.get("source")), e.get("v", e.get("target"))
            extra = set(e) - {"u", "v", "source", "target"}
        else:
            if len(e) < 2:
                raise InputError(f"edge {e!r} needs two endpoints")
            u, v = e[0], e[1]
            extra = len(e) > 2
        if extra and not warned:
            logger.warning("edge weights/attributes are ignored; graphs are treated as unweighted")
            warned = True
        if u not in labels or v not in labels:
            raise InputError(f"edge ({u}, {v}) refers to an unknown node")
        edges.append((u - 1, v - 1))
    return LabeledGraph.from_edges(p, edges, [labels[i] for i in range(1, p + 1)])


def read_graph_json(path: str | os.PathLike) -> LabeledGraph:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON ({exc})") from exc
    return graph_from_dict(doc)


def write_graph_json(g: LabeledGraph, path: str | os.PathLike) -> None:
    Path(path).write_text(g.to_json())


def read_modality_map(path: str | os.PathLike) -> dict[int, str]:
    """``{node id: modality}`` from a JSON object or ``id modality`` lines (1-based)."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    labels: dict[int, str] = {}
    try:
        if isinstance(doc, dict):
            labels = {int(k): str(val) for k, val in doc.items()}
        elif isinstance(doc, list):
            labels = {i + 1: str(val) for i, val in enumerate(doc)}
        else:
            for line in text.splitlines():
                parts = line.split("#", 1)[0].split()
                if len(parts) >= 2:
                    labels[int(parts[0])] = parts[1]
    except ValueError as exc:
        raise InputError(f"{path}: node ids in a modality map must be integers") from exc
    if any(k < 1 for k in labels):
        raise InputError(f"{path}: node ids are 1-based")
    return labels


def read_edge_list(path: str | os.PathLike, modality_path: str | os.PathLike | None = None,
                   p: int | None = None) -> LabeledGraph:
    """Read ``u v`` lines (1-based, ``#`` comments) plus an optional sidecar.

    The sidecar is either a JSON object ``{"1": "A", ...}`` or a text file of
    ``id modality`` lines. The node count is the largest id seen in either
    file unless ``p`` is given.
    """
    pairs = []
    warned = False
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) < 2:
            raise InputError(f"{path}:{lineno}: expected 'u v'")
        if len(parts) > 2 and not warned:
            logger.warning("edge weights/attributes are ignored; graphs are treated as unweighted")
            warned = True
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: node ids must be integers") from exc
        if u < 1 or v < 1:
            raise InputError(f"{path}:{lineno}: node ids are 1-based")
        pairs.append((u, v))

    labels = read_modality_map(modality_path) if modality_path is not None else {}

    max_id = max([max(e) for e in pairs] + list(labels) + [0])
    if p is None:
        p = max_id
    elif max_id > p:
        raise InputError(f"node id {max_id} exceeds p={p}")
    mods = [labels.get(i, "A") for i in range(1, p + 1)]
    return LabeledGraph.from_edges(p, [(u - 1, v - 1) for u, v in pairs], mods)


def read_graph(path: str | os.PathLike, modality_path: str | os.PathLike | None = None) -> LabeledGraph:
    """Dispatch on extension: ``.json`` documents or plain edge lists."""
    if str(path).endswith(".json"):
        return read_graph_json(path)
    return read_edge_list(path, modality_path)
