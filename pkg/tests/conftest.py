import numpy as np
import pytest
from hypothesis import strategies as st

from modsplit.examples import load_example
from modsplit.graph import LabeledGraph


def one_based(edges):
    """Turn 0-based edge tuples into sorted 1-based ones for readable asserts."""
    return sorted((u + 1, v + 1) for u, v in edges)


def zero_based(edges):
    return [(u - 1, v - 1) for u, v in edges]


@st.composite
def graphs(draw, max_p=20, min_p=0):
    p = draw(st.integers(min_p, max_p))
    pairs = [(u, v) for u in range(p) for v in range(u + 1, p)]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    mods = draw(st.lists(st.sampled_from("ABC"), min_size=p, max_size=p))
    return LabeledGraph.from_edges(p, [e for e, keep in zip(pairs, mask) if keep], mods)


@st.composite
def graph_pairs(draw, max_p=15):
    """A healthy graph and a patient graph made by deleting and adding edges."""
    h = draw(graphs(max_p=max_p, min_p=2))
    p = h.p
    pairs = [(u, v) for u in range(p) for v in range(u + 1, p)]
    drop = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    add = draw(st.lists(st.floats(0, 1), min_size=len(pairs), max_size=len(pairs)))
    edges = set()
    for e, d, a in zip(pairs, drop, add):
        if e in h.edges and not d:
            edges.add(e)
        elif e not in h.edges and a < 0.1:
            edges.add(e)
    return h, h.with_edges(edges)


def random_pair(rng: np.random.Generator, p: int, density: float, drop: float, add: float):
    iu = np.triu_indices(p, 1)
    present = rng.random(iu[0].size) < density
    h = LabeledGraph.from_edges(p, [(int(a), int(b)) for a, b, k in zip(*iu, present) if k])
    keep = [e for e in h.sorted_edges() if rng.random() >= drop]
    extra = [(int(a), int(b)) for a, b, k in zip(*iu, present) if not k and rng.random() < add]
    return h, h.with_edges(keep + extra)


@pytest.fixture
def three_way():
    return load_example("three_way_split")


@pytest.fixture
def four_way():
    return load_example("four_way_split")
