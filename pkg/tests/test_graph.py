import json
import logging
from collections import deque

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import graphs, one_based, zero_based
from modsplit.errors import InputError
from modsplit.graph import (
    LabeledGraph,
    ModulePartition,
    canonical_edge,
    check_same_space,
    connected_components,
    edge_difference,
    graph_from_dict,
    induced_subgraph,
    read_edge_list,
    read_graph,
    read_graph_json,
    read_modality_map,
    write_graph_json,
)


def bfs_reach(g, src):
    nbrs = {n: set() for n in g.nodes}
    for u, v in g.edges:
        nbrs[u].add(v)
        nbrs[v].add(u)
    seen, queue = {src}, deque([src])
    while queue:
        x = queue.popleft()
        for y in nbrs[x] - seen:
            seen.add(y)
            queue.append(y)
    return seen


# -- construction -----------------------------------------------------------


def test_canonical_edge_orders_and_rejects_loops():
    assert canonical_edge(5, 2) == (2, 5)
    assert canonical_edge(2, 5) == (2, 5)
    with pytest.raises(InputError):
        canonical_edge(3, 3)


def test_from_edges_collapses_duplicates_and_reversals():
    g = LabeledGraph.from_edges(4, [(0, 1), (1, 0), (2, 3), (0, 1)])
    assert g.sorted_edges() == [(0, 1), (2, 3)]
    assert g.modalities == ("A",) * 4


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(p=3, edges=[(0, 3)]),
        dict(p=3, edges=[(1, 1)]),
        dict(p=3, edges=[(0, 1)], modalities=["A", "B"]),
        dict(p=2, edges=[], modalities=["A", ""]),
    ],
)
def test_invalid_graphs_are_rejected(kwargs):
    with pytest.raises(InputError):
        LabeledGraph.from_edges(**kwargs)


def test_non_canonical_edge_in_constructor():
    with pytest.raises(InputError):
        LabeledGraph(3, ("A",) * 3, frozenset({(2, 1)}))


def test_adjacency_round_trip():
    g = LabeledGraph.from_edges(5, [(0, 4), (1, 2), (2, 3)])
    a = g.adjacency()
    assert np.array_equal(a, a.T)
    assert LabeledGraph.from_adjacency(a) == g


# -- connected components ---------------------------------------------------


def test_components_of_three_way_example(three_way):
    healthy, patient = three_way
    assert connected_components(healthy).to_list() == [[1, 2, 3, 4, 5, 6], [7, 8]]
    assert connected_components(patient).to_list() == [[1, 2, 3, 5], [4], [6, 7, 8]]


def test_components_edgeless_and_path():
    assert connected_components(LabeledGraph.from_edges(4, [])).to_list(one_based=False) == [[0], [1], [2], [3]]
    assert connected_components(LabeledGraph.from_edges(3, [(0, 1), (1, 2)])).to_list(False) == [[0, 1, 2]]
    assert len(connected_components(LabeledGraph.from_edges(0, []))) == 0


def test_components_order_by_smallest_member():
    g = LabeledGraph.from_edges(6, [(4, 5), (0, 3), (1, 2)])
    assert connected_components(g).to_list(False) == [[0, 3], [1, 2], [4, 5]]


@settings(max_examples=300, deadline=None)
@given(graphs(max_p=20))
def test_partition_and_path_property(g):
    part = connected_components(g)
    seen = set()
    for mod in part.modules:
        assert not (mod & seen)
        seen |= mod
    assert seen == set(range(g.p))
    for u, v in g.edges:
        assert part.module_of(u) == part.module_of(v)
    for u in range(g.p):
        reach = bfs_reach(g, u)
        for v in range(g.p):
            assert (part.module_of(u) == part.module_of(v)) == (v in reach)


@settings(max_examples=200, deadline=None)
@given(graphs(max_p=20))
def test_components_agree_with_networkx(g):
    ng = nx.Graph()
    ng.add_nodes_from(range(g.p))
    ng.add_edges_from(g.edges)
    ours = sorted(sorted(m) for m in connected_components(g).modules)
    theirs = sorted(sorted(c) for c in nx.connected_components(ng))
    assert ours == theirs


@settings(max_examples=100, deadline=None)
@given(graphs(max_p=12), st.randoms(use_true_random=False))
def test_components_do_not_depend_on_edge_order(g, rnd):
    edges = list(g.edges)
    rnd.shuffle(edges)
    shuffled = LabeledGraph.from_edges(g.p, edges, g.modalities)
    assert connected_components(shuffled) == connected_components(g)


def test_partition_rejects_overlap():
    with pytest.raises(InputError):
        ModulePartition.from_modules([{0, 1}, {1, 2}])


# -- induced subgraphs and edge differences -----------------------------------


def test_induced_subgraph_three_way_example(three_way):
    healthy, patient = three_way
    n = {0, 1, 2, 3, 4}
    h1, p1 = induced_subgraph(healthy, n), induced_subgraph(patient, n)
    assert one_based(h1.edges) == [(1, 2), (2, 3), (2, 5), (4, 5)]
    assert h1.nodes == frozenset(n)
    assert one_based(edge_difference(h1, p1)) == [(2, 5), (4, 5)]


def test_edge_difference_indirect_pair_is_empty(three_way):
    healthy, patient = three_way
    n = {3, 5, 6, 7}  # patient modules {4} and {6,7,8}
    assert edge_difference(induced_subgraph(healthy, n), induced_subgraph(patient, n)) == frozenset()


def test_induced_subgraph_trivial_cases():
    g = LabeledGraph.from_edges(4, [(0, 1), (2, 3)])
    assert induced_subgraph(g, range(4)) == g
    empty = induced_subgraph(g, [])
    assert empty.edges == frozenset() and empty.nodes == frozenset()
    with pytest.raises(InputError):
        induced_subgraph(g, [4])


@settings(max_examples=200, deadline=None)
@given(graphs(max_p=12), st.data())
def test_induction_idempotent(g, data):
    nodes = data.draw(st.sets(st.integers(0, max(g.p - 1, 0)), max_size=g.p)) if g.p else set()
    once = induced_subgraph(g, nodes)
    assert induced_subgraph(once, nodes) == once
    assert all(u in nodes and v in nodes for u, v in once.edges)
    assert once.edges == {e for e in g.edges if e[0] in nodes and e[1] in nodes}


@settings(max_examples=200, deadline=None)
@given(graphs(max_p=10, min_p=1), st.data())
def test_edge_difference_identities(a, data):
    mask = data.draw(st.lists(st.booleans(), min_size=a.p * a.p, max_size=a.p * a.p))
    b = LabeledGraph.from_edges(a.p, [(u, v) for u in range(a.p) for v in range(u + 1, a.p) if mask[u * a.p + v]])
    diff = edge_difference(a, b)
    assert diff | (a.edges & b.edges) == a.edges
    assert not (diff & b.edges)
    assert edge_difference(a, a) == frozenset()


def test_edge_difference_needs_same_space():
    with pytest.raises(InputError):
        edge_difference(LabeledGraph.from_edges(3, []), LabeledGraph.from_edges(4, []))


def test_check_same_space():
    a = LabeledGraph.from_edges(3, [], ["A", "B", "B"])
    check_same_space(a, a.with_edges([(0, 1)]))
    with pytest.raises(InputError):
        check_same_space(a, LabeledGraph.from_edges(3, [], ["A", "A", "B"]))
    with pytest.raises(InputError):
        check_same_space(a, LabeledGraph.from_edges(4, []))


# -- I/O ----------------------------------------------------------------------


def test_json_round_trip_is_byte_stable(tmp_path, four_way):
    g = four_way[0]
    path = tmp_path / "g.json"
    write_graph_json(g, path)
    first = path.read_bytes()
    again = read_graph_json(path)
    assert again == g
    write_graph_json(again, path)
    assert path.read_bytes() == first
    doc = json.loads(first)
    assert doc["nodes"][0] == {"id": 1, "modality": "A"}
    assert doc["edges"][0] == [1, 2]


def test_json_uses_one_based_ids():
    g = graph_from_dict({"nodes": [{"id": 1, "modality": "A"}, {"id": 2, "modality": "B"}], "edges": [[2, 1]]})
    assert g.sorted_edges() == [(0, 1)]
    assert g.modalities == ("A", "B")


@pytest.mark.parametrize(
    "doc",
    [
        {"edges": []},
        {"nodes": [{"id": 0}]},
        {"nodes": [{"id": 1}, {"id": 1}]},
        {"nodes": [{"id": 1}, {"id": 3}]},
        {"nodes": [{"id": 1}, {"id": 2}], "edges": [[1, 3]]},
        {"nodes": [{"id": 1}, {"id": 2}], "edges": [[1]]},
        {"nodes": [{"id": 1}, {"id": 2}], "edges": [[1, 1]]},
    ],
)
def test_bad_graph_documents(doc):
    with pytest.raises(InputError):
        graph_from_dict(doc)


def test_weights_are_ignored_with_warning(caplog):
    doc = {"nodes": [{"id": 1}, {"id": 2}, {"id": 3}], "edges": [[1, 2, 0.7], [2, 3, 0.1]]}
    with caplog.at_level(logging.WARNING):
        g = graph_from_dict(doc)
    assert g.sorted_edges() == [(0, 1), (1, 2)]
    assert sum("ignored" in r.message for r in caplog.records) == 1


def test_edge_list_with_modality_sidecar(tmp_path, caplog):
    (tmp_path / "g.txt").write_text("# edges\n1 2\n2 5 0.4\n\n4,5\n")
    (tmp_path / "mods.txt").write_text("1 A\n2 A\n3 A\n4 A\n5 B\n6 B\n")
    with caplog.at_level(logging.WARNING):
        g = read_graph(tmp_path / "g.txt", tmp_path / "mods.txt")
    assert g.p == 6
    assert one_based(g.edges) == [(1, 2), (2, 5), (4, 5)]
    assert g.modalities == ("A", "A", "A", "A", "B", "B")
    assert any("ignored" in r.message for r in caplog.records)


def test_edge_list_json_modality_map_and_explicit_p(tmp_path):
    (tmp_path / "g.txt").write_text("1 3\n")
    (tmp_path / "m.json").write_text('{"1": "X", "3": "Y"}')
    g = read_edge_list(tmp_path / "g.txt", tmp_path / "m.json", p=4)
    assert g.modalities == ("X", "A", "Y", "A")
    with pytest.raises(InputError):
        read_edge_list(tmp_path / "g.txt", p=2)


def test_modality_map_list_form(tmp_path):
    (tmp_path / "m.json").write_text('["A", "B"]')
    assert read_modality_map(tmp_path / "m.json") == {1: "A", 2: "B"}


@pytest.mark.parametrize("text", ["1\n", "a b\n", "0 1\n"])
def test_bad_edge_lists(tmp_path, text):
    (tmp_path / "g.txt").write_text(text)
    with pytest.raises(InputError):
        read_edge_list(tmp_path / "g.txt")


def test_zero_based_helper_matches_examples(four_way):
    healthy, _ = four_way
    assert (1, 4) in healthy.edges
    assert set(zero_based([(2, 5)])) <= healthy.edges
