from collections import Counter

import numpy as np
import pytest

from stgraph.graph import (
    Detection, Edge, GraphError, Node, SymbolicGraph, VisualSTGraph, build_connectivity,
    build_cooccurrence_symbolic_graph, cooccurrence_counts, default_registry, normalize_adjacency, validate,
)

from conftest import toy_detections


def test_empty_graph_is_valid(toy_registry):
    assert validate(VisualSTGraph(0), toy_registry) == []


def test_spatial_edge_across_frames_is_rejected(toy_registry):
    nodes = (Node(0, "object", 0, np.zeros(2)), Node(1, "actor", 1, np.zeros(3)))
    g = VisualSTGraph(2, nodes, (Edge(0, 1, "obj-act-s", np.zeros(4)),))
    problems = validate(g, toy_registry)
    assert [p.kind for p in problems] == ["spatial-span"]
    assert "temporal span on spatial edge" in str(problems[0])


def test_edge_endpoint_type_mismatch_is_rejected(toy_registry):
    nodes = (Node(0, "actor", 0, np.zeros(3)), Node(1, "actor", 0, np.zeros(3)))
    g = VisualSTGraph(1, nodes, (Edge(0, 1, "obj-act-s", np.zeros(4)),))
    problems = validate(g, toy_registry)
    assert [p.kind for p in problems] == ["type-mismatch"]
    assert problems[0].edge_index == 0


@pytest.mark.parametrize("mutate,kind", [
    (lambda n, e: (n + (Node(0, "actor", 0, np.zeros(3)),), e), "duplicate-node"),
    (lambda n, e: ((Node(0, "actor", 5, np.zeros(3)),) + n[1:], e), "frame-range"),
    (lambda n, e: ((Node(0, "actor", 0, np.zeros(4)),) + n[1:], e), "node-dim"),
    (lambda n, e: ((Node(0, "actor", 0, np.array([np.nan, 0, 0])),) + n[1:], e), "non-finite"),
    (lambda n, e: (n, (Edge(0, 9, "act-obj-s", np.zeros(4)),)), "dangling-edge"),
    (lambda n, e: (n, (Edge(0, 1, "nope", np.zeros(4)),)), "unknown-edge-type"),
    (lambda n, e: (n, (Edge(0, 1, "act-obj-s", np.zeros(3)),)), "edge-dim"),
    (lambda n, e: (n, (Edge(0, 1, "act-act-t", np.zeros(4)),)), "type-mismatch"),
])
def test_each_invariant_has_a_violation(toy_registry, mutate, kind):
    nodes = (Node(0, "actor", 0, np.zeros(3)), Node(1, "object", 0, np.zeros(2)))
    n, e = mutate(nodes, ())
    kinds = [p.kind for p in validate(VisualSTGraph(1, n, e), toy_registry)]
    assert kind in kinds


def test_temporal_edge_must_span_one_step(toy_registry):
    nodes = (Node(0, "actor", 0, np.zeros(3)), Node(1, "actor", 2, np.zeros(3)))
    g = VisualSTGraph(3, nodes, (Edge(0, 1, "act-act-t", np.zeros(4)),))
    assert [p.kind for p in validate(g, toy_registry)] == ["temporal-span"]


def test_toy_connectivity_counts(toy_graph, toy_registry):
    # per frame: 2 obj->act, 2 act->obj, 2 obj<->obj; across the step: 1 actor track, 2 object tracks
    counts = Counter(e.type for e in toy_graph.edges)
    assert counts == {"obj-act-s": 4, "act-obj-s": 4, "obj-obj-s": 4, "act-act-t": 1, "obj-obj-t": 2}
    assert len(toy_graph.edges) == 15
    assert validate(toy_graph, toy_registry) == []


def test_single_node_has_no_edges(toy_registry):
    g = build_connectivity([[Detection("actor", np.zeros(3))]], toy_registry)
    assert len(g.nodes) == 1 and g.edges == ()


def test_charades_policy_counts():
    reg = default_registry(4, 4, 4, ("obj-act-s", "act-obj-s", "act-act-t"))
    rng = np.random.default_rng(0)
    frame = [Detection("actor", rng.normal(size=4)) for _ in range(2)]
    frame += [Detection("object", rng.normal(size=4)) for _ in range(10)]
    counts = Counter(e.type for e in build_connectivity([frame], reg, "charades").edges)
    assert counts == {"obj-act-s": 20, "act-obj-s": 20}


def test_full_temporal_pairing_links_all_pairs(toy_registry):
    from stgraph.graph import ConnectivityPolicy
    policy = ConnectivityPolicy(("obj-obj-t",), temporal="full")
    g = build_connectivity(toy_detections(np.random.default_rng(0)), toy_registry, policy)
    assert len(g.edges) == 4


def test_edges_sorted_and_boxes_encoded(toy_graph, toy_registry):
    reg = toy_registry
    keys = [(e.receiver, reg.edge_index(e.type), e.sender) for e in toy_graph.edges]
    assert keys == sorted(keys)
    e = next(e for e in toy_graph.edges if e.type == "obj-act-s")
    # object box (0.2, 0.6, 0.1, 0.1) relative to actor box (0.5, 0.5, 0.2, 0.4)
    assert np.allclose(e.attr, [(0.2 - 0.5) / 0.2, (0.6 - 0.5) / 0.4, np.log(0.5), np.log(0.25)])


def test_unknown_detection_type(toy_registry):
    with pytest.raises(GraphError, match="unknown node type"):
        build_connectivity([[Detection("dog", np.zeros(3))]], toy_registry)


def test_registry_rejects_bad_declarations():
    from stgraph.graph import EdgeType, TypeRegistry
    with pytest.raises(GraphError, match="undeclared node type"):
        TypeRegistry(("actor",), (EdgeType("x", "actor", "object", False),), {"actor": 1}, {"x": 1})
    with pytest.raises(GraphError, match="duplicate"):
        TypeRegistry(("a", "a"), (), {"a": 1}, {})


def test_cooccurrence_from_label_sets():
    adj = cooccurrence_counts([{0, 1}, {0, 1, 2}, {2}], 3)
    assert np.array_equal(adj, [[0, 2, 1], [2, 0, 1], [1, 1, 0]])
    assert np.array_equal(cooccurrence_counts([{0, 1}, {0, 1}], 2, binarize=True), [[0, 1], [1, 0]])
    assert np.array_equal(cooccurrence_counts([{0, 1}, {0}], 2, frequency=True), [[0, 0.5], [0.5, 0]])
    with pytest.raises(GraphError):
        cooccurrence_counts([{5}], 3)


def test_cooccurrence_symbolic_graph():
    emb = {"cut": [1.0, 0.0], "knife": [0.0, 1.0], "eat": [1.0, 1.0]}
    sym = build_cooccurrence_symbolic_graph([{"cut", "knife"}, {"cut", "knife"}, {"eat"}], emb,
                                            bipartite={"actor": ["cut", "eat"]})
    assert sym.labels == ("cut", "eat", "knife")
    assert sym.adjacency[0, 2] == 2 and sym.adjacency[1].sum() == 0
    assert sym.bipartite == {"actor": (0, 1)}
    with pytest.raises(GraphError, match="no embedding"):
        build_cooccurrence_symbolic_graph([{"run"}], emb)


def test_symbolic_graph_validation():
    with pytest.raises(GraphError):
        SymbolicGraph(("a",), np.zeros((2, 2)), np.zeros((1, 1)))
    with pytest.raises(GraphError):
        SymbolicGraph(("a", "b"), np.zeros((2, 1)), -np.ones((2, 2)))
    with pytest.raises(GraphError):
        SymbolicGraph(("a",), np.zeros((1, 1)), np.zeros((1, 1)), {"actor": (3,)})


def test_sym_normalization_examples():
    assert np.allclose(normalize_adjacency(np.zeros((3, 3))), np.eye(3), atol=1e-15)
    a = normalize_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(a, 0.5, atol=1e-15)
    r = normalize_adjacency(np.array([[0.0, 2.0, 2.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), "row")
    assert np.allclose(r, [[0, 0.5, 0.5], [0, 1, 0], [1, 0, 0]])
    with pytest.raises(GraphError):
        normalize_adjacency(np.zeros((2, 3)))
    with pytest.raises(GraphError):
        normalize_adjacency(np.eye(2), "bogus")


def test_sym_normalization_matches_loop_oracle():
    rng = np.random.default_rng(1)
    a = rng.integers(0, 4, size=(6, 6)).astype(float)
    a = a + a.T
    got = normalize_adjacency(a)
    deg = [sum(a[i, j] + (i == j) for j in range(6)) for i in range(6)]
    for i in range(6):
        for j in range(6):
            want = (a[i, j] + (i == j)) / np.sqrt(deg[i] * deg[j])
            assert abs(got[i, j] - want) < 1e-15
    assert np.allclose(got, got.T)


def test_graph_equality_is_bitwise(toy_graph):
    nodes = list(toy_graph.nodes)
    nodes[0] = Node(0, "actor", 0, np.nextafter(nodes[0].attr, np.inf))
    assert toy_graph == VisualSTGraph(toy_graph.num_frames, toy_graph.nodes, toy_graph.edges)
    assert toy_graph != VisualSTGraph(toy_graph.num_frames, tuple(nodes), toy_graph.edges)
