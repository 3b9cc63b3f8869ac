import numpy as np
import pytest

from stgraph import autodiff as ad
from stgraph.batch import GraphBatch
from stgraph.graph import Edge, Node, VisualSTGraph, default_registry
from stgraph.verify import randomize
from stgraph.visual import VisualConfig, init_visual_params, visual_forward, visual_forward_naive


def leaves(arrays):
    return {k: ad.constant(v) for k, v in arrays.items()}


def same_width_registry(d=3):
    return default_registry(actor_dim=d, object_dim=d, edge_dim=d)


def star(senders_attr, reg, edge_attr=None):
    """Object senders into one actor, all in frame 0."""
    nodes = [Node(0, "actor", 0, np.zeros(reg.node_dims["actor"]))]
    edges = []
    for k, a in enumerate(senders_attr, start=1):
        nodes.append(Node(k, "object", 0, np.asarray(a, dtype=float)))
        ea = np.zeros(reg.edge_dims["obj-act-s"]) if edge_attr is None else edge_attr[k - 1]
        edges.append(Edge(k, 0, "obj-act-s", ea))
    return VisualSTGraph(1, tuple(nodes), tuple(edges))


def run(graph, reg, cfg, arrays):
    batch = GraphBatch.from_graphs([graph], reg)
    return batch, visual_forward(batch, leaves(arrays), cfg)


def test_single_sender_gets_full_weight():
    reg = same_width_registry()
    cfg = VisualConfig(num_layers=1, hidden_dim=3)
    arrays = randomize(init_visual_params(reg, cfg, 0), np.random.default_rng(0))
    _, state = run(star([[1.0, 2.0, 3.0]], reg), reg, cfg, arrays)
    assert state.attention[0].tolist() == [1.0]


def test_identical_senders_split_evenly():
    reg = same_width_registry()
    cfg = VisualConfig(num_layers=1, hidden_dim=3)
    arrays = randomize(init_visual_params(reg, cfg, 0), np.random.default_rng(0))
    _, state = run(star([[1.0, 2.0, 3.0]] * 2, reg), reg, cfg, arrays)
    assert np.allclose(state.attention[0], [0.5, 0.5], atol=1e-15)


def test_fresh_init_gives_uniform_attention():
    reg = same_width_registry()
    cfg = VisualConfig(num_layers=1, hidden_dim=3)
    rng = np.random.default_rng(1)
    _, state = run(star(rng.normal(size=(4, 3)), reg), reg, cfg, init_visual_params(reg, cfg, 0))
    assert np.allclose(state.attention[0], 0.25, atol=1e-15)


def test_disabled_messages_leave_receiver_projection():
    reg = same_width_registry()
    cfg = VisualConfig(num_layers=1, hidden_dim=3, lambda_v=0, lambda_e=0)
    rng = np.random.default_rng(2)
    arrays = randomize(init_visual_params(reg, cfg, 0), rng)
    g = star(rng.normal(size=(2, 3)), reg, rng.normal(size=(2, 3)))
    batch, state = run(g, reg, cfg, arrays)
    assert not state.edge_matrix.data.any()
    want = np.array([arrays[f"visual.0.W_r.{n.type}"] @ n.attr for n in g.nodes])
    assert np.array_equal(state.node_matrix.data, want)


def test_identity_sender_projection_passes_the_sender_through():
    reg = same_width_registry()
    cfg = VisualConfig(num_layers=1, hidden_dim=3, lambda_e=0)
    arrays = dict(randomize(init_visual_params(reg, cfg, 0), np.random.default_rng(3)).items())
    arrays["visual.0.W_s.object"] = np.eye(3)
    h_j = np.array([0.3, -1.0, 2.0])
    _, state = run(star([h_j], reg), reg, cfg, arrays)
    assert np.array_equal(state.edge_matrix.data[0], h_j)


def test_zero_layers_return_raw_attributes(toy_graph, toy_registry):
    cfg = VisualConfig(num_layers=0)
    batch, state = run(toy_graph, toy_registry, cfg, {})
    assert state.node_matrix is None and state.attention == []
    assert np.array_equal(state.nodes["object"].data, batch.node_attr["object"])
    assert np.array_equal(state.edges["obj-act-s"].data, batch.edge_attr["obj-act-s"])


def test_zero_parameters_give_zero_features(toy_graph, toy_registry):
    cfg = VisualConfig(num_layers=2, hidden_dim=4)
    arrays = {k: np.zeros_like(v) for k, v in init_visual_params(toy_registry, cfg, 0).items()}
    _, state = run(toy_graph, toy_registry, cfg, arrays)
    assert not state.node_matrix.data.any() and not state.edge_matrix.data.any()


def test_edgeless_graph_projects_each_node(toy_registry):
    cfg = VisualConfig(num_layers=1, hidden_dim=4)
    rng = np.random.default_rng(4)
    arrays = randomize(init_visual_params(toy_registry, cfg, 0), rng)
    g = VisualSTGraph(1, (Node(0, "actor", 0, rng.normal(size=3)), Node(1, "object", 0, rng.normal(size=2))))
    _, state = run(g, toy_registry, cfg, arrays)
    for n in g.nodes:
        assert np.array_equal(state.node_matrix.data[n.id], arrays[f"visual.0.W_r.{n.type}"] @ n.attr)
    assert state.edge_matrix.shape == (0, 4)


@pytest.mark.parametrize("attention", [True, False])
def test_toy_graph_matches_loop_oracle(toy_graph, toy_registry, attention):
    cfg = VisualConfig(num_layers=2, hidden_dim=5, attention=attention)
    arrays = randomize(init_visual_params(toy_registry, cfg, 0), np.random.default_rng(5))
    batch, state = run(toy_graph, toy_registry, cfg, arrays)
    h, he, attn = visual_forward_naive(batch, dict(arrays.items()), cfg)
    assert np.max(np.abs(state.node_matrix.data - np.array(h))) <= 1e-10
    assert np.max(np.abs(state.edge_matrix.data - np.array(he))) <= 1e-10
    for got, want in zip(state.attention, attn):
        assert np.max(np.abs(got - want)) <= 1e-10


def test_attention_vector_has_three_blocks(toy_registry):
    cfg = VisualConfig(num_layers=1, hidden_dim=6)
    arrays = init_visual_params(toy_registry, cfg, 0)
    assert arrays["visual.0.v_a.obj-act-s"].shape == (18,)
    assert arrays["visual.0.W_r.actor"].shape == (6, 3)
    assert arrays["visual.0.W_e.act-act-t"].shape == (6, 4)


def test_layer_two_widths_are_hidden(toy_registry):
    arrays = init_visual_params(toy_registry, VisualConfig(num_layers=2, hidden_dim=6), 0)
    assert arrays["visual.1.W_r.object"].shape == (6, 6)
    assert arrays["visual.1.W_e.obj-obj-t"].shape == (6, 6)


def test_flags_must_be_binary():
    with pytest.raises(ValueError):
        VisualConfig(beta=2)
