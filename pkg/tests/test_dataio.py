import json

import numpy as np
import pytest

from stgraph.dataio import (
    CHECKPOINT_MAGIC, DataIOError, DatasetManifest, ParseError, SampleRecord, SchemaVersionError,
    ValidationError, load_checkpoint, load_dataset, load_graph, load_manifest, load_registry, load_symbolic,
    save_checkpoint, save_graph, save_manifest, save_registry, save_symbolic,
)
from stgraph.graph import Edge, Node, VisualSTGraph
from stgraph.model import TaskSpec
from stgraph.params import ParameterBank


def test_empty_graph_round_trip(tmp_path):
    save_graph(VisualSTGraph(0), tmp_path / "g.json")
    assert load_graph(tmp_path / "g.json") == VisualSTGraph(0)


def test_toy_graph_round_trip_is_bit_exact(tmp_path, toy_graph, toy_registry):
    save_graph(toy_graph, tmp_path / "g.json")
    back = load_graph(tmp_path / "g.json", toy_registry)
    assert back == toy_graph
    for a, b in zip(back.edges, toy_graph.edges):
        assert a.attr.tobytes() == b.attr.tobytes()
    save_graph(back, tmp_path / "again.json")
    assert (tmp_path / "g.json").read_bytes() == (tmp_path / "again.json").read_bytes()


def test_awkward_floats_survive(tmp_path, toy_registry):
    vals = np.array([0.1 + 0.2, 1e-310, -0.0])
    g = VisualSTGraph(1, (Node(0, "actor", 0, vals),))
    save_graph(g, tmp_path / "g.json")
    assert load_graph(tmp_path / "g.json").nodes[0].attr.tobytes() == vals.tobytes()


def test_truncated_file_reports_byte_offset(tmp_path, toy_graph):
    save_graph(toy_graph, tmp_path / "g.json")
    raw = (tmp_path / "g.json").read_bytes()
    (tmp_path / "bad.json").write_bytes(raw[:100])
    with pytest.raises(ParseError) as err:
        load_graph(tmp_path / "bad.json")
    assert err.value.offset is not None and 0 < err.value.offset <= 100
    assert "byte" in str(err.value)


def test_wrong_schema_version(tmp_path, toy_graph):
    from stgraph.dataio import graph_to_dict
    doc = graph_to_dict(toy_graph)
    doc["schema_version"] = 99
    (tmp_path / "g.json").write_text(json.dumps(doc))
    with pytest.raises(SchemaVersionError, match="99"):
        load_graph(tmp_path / "g.json")


def test_invalid_graph_lists_violations(tmp_path, toy_registry):
    g = VisualSTGraph(1, (Node(0, "actor", 0, np.zeros(3)), Node(1, "actor", 0, np.zeros(3))),
                      (Edge(0, 1, "obj-act-s", np.zeros(4)),))
    save_graph(g, tmp_path / "g.json")
    with pytest.raises(ValidationError) as err:
        load_graph(tmp_path / "g.json", toy_registry)
    assert err.value.violations[0].kind == "type-mismatch"


def test_registry_and_symbolic_round_trip(tmp_path, toy_registry, toy_symbolic):
    save_registry(toy_registry, tmp_path / "r.json")
    save_symbolic(toy_symbolic, tmp_path / "s.json")
    assert load_registry(tmp_path / "r.json") == toy_registry
    assert load_symbolic(tmp_path / "s.json") == toy_symbolic


def write_dataset(tmp_path, graph, registry, symbolic, labels):
    save_registry(registry, tmp_path / "registry.json")
    save_symbolic(symbolic, tmp_path / "symbolic.json")
    save_graph(graph, tmp_path / "graphs" / "g0.json")
    manifest = DatasetManifest("train", TaskSpec("node", {"actor": 3}), "registry.json", "symbolic.json",
                               [SampleRecord("graphs/g0.json", node_labels=labels)])
    save_manifest(manifest, tmp_path / "train.json")
    return tmp_path / "train.json"


def test_manifest_loads_dataset(tmp_path, toy_graph, toy_registry, toy_symbolic):
    labels = [2 if n.type == "actor" else -1 for n in toy_graph.nodes]
    path = write_dataset(tmp_path, toy_graph, toy_registry, toy_symbolic, labels)
    ds = load_dataset(path)
    assert len(ds) == 1 and ds.graphs[0] == toy_graph
    assert ds.labels[0].tolist() == labels


def test_manifest_missing_graph_file(tmp_path, toy_graph, toy_registry, toy_symbolic):
    path = write_dataset(tmp_path, toy_graph, toy_registry, toy_symbolic, [0] * len(toy_graph.nodes))
    (tmp_path / "graphs" / "g0.json").unlink()
    with pytest.raises(DataIOError, match="missing graph file"):
        load_manifest(path)


def test_manifest_label_outside_classes(tmp_path, toy_graph, toy_registry, toy_symbolic):
    path = write_dataset(tmp_path, toy_graph, toy_registry, toy_symbolic, [7] * len(toy_graph.nodes))
    with pytest.raises(DataIOError, match="outside declared classes"):
        load_dataset(path)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    bank = ParameterBank({"a.W": rng.normal(size=(3, 2)), "b": rng.normal(size=4), "s": np.float64(2.5)})
    save_checkpoint(tmp_path / "m.ckpt", bank, {"epoch": 3})
    back, meta = load_checkpoint(tmp_path / "m.ckpt")
    assert back == bank and meta == {"epoch": 3}
    assert (tmp_path / "m.ckpt").read_bytes()[:8] == CHECKPOINT_MAGIC


def test_checkpoint_corruption(tmp_path):
    bank = ParameterBank({"w": np.ones((4, 4))})
    save_checkpoint(tmp_path / "m.ckpt", bank)
    raw = (tmp_path / "m.ckpt").read_bytes()
    (tmp_path / "short.ckpt").write_bytes(raw[:-8])
    with pytest.raises(ParseError, match="truncated"):
        load_checkpoint(tmp_path / "short.ckpt")
    (tmp_path / "magic.ckpt").write_bytes(b"NOTACKPT" + raw[8:])
    with pytest.raises(ParseError, match="magic"):
        load_checkpoint(tmp_path / "magic.ckpt")
