import numpy as np
import pytest

from stgraph.graph import Detection, SymbolicGraph, build_connectivity, default_registry


def toy_detections(rng, actor_dim=3, object_dim=2, frames=2):
    """One actor and two objects per frame, with boxes."""
    out = []
    for _ in range(frames):
        frame = [Detection("actor", rng.normal(size=actor_dim), (0.5, 0.5, 0.2, 0.4))]
        for k in range(2):
            frame.append(Detection("object", rng.normal(size=object_dim), (0.2 + 0.4 * k, 0.6, 0.1, 0.1)))
        out.append(frame)
    return out


@pytest.fixture
def toy_registry():
    return default_registry(actor_dim=3, object_dim=2, edge_dim=4)


@pytest.fixture
def toy_graph(toy_registry):
    return build_connectivity(toy_detections(np.random.default_rng(7)), toy_registry, "full5")


@pytest.fixture
def toy_symbolic():
    rng = np.random.default_rng(11)
    adj = np.array([[0, 2, 1], [2, 0, 0], [1, 0, 0]], dtype=float)
    return SymbolicGraph(("walk", "hold", "cup"), rng.normal(size=(3, 2)), adj, {"actor": (0, 1), "object": (2,)})
