"""Visual context module: typed, attention-weighted message passing.

One layer computes, for every edge j -> i of type e,

    gamma_ij = leaky(v_e . [W_r h_i ; W_s h_j ; beta * W_e h_ij])
    a_ij     = softmax of gamma over incoming edges of type e at i
    m_ij     = a_ij * (lambda_v * W_s h_j + lambda_e * W_e h_ij)

then sets h_i <- base_i + relu(sum_j m_ij) and h_ij <- m_ij. ``base_i`` is
W_r h_i at the first layer (node widths differ per type there) and h_i after.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .batch import GraphBatch
from .graph import TypeRegistry
from .params import fan_in_uniform


@dataclass(frozen=True)
class VisualConfig:
    num_layers: int = 4
    hidden_dim: int = 16
    beta: int = 1
    lambda_v: int = 1
    lambda_e: int = 1
    attention: bool = True
    leaky_slope: float = 0.2

    def __post_init__(self):
        for flag in ("beta", "lambda_v", "lambda_e"):
            if getattr(self, flag) not in (0, 1):
                raise ValueError(f"{flag} must be 0 or 1, got {getattr(self, flag)!r}")
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be positive")


@dataclass
class RefinedState:
    """Node features per node type and edge features per edge type.

    Rows follow ``batch.nodes_by_type[t]`` / ``batch.edges_by_type[e]``. After
    one or more layers every width is ``hidden_dim`` and the stacked matrices
    are also available.
    """

    nodes: dict[str, Tensor]
    edges: dict[str, Tensor]
    node_matrix: Tensor | None = None
    edge_matrix: Tensor | None = None
    attention: list[np.ndarray] = field(default_factory=list)


def init_visual_params(registry: TypeRegistry, cfg: VisualConfig, seed: int) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    d = cfg.hidden_dim
    for layer in range(cfg.num_layers):
        for nt in registry.node_types:
            d_in = registry.node_dims[nt] if layer == 0 else d
            for role in ("W_r", "W_s"):
                name = f"visual.{layer}.{role}.{nt}"
                out[name] = fan_in_uniform(seed, name, (d, d_in))
        for et in registry.edge_types:
            d_in = registry.edge_dims[et.name] if layer == 0 else d
            name = f"visual.{layer}.W_e.{et.name}"
            out[name] = fan_in_uniform(seed, name, (d, d_in))
            # zero attention vectors give uniform weights at the start
            out[f"visual.{layer}.v_a.{et.name}"] = np.zeros(3 * d)
    return out


def initial_state(batch: GraphBatch) -> RefinedState:
    nodes = {t: ad.constant(batch.node_attr[t]) for t in batch.registry.node_types}
    edges = {e.name: ad.constant(batch.edge_attr[e.name]) for e in batch.registry.edge_types}
    return RefinedState(nodes, edges)


def _dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    if rng is None or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return ad.mul(x, ad.constant(keep))


def _stack(parts: dict[str, Tensor], index: dict[str, np.ndarray], total: int, width: int) -> Tensor:
    out = None
    for name, t in parts.items():
        piece = ad.scatter_add(t, index[name], total)
        out = piece if out is None else ad.add(out, piece)
    return out if out is not None else ad.constant(np.zeros((total, width)))


def _node_inputs(state: RefinedState, batch: GraphBatch) -> dict[str, Tensor]:
    if state.node_matrix is None:
        return state.nodes
    return {t: ad.gather_rows(state.node_matrix, batch.nodes_by_type[t]) for t in batch.registry.node_types}


def _edge_inputs(state: RefinedState, batch: GraphBatch) -> dict[str, Tensor]:
    if state.edge_matrix is None:
        return state.edges
    return {e.name: ad.gather_rows(state.edge_matrix, batch.edges_by_type[e.name])
            for e in batch.registry.edge_types}


def attention_coefficients(
    layer: int,
    batch: GraphBatch,
    projections: tuple[Tensor, Tensor, dict[str, Tensor]],
    params: Mapping[str, Tensor],
    cfg: VisualConfig,
) -> Tensor:
    """Per-edge attention weight a_ij, shape (E,), from projected features.

    `projections` is (W_r h for all nodes, W_s h for all nodes, W_e h_ij per
    edge type), as produced inside :func:`visual_layer`.
    """
    n_edges = batch.num_edges
    seg = batch.attention_segments
    if not cfg.attention:
        counts = np.bincount(seg, minlength=batch.num_attention_segments).astype(np.float64)
        return ad.constant(1.0 / counts[seg] if n_edges else np.zeros(0))
    recv_proj, send_proj, edge_proj = projections
    gamma = None
    for et in batch.registry.edge_types:
        idx = batch.edges_by_type[et.name]
        if idx.size == 0:
            continue
        joint = ad.concat([
            ad.gather_rows(recv_proj, batch.receivers[idx]),
            ad.gather_rows(send_proj, batch.senders[idx]),
            ad.scale(edge_proj[et.name], float(cfg.beta)),
        ])
        g = ad.leaky_relu(ad.matmul(joint, params[f"visual.{layer}.v_a.{et.name}"]), cfg.leaky_slope)
        piece = ad.scatter_add(g, idx, n_edges)
        gamma = piece if gamma is None else ad.add(gamma, piece)
    if gamma is None:
        return ad.constant(np.zeros(0))
    return ad.segment_softmax(gamma, seg, batch.num_attention_segments)


def messages(batch: GraphBatch, send_proj: Tensor, edge_proj_all: Tensor, a: Tensor, cfg: VisualConfig) -> Tensor:
    """m_ij = a_ij * (lambda_v * W_s h_j + lambda_e * W_e h_ij), shape (E, d)."""
    content = ad.add(ad.scale(ad.gather_rows(send_proj, batch.senders), float(cfg.lambda_v)),
                     ad.scale(edge_proj_all, float(cfg.lambda_e)))
    return ad.scale_rows(content, a)


def layer_update(batch: GraphBatch, base: Tensor, m: Tensor) -> tuple[Tensor, Tensor]:
    """Residual node update over all incoming edges; edges take their message."""
    agg = ad.scatter_add(m, batch.receivers, batch.num_nodes)
    return ad.add(base, ad.relu(agg)), m


def visual_layer(
    layer: int,
    batch: GraphBatch,
    state: RefinedState,
    params: Mapping[str, Tensor],
    cfg: VisualConfig,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> RefinedState:
    reg = batch.registry
    d = cfg.hidden_dim
    node_in = _node_inputs(state, batch)
    edge_in = _edge_inputs(state, batch)
    recv_parts, send_parts = {}, {}
    for nt in reg.node_types:
        h = node_in[nt]
        recv_parts[nt] = _dropout(ad.matmul(h, ad.transpose(params[f"visual.{layer}.W_r.{nt}"])), dropout, rng)
        send_parts[nt] = _dropout(ad.matmul(h, ad.transpose(params[f"visual.{layer}.W_s.{nt}"])), dropout, rng)
    edge_proj = {}
    for et in reg.edge_types:
        w = params[f"visual.{layer}.W_e.{et.name}"]
        edge_proj[et.name] = _dropout(ad.matmul(edge_in[et.name], ad.transpose(w)), dropout, rng)

    recv_proj = _stack(recv_parts, batch.nodes_by_type, batch.num_nodes, d)
    send_proj = _stack(send_parts, batch.nodes_by_type, batch.num_nodes, d)
    edge_proj_all = _stack(edge_proj, batch.edges_by_type, batch.num_edges, d)

    a = attention_coefficients(layer, batch, (recv_proj, send_proj, edge_proj), params, cfg)
    m = messages(batch, send_proj, edge_proj_all, a, cfg)
    base = recv_proj if state.node_matrix is None else state.node_matrix
    h_nodes, h_edges = layer_update(batch, base, m)
    return RefinedState(
        nodes={}, edges={}, node_matrix=h_nodes, edge_matrix=h_edges,
        attention=state.attention + [a.data],
    )


def visual_forward(
    batch: GraphBatch,
    params: Mapping[str, Tensor],
    cfg: VisualConfig,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> RefinedState:
    """Run ``cfg.num_layers`` rounds; zero rounds returns the raw attributes."""
    state = initial_state(batch)
    for layer in range(cfg.num_layers):
        state = visual_layer(layer, batch, state, params, cfg, dropout, rng)
    if state.node_matrix is not None:
        state.nodes = {t: ad.gather_rows(state.node_matrix, batch.nodes_by_type[t]) for t in batch.registry.node_types}
        state.edges = {e.name: ad.gather_rows(state.edge_matrix, batch.edges_by_type[e.name])
                       for e in batch.registry.edge_types}
    return state


def visual_forward_naive(
    batch: GraphBatch,
    params: Mapping[str, np.ndarray],
    cfg: VisualConfig,
) -> tuple[np.ndarray | list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Reference implementation with explicit per-node / per-edge loops.

    Returns (node features, edge features, attention per layer); features are
    lists of 1-D arrays indexed by batch node / edge position.
    """
    reg = batch.registry
    d = cfg.hidden_dim
    ntypes = reg.node_types
    etypes = [e.name for e in reg.edge_types]
    h = [None] * batch.num_nodes
    for t in ntypes:
        for row, i in enumerate(batch.nodes_by_type[t]):
            h[i] = np.array(batch.node_attr[t][row])
    he = [None] * batch.num_edges
    for e in etypes:
        for row, k in enumerate(batch.edges_by_type[e]):
            he[k] = np.array(batch.edge_attr[e][row])

    attn_history = []
    for layer in range(cfg.num_layers):
        recv, send, eproj = [], [], []
        for i in range(batch.num_nodes):
            nt = ntypes[batch.node_type[i]]
            recv.append(params[f"visual.{layer}.W_r.{nt}"] @ h[i])
            send.append(params[f"visual.{layer}.W_s.{nt}"] @ h[i])
        for k in range(batch.num_edges):
            et = etypes[batch.edge_type[k]]
            eproj.append(params[f"visual.{layer}.W_e.{et}"] @ he[k])

        groups: dict[tuple[int, int], list[int]] = {}
        for k in range(batch.num_edges):
            groups.setdefault((int(batch.receivers[k]), int(batch.edge_type[k])), []).append(k)

        a = [0.0] * batch.num_edges
        if cfg.attention:
            gamma = [0.0] * batch.num_edges
            for k in range(batch.num_edges):
                et = etypes[batch.edge_type[k]]
                v = params[f"visual.{layer}.v_a.{et}"]
                i, j = batch.receivers[k], batch.senders[k]
                z = 0.0
                for c in range(d):
                    z += v[c] * recv[i][c] + v[d + c] * send[j][c] + v[2 * d + c] * cfg.beta * eproj[k][c]
                gamma[k] = z if z >= 0 else cfg.leaky_slope * z
            for members in groups.values():
                top = max(gamma[k] for k in members)
                ex = {k: np.exp(gamma[k] - top) for k in members}
                s = sum(ex.values())
                for k in members:
                    a[k] = ex[k] / s
        else:
            for members in groups.values():
                for k in members:
                    a[k] = 1.0 / len(members)

        m = []
        for k in range(batch.num_edges):
            j = batch.senders[k]
            m.append(a[k] * (cfg.lambda_v * send[j] + cfg.lambda_e * eproj[k]))
        new_h = []
        for i in range(batch.num_nodes):
            acc = np.zeros(d)
            for k in range(batch.num_edges):
                if batch.receivers[k] == i:
                    acc = acc + m[k]
            base = recv[i] if layer == 0 else h[i]
            new_h.append(base + np.maximum(acc, 0.0))
        h, he = new_h, m
        attn_history.append(np.array(a))
    return h, he, attn_history
