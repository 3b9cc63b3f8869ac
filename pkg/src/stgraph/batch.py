"""Index arrays for a disjoint union of visual st-graphs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import TypeRegistry, VisualSTGraph


@dataclass
class GraphBatch:
    registry: TypeRegistry
    num_nodes: int
    num_edges: int
    num_samples: int
    node_type: np.ndarray  # (n,) index into registry.node_types
    node_frame: np.ndarray  # (n,) frame within its sample
    node_sample: np.ndarray  # (n,)
    global_frame: np.ndarray  # (n,) frame index across the whole batch
    frame_counts: np.ndarray  # (B,) frames per sample
    frame_offsets: np.ndarray  # (B,) first global frame of each sample
    nodes_by_type: dict[str, np.ndarray]
    node_attr: dict[str, np.ndarray]
    senders: np.ndarray
    receivers: np.ndarray
    edge_type: np.ndarray  # (E,) index into registry.edge_types
    edges_by_type: dict[str, np.ndarray]
    edge_attr: dict[str, np.ndarray]
    attention_segments: np.ndarray  # (E,) compact id of (receiver, edge type)
    num_attention_segments: int

    @property
    def total_frames(self) -> int:
        return int(self.frame_counts.sum())

    @classmethod
    def from_graphs(cls, graphs: Sequence[VisualSTGraph], registry: TypeRegistry) -> "GraphBatch":
        node_type, node_frame, node_sample = [], [], []
        senders, receivers, edge_type = [], [], []
        node_attr_rows: dict[str, list[np.ndarray]] = {t: [] for t in registry.node_types}
        edge_attr_rows: dict[str, list[np.ndarray]] = {e.name: [] for e in registry.edge_types}
        frame_counts = []
        nt_index = {t: k for k, t in enumerate(registry.node_types)}
        et_index = {e.name: k for k, e in enumerate(registry.edge_types)}
        offset = 0
        for b, g in enumerate(graphs):
            local = {}
            for k, n in enumerate(g.nodes):
                local[n.id] = offset + k
                node_type.append(nt_index[n.type])
                node_frame.append(n.frame)
                node_sample.append(b)
                node_attr_rows[n.type].append(n.attr)
            for e in g.edges:
                senders.append(local[e.sender])
                receivers.append(local[e.receiver])
                edge_type.append(et_index[e.type])
                edge_attr_rows[e.type].append(e.attr)
            offset += len(g.nodes)
            frame_counts.append(g.num_frames)

        node_type_a = np.asarray(node_type, dtype=np.intp)
        edge_type_a = np.asarray(edge_type, dtype=np.intp)
        receivers_a = np.asarray(receivers, dtype=np.intp)
        frame_counts_a = np.asarray(frame_counts, dtype=np.intp)
        frame_offsets = np.concatenate([[0], np.cumsum(frame_counts_a)[:-1]]).astype(np.intp)
        node_sample_a = np.asarray(node_sample, dtype=np.intp)
        node_frame_a = np.asarray(node_frame, dtype=np.intp)
        n_types = len(registry.edge_types)
        raw_seg = receivers_a * n_types + edge_type_a
        uniq, seg = np.unique(raw_seg, return_inverse=True)

        return cls(
            registry=registry,
            num_nodes=offset,
            num_edges=len(senders),
            num_samples=len(graphs),
            node_type=node_type_a,
            node_frame=node_frame_a,
            node_sample=node_sample_a,
            global_frame=(frame_offsets[node_sample_a] + node_frame_a) if offset else np.zeros(0, np.intp),
            frame_counts=frame_counts_a,
            frame_offsets=frame_offsets,
            nodes_by_type={t: np.flatnonzero(node_type_a == k) for t, k in nt_index.items()},
            node_attr={t: (np.array(rows) if rows else np.zeros((0, registry.node_dims[t])))
                       for t, rows in node_attr_rows.items()},
            senders=np.asarray(senders, dtype=np.intp),
            receivers=receivers_a,
            edge_type=edge_type_a,
            edges_by_type={name: np.flatnonzero(edge_type_a == k) for name, k in et_index.items()},
            edge_attr={name: (np.array(rows) if rows else np.zeros((0, registry.edge_dims[name])))
                       for name, rows in edge_attr_rows.items()},
            attention_segments=seg.astype(np.intp).reshape(-1),
            num_attention_segments=len(uniq),
        )
