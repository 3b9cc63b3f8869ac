"""Typed spatio-temporal visual graphs and symbolic label graphs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "EdgeType",
    "TypeRegistry",
    "Node",
    "Edge",
    "VisualSTGraph",
    "SymbolicGraph",
    "Violation",
    "Detection",
    "ConnectivityPolicy",
    "GraphError",
    "default_registry",
    "POLICIES",
    "validate",
    "build_connectivity",
    "box_relation",
    "build_cooccurrence_symbolic_graph",
    "cooccurrence_counts",
    "normalize_adjacency",
]


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class EdgeType:
    name: str
    sender: str
    receiver: str
    temporal: bool


@dataclass(frozen=True)
class TypeRegistry:
    """Declared node/edge types and their initial attribute widths."""

    node_types: tuple[str, ...]
    edge_types: tuple[EdgeType, ...]
    node_dims: Mapping[str, int]
    edge_dims: Mapping[str, int]

    def __post_init__(self):
        if len(set(self.node_types)) != len(self.node_types):
            raise GraphError("duplicate node type names")
        names = [e.name for e in self.edge_types]
        if len(set(names)) != len(names):
            raise GraphError("duplicate edge type names")
        for e in self.edge_types:
            for end in (e.sender, e.receiver):
                if end not in self.node_types:
                    raise GraphError(f"edge type {e.name!r} references undeclared node type {end!r}")
            if e.name not in self.edge_dims:
                raise GraphError(f"no attribute width for edge type {e.name!r}")
        for t in self.node_types:
            if t not in self.node_dims:
                raise GraphError(f"no attribute width for node type {t!r}")

    def edge_type(self, name: str) -> EdgeType:
        for e in self.edge_types:
            if e.name == name:
                return e
        raise GraphError(f"unknown edge type {name!r}")

    def node_index(self, name: str) -> int:
        return self.node_types.index(name)

    def edge_index(self, name: str) -> int:
        for k, e in enumerate(self.edge_types):
            if e.name == name:
                return k
        raise GraphError(f"unknown edge type {name!r}")

    def subset(self, edge_names: Iterable[str]) -> "TypeRegistry":
        keep = set(edge_names)
        types = tuple(e for e in self.edge_types if e.name in keep)
        return TypeRegistry(self.node_types, types, dict(self.node_dims),
                            {e.name: self.edge_dims[e.name] for e in types})

    def to_dict(self) -> dict:
        return {
            "node_types": [{"name": t, "dim": int(self.node_dims[t])} for t in self.node_types],
            "edge_types": [
                {"name": e.name, "sender": e.sender, "receiver": e.receiver,
                 "temporal": e.temporal, "dim": int(self.edge_dims[e.name])}
                for e in self.edge_types
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TypeRegistry":
        nodes = d["node_types"]
        edges = d["edge_types"]
        return cls(
            node_types=tuple(n["name"] for n in nodes),
            edge_types=tuple(EdgeType(e["name"], e["sender"], e["receiver"], bool(e["temporal"]))
                             for e in edges),
            node_dims={n["name"]: int(n["dim"]) for n in nodes},
            edge_dims={e["name"]: int(e["dim"]) for e in edges},
        )


DEFAULT_EDGE_TYPES = (
    EdgeType("obj-act-s", "object", "actor", False),
    EdgeType("act-obj-s", "actor", "object", False),
    EdgeType("obj-obj-s", "object", "object", False),
    EdgeType("act-act-t", "actor", "actor", True),
    EdgeType("obj-obj-t", "object", "object", True),
)


def default_registry(actor_dim: int = 8, object_dim: int = 8, edge_dim: int = 4,
                     edge_types: Iterable[str] | None = None) -> TypeRegistry:
    reg = TypeRegistry(
        node_types=("actor", "object"),
        edge_types=DEFAULT_EDGE_TYPES,
        node_dims={"actor": actor_dim, "object": object_dim},
        edge_dims={e.name: edge_dim for e in DEFAULT_EDGE_TYPES},
    )
    return reg if edge_types is None else reg.subset(edge_types)


@dataclass(frozen=True)
class Node:
    id: int
    type: str
    frame: int
    attr: np.ndarray


@dataclass(frozen=True)
class Edge:
    sender: int
    receiver: int
    type: str
    attr: np.ndarray


@dataclass(frozen=True)
class VisualSTGraph:
    num_frames: int
    nodes: tuple[Node, ...] = ()
    edges: tuple[Edge, ...] = ()

    def __eq__(self, other) -> bool:
        if not isinstance(other, VisualSTGraph):
            return NotImplemented
        if self.num_frames != other.num_frames:
            return False
        if len(self.nodes) != len(other.nodes) or len(self.edges) != len(other.edges):
            return False
        for a, b in zip(self.nodes, other.nodes):
            if (a.id, a.type, a.frame) != (b.id, b.type, b.frame) or not _bit_equal(a.attr, b.attr):
                return False
        for a, b in zip(self.edges, other.edges):
            if (a.sender, a.receiver, a.type) != (b.sender, b.receiver, b.type) or not _bit_equal(a.attr, b.attr):
                return False
        return True

    __hash__ = None  # type: ignore[assignment]

    def nodes_of_type(self, node_type: str) -> list[Node]:
        return [n for n in self.nodes if n.type == node_type]


def _bit_equal(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    node_ids: tuple[int, ...] = ()
    edge_index: int | None = None

    def __str__(self) -> str:
        return self.message


def validate(graph: VisualSTGraph, registry: TypeRegistry) -> list[Violation]:
    """Every invariant violation of `graph` under `registry`; empty means ok."""
    out: list[Violation] = []
    by_id: dict[int, Node] = {}
    for n in graph.nodes:
        if n.id in by_id:
            out.append(Violation("duplicate-node", f"node id {n.id} appears twice", (n.id,)))
            continue
        by_id[n.id] = n
        if n.type not in registry.node_types:
            out.append(Violation("unknown-node-type", f"node {n.id} has undeclared type {n.type!r}", (n.id,)))
        elif n.attr.shape != (registry.node_dims[n.type],):
            out.append(Violation("node-dim", f"node {n.id} attribute shape {n.attr.shape} != "
                                 f"({registry.node_dims[n.type]},)", (n.id,)))
        if not 0 <= n.frame < graph.num_frames:
            out.append(Violation("frame-range", f"node {n.id} frame {n.frame} outside [0, {graph.num_frames})", (n.id,)))
        if n.attr.size and not np.isfinite(n.attr).all():
            out.append(Violation("non-finite", f"node {n.id} attribute is not finite", (n.id,)))
    known_edges = {e.name: e for e in registry.edge_types}
    for k, e in enumerate(graph.edges):
        ids = (e.sender, e.receiver)
        missing = [i for i in ids if i not in by_id]
        if missing:
            out.append(Violation("dangling-edge", f"edge {k} ({e.sender}->{e.receiver}) references missing node(s) {missing}", ids, k))
            continue
        et = known_edges.get(e.type)
        if et is None:
            out.append(Violation("unknown-edge-type", f"edge {k} has undeclared type {e.type!r}", ids, k))
            continue
        s, r = by_id[e.sender], by_id[e.receiver]
        if s.type != et.sender or r.type != et.receiver:
            out.append(Violation(
                "type-mismatch",
                f"edge {k} of type {e.type} expects {et.sender}->{et.receiver} but connects "
                f"{s.type} {s.id} -> {r.type} {r.id}", ids, k))
        if et.temporal:
            if r.frame - s.frame != 1:
                out.append(Violation("temporal-span", f"temporal edge {k} spans frames {s.frame}->{r.frame}, expected t-1 -> t", ids, k))
        elif s.frame != r.frame:
            out.append(Violation("spatial-span", f"temporal span on spatial edge {k} (frames {s.frame}->{r.frame})", ids, k))
        if e.attr.shape != (registry.edge_dims[e.type],):
            out.append(Violation("edge-dim", f"edge {k} attribute shape {e.attr.shape} != ({registry.edge_dims[e.type]},)", ids, k))
        elif e.attr.size and not np.isfinite(e.attr).all():
            out.append(Violation("non-finite", f"edge {k} attribute is not finite", ids, k))
    return out


@dataclass(frozen=True)
class Detection:
    node_type: str
    attr: np.ndarray
    box: tuple[float, float, float, float] | None = None  # (cx, cy, w, h), normalized


@dataclass(frozen=True)
class ConnectivityPolicy:
    """Which edge types to instantiate and how temporal edges pair nodes.

    temporal="track" links the k-th node of a type at t-1 to the k-th node of
    that type at t; temporal="full" links all same-type pairs across the step.
    """

    edge_types: tuple[str, ...]
    temporal: str = "track"


POLICIES = {
    "full5": ConnectivityPolicy(("obj-act-s", "act-obj-s", "obj-obj-s", "act-act-t", "obj-obj-t")),
    "charades": ConnectivityPolicy(("obj-act-s", "act-obj-s", "act-act-t")),
    "two-hop": ConnectivityPolicy(("obj-act-s", "act-obj-s", "obj-obj-s", "act-act-t")),
}


def box_relation(sender_box, receiver_box) -> np.ndarray:
    """Relative geometry of a sender box w.r.t. a receiver box (4-vector)."""
    xj, yj, wj, hj = sender_box
    xi, yi, wi, hi = receiver_box
    return np.array([(xj - xi) / wi, (yj - yi) / hi, np.log(wj / wi), np.log(hj / hi)])


def build_connectivity(
    detections: Sequence[Sequence[Detection]],
    registry: TypeRegistry,
    policy: ConnectivityPolicy | str = "full5",
) -> VisualSTGraph:
    """Instantiate every edge the policy permits over per-frame detections.

    Node ids follow (frame, input order). Edges are sorted by
    (receiver, edge-type index, sender).
    """
    if isinstance(policy, str):
        policy = POLICIES[policy]
    if policy.temporal not in ("track", "full"):
        raise GraphError(f"unknown temporal pairing {policy.temporal!r}")
    nodes: list[Node] = []
    boxes: dict[int, tuple] = {}
    per_frame: list[dict[str, list[int]]] = []
    for t, frame in enumerate(detections):
        groups: dict[str, list[int]] = {nt: [] for nt in registry.node_types}
        for det in frame:
            if det.node_type not in registry.node_types:
                raise GraphError(f"unknown node type {det.node_type!r}")
            nid = len(nodes)
            nodes.append(Node(nid, det.node_type, t, np.asarray(det.attr, dtype=np.float64)))
            if det.box is not None:
                boxes[nid] = det.box
            groups[det.node_type].append(nid)
        per_frame.append(groups)

    pairs: list[tuple[int, int, int, str]] = []  # (receiver, type idx, sender, name)
    for name in policy.edge_types:
        et = registry.edge_type(name)
        k = registry.edge_index(name)
        for t, groups in enumerate(per_frame):
            receivers = groups[et.receiver]
            if et.temporal:
                if t == 0:
                    continue
                senders = per_frame[t - 1][et.sender]
                if policy.temporal == "track":
                    links = list(zip(senders, receivers))
                else:
                    links = [(s, r) for r in receivers for s in senders]
            else:
                senders = groups[et.sender]
                links = [(s, r) for r in receivers for s in senders if s != r]
            pairs.extend((r, k, s, name) for s, r in links)
    pairs.sort(key=lambda p: p[:3])

    edges = []
    for r, _, s, name in pairs:
        if s in boxes and r in boxes:
            attr = box_relation(boxes[s], boxes[r])
        else:
            attr = np.zeros(registry.edge_dims[name])
        edges.append(Edge(s, r, name, attr))
    return VisualSTGraph(len(detections), tuple(nodes), tuple(edges))


@dataclass(frozen=True)
class SymbolicGraph:
    """Label nodes with embeddings, a weighted adjacency, and the bipartite mask.

    `bipartite` maps a visual node type to the symbol indices its nodes may
    connect to.
    """

    labels: tuple[str, ...]
    embeddings: np.ndarray  # (C, K)
    adjacency: np.ndarray  # (C, C)
    bipartite: Mapping[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        c = len(self.labels)
        emb = np.asarray(self.embeddings, dtype=np.float64)
        adj = np.asarray(self.adjacency, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] != c:
            raise GraphError(f"embeddings shape {emb.shape} does not match {c} symbols")
        if adj.shape != (c, c):
            raise GraphError(f"adjacency shape {adj.shape} is not ({c}, {c})")
        if not np.isfinite(adj).all() or (adj < 0).any():
            raise GraphError("adjacency must be finite and nonnegative")
        for nt, syms in self.bipartite.items():
            bad = [s for s in syms if not 0 <= s < c]
            if bad:
                raise GraphError(f"bipartite mask for {nt!r} references unknown symbols {bad}")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "bipartite", {k: tuple(int(s) for s in v) for k, v in self.bipartite.items()})

    @property
    def num_symbols(self) -> int:
        return len(self.labels)

    @property
    def embedding_dim(self) -> int:
        return self.embeddings.shape[1]

    def check_registry(self, registry: TypeRegistry) -> None:
        for nt in self.bipartite:
            if nt not in registry.node_types:
                raise GraphError(f"bipartite mask references undeclared node type {nt!r}")

    def permuted(self, order: Sequence[int]) -> "SymbolicGraph":
        """Same graph with symbols listed in `order` (new index k holds old order[k])."""
        order = np.asarray(order)
        inv = np.argsort(order)
        return SymbolicGraph(
            tuple(self.labels[i] for i in order),
            self.embeddings[order],
            self.adjacency[np.ix_(order, order)],
            {nt: tuple(sorted(int(inv[s]) for s in syms)) for nt, syms in self.bipartite.items()},
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymbolicGraph):
            return NotImplemented
        return (self.labels == other.labels and _bit_equal(self.embeddings, other.embeddings)
                and _bit_equal(self.adjacency, other.adjacency) and dict(self.bipartite) == dict(other.bipartite))

    __hash__ = None  # type: ignore[assignment]


def cooccurrence_counts(frames: Iterable[Iterable[int]], num_labels: int, binarize: bool = False,
                        frequency: bool = False) -> np.ndarray:
    """Per-frame label co-occurrence counts with a zero diagonal."""
    counts = np.zeros((num_labels, num_labels))
    n_frames = 0
    for active in frames:
        n_frames += 1
        idx = sorted(set(int(a) for a in active))
        for a in idx:
            if not 0 <= a < num_labels:
                raise GraphError(f"label {a} outside [0, {num_labels})")
        if len(idx) > 1:
            sel = np.asarray(idx)
            counts[np.ix_(sel, sel)] += 1.0
    np.fill_diagonal(counts, 0.0)
    if binarize:
        counts = (counts > 0).astype(np.float64)
    elif frequency and n_frames:
        counts /= n_frames
    return counts


def build_cooccurrence_symbolic_graph(
    frames: Iterable[Iterable[str]],
    embeddings: Mapping[str, Sequence[float]],
    bipartite: Mapping[str, Sequence[str]] | None = None,
    labels: Sequence[str] | None = None,
    binarize: bool = False,
    frequency: bool = False,
) -> SymbolicGraph:
    """Symbolic graph whose edge weights count per-frame label co-occurrences.

    `frames` yields the set of active label names per training frame.
    `bipartite` maps visual node types to the label names they may vote for;
    node types left out connect to no symbol.
    """
    frames = [set(f) for f in frames]
    if labels is None:
        labels = sorted(set(embeddings) | set().union(*frames) if frames else set(embeddings))
    labels = tuple(labels)
    missing = [lab for lab in labels if lab not in embeddings]
    seen = set().union(*frames) if frames else set()
    missing += [lab for lab in sorted(seen) if lab not in embeddings and lab not in missing]
    if missing:
        raise GraphError(f"no embedding for label(s) {missing}")
    index = {lab: k for k, lab in enumerate(labels)}
    unknown = sorted(seen - set(index))
    if unknown:
        raise GraphError(f"labels {unknown} are not declared symbols")
    adj = cooccurrence_counts(([index[a] for a in f] for f in frames), len(labels),
                              binarize=binarize, frequency=frequency)
    emb = np.array([np.asarray(embeddings[lab], dtype=np.float64) for lab in labels])
    mask = {nt: tuple(sorted(index[lab] for lab in labs)) for nt, labs in (bipartite or {}).items()}
    return SymbolicGraph(labels, emb, adj, mask)


def normalize_adjacency(adjacency: np.ndarray, scheme: str = "sym") -> np.ndarray:
    """Normalize a nonnegative square adjacency for graph convolution.

    "sym": D^-1/2 (A + I) D^-1/2 with D the degree of A + I.
    "row": row-stochastic A; all-zero rows become unit self-loops.
    "none": A unchanged.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphError(f"adjacency must be square, got {a.shape}")
    if (a < 0).any():
        raise GraphError("adjacency must be nonnegative")
    if scheme == "none":
        return a.copy()
    if scheme == "sym":
        a_hat = a + np.eye(a.shape[0])
        d = 1.0 / np.sqrt(a_hat.sum(axis=1))
        return d[:, None] * a_hat * d[None, :]
    if scheme == "row":
        deg = a.sum(axis=1)
        out = np.zeros_like(a)
        nz = deg > 0
        out[nz] = a[nz] / deg[nz, None]
        zero = np.flatnonzero(~nz)
        out[zero, zero] = 1.0
        return out
    raise GraphError(f"unknown normalization scheme {scheme!r}")
