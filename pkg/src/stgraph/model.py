"""Full model: visual context, semantic context, readouts, heads and losses."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .batch import GraphBatch
from .graph import SymbolicGraph, TypeRegistry, normalize_adjacency
from .params import ParameterBank, fan_in_uniform
from .semantic import SemanticConfig, SemanticTrace, init_semantic_params, semantic_forward
from .visual import RefinedState, VisualConfig, init_visual_params, visual_forward


class ModelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 4
    hidden_dim: int = 16
    beta: int = 1
    lambda_v: int = 1
    lambda_e: int = 1
    attention: bool = True
    leaky_slope: float = 0.2
    semantic: bool = True
    symbolic_dim: int = 8
    gcn_layers: int = 1
    adjacency_norm: str = "sym"
    symbolic_scope: str = "graph"
    normalize_embeddings: bool = False
    temporal_pool: bool = False
    pool_k: int = 2
    readout_node_type: str = "actor"

    def __post_init__(self):
        if self.pool_k < 0:
            raise ModelConfigError("pool_k must be >= 0")
        # surfaces flag errors early
        self.visual
        self.semantic_config

    @property
    def visual(self) -> VisualConfig:
        return VisualConfig(self.num_layers, self.hidden_dim, self.beta, self.lambda_v,
                            self.lambda_e, self.attention, self.leaky_slope)

    @property
    def semantic_config(self) -> SemanticConfig:
        return SemanticConfig(self.semantic, self.symbolic_dim, self.gcn_layers, self.adjacency_norm,
                              self.symbolic_scope, self.normalize_embeddings)

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


ABLATIONS = {
    "no-attention": {"attention": False},
    "no-edge-features": {"beta": 0, "lambda_e": 0},
    "no-semantic": {"semantic": False},
    "no-visual": {"num_layers": 0},
    "no-messages": {"lambda_v": 0, "lambda_e": 0},
}


def apply_ablations(cfg: ModelConfig, names) -> ModelConfig:
    for name in names:
        if name not in ABLATIONS:
            raise ModelConfigError(f"unknown ablation {name!r}; choose from {sorted(ABLATIONS)}")
        cfg = cfg.replace(**ABLATIONS[name])
    return cfg


@dataclass(frozen=True)
class TaskSpec:
    """What the heads predict: per-node classes, or per-frame multi-label."""

    kind: str  # "node" | "frame"
    node_classes: Mapping[str, int] = field(default_factory=dict)
    frame_classes: int = 0

    def __post_init__(self):
        if self.kind not in ("node", "frame"):
            raise ModelConfigError(f"task kind must be 'node' or 'frame', got {self.kind!r}")
        if self.kind == "node" and not self.node_classes:
            raise ModelConfigError("node task needs at least one node type with classes")
        if self.kind == "frame" and self.frame_classes < 1:
            raise ModelConfigError("frame task needs frame_classes >= 1")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "node_classes": dict(self.node_classes), "frame_classes": self.frame_classes}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TaskSpec":
        return cls(d["kind"], dict(d.get("node_classes", {})), int(d.get("frame_classes", 0)))


@dataclass
class ForwardResult:
    node_logits: dict[str, Tensor]  # per node type, rows follow batch.nodes_by_type
    frame_logits: Tensor | None  # (total frames, C)
    state: RefinedState
    features: dict[str, Tensor]  # final node features per type
    semantic: SemanticTrace | None


class LabelError(ValueError):
    pass


class STMPNN:
    """Visual-symbolic message passing network bound to a registry and label graph."""

    def __init__(self, registry: TypeRegistry, symbolic: SymbolicGraph | None, config: ModelConfig, task: TaskSpec):
        self.registry = registry
        self.symbolic = symbolic
        self.config = config
        self.task = task
        if config.semantic:
            if symbolic is None:
                raise ModelConfigError("semantic module enabled but no symbolic graph given")
            symbolic.check_registry(registry)
            self.a_hat = normalize_adjacency(symbolic.adjacency, config.adjacency_norm)
        else:
            self.a_hat = None
        for nt in task.node_classes:
            if nt not in registry.node_types:
                raise ModelConfigError(f"head declared for unknown node type {nt!r}")
        if task.kind == "frame" and config.readout_node_type not in registry.node_types:
            raise ModelConfigError(f"readout node type {config.readout_node_type!r} not declared")
        self._out_dims = self._output_dims()
        if config.semantic:
            voting = [nt for nt in symbolic.bipartite if symbolic.bipartite[nt]]
            dims = {self._out_dims[nt] for nt in voting}
            if len(dims) > 1:
                raise ModelConfigError(f"node types {voting} reach the symbolic graph with unequal widths {sorted(dims)}")

    def _output_dims(self) -> dict[str, int]:
        if self.config.num_layers > 0:
            return {nt: self.config.hidden_dim for nt in self.registry.node_types}
        return dict(self.registry.node_dims)

    @property
    def node_dim(self) -> int:
        if self.config.semantic:
            voting = [nt for nt in self.symbolic.bipartite if self.symbolic.bipartite[nt]]
            if voting:
                return self._out_dims[voting[0]]
        return self.config.hidden_dim if self.config.num_layers > 0 else max(self._out_dims.values())

    def _readout_edge_dim(self) -> int:
        if self.config.num_layers > 0:
            return self.config.hidden_dim
        into = {self.registry.edge_dims[e.name] for e in self.registry.edge_types
                if e.receiver == self.config.readout_node_type}
        if len(into) > 1:
            raise ModelConfigError(f"edges into {self.config.readout_node_type!r} have unequal widths {sorted(into)}")
        return into.pop() if into else 0

    def readout_dim(self) -> int:
        return self._out_dims[self.config.readout_node_type] + self._readout_edge_dim()

    def init_params(self, seed: int) -> ParameterBank:
        arrays = init_visual_params(self.registry, self.config.visual, seed)
        if self.config.semantic:
            arrays.update(init_semantic_params(self.symbolic, self.config.semantic_config, self.node_dim, seed))
        if self.task.kind == "node":
            for nt, c in self.task.node_classes.items():
                name = f"head.node.{nt}.W"
                arrays[name] = fan_in_uniform(seed, name, (c, self._out_dims[nt]))
                arrays[f"head.node.{nt}.b"] = np.zeros(c)
        else:
            arrays["head.frame.W"] = fan_in_uniform(seed, "head.frame.W", (self.task.frame_classes, self.readout_dim()))
            arrays["head.frame.b"] = np.zeros(self.task.frame_classes)
        return ParameterBank(arrays)

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        return self.init_params(0).shapes()

    def forward(self, batch: GraphBatch, params: Mapping[str, Tensor], dropout: float = 0.0,
                rng: np.random.Generator | None = None) -> ForwardResult:
        """Dropout is active only when both a positive rate and an rng are given."""
        cfg = self.config
        drop = dropout if rng is not None else 0.0
        state = visual_forward(batch, params, cfg.visual, drop, rng)
        features = dict(state.nodes)
        trace = None
        if cfg.semantic:
            h = state.node_matrix
            if h is None:
                h = _stack_rows(state.nodes, batch, self.node_dim)
            h, trace = semantic_forward(batch, h, self.symbolic, params, cfg.semantic_config, self.a_hat)
            if trace is not None:
                features = {t: ad.gather_rows(h, batch.nodes_by_type[t]) for t in self.registry.node_types}
        node_logits: dict[str, Tensor] = {}
        frame_logits = None
        if self.task.kind == "node":
            node_logits = node_logits_fn(features, params, self.task, drop, rng)
        else:
            x = frame_readout(batch, features, state.edges, self.registry, cfg.readout_node_type,
                              self._out_dims[cfg.readout_node_type], self._readout_edge_dim())
            if cfg.temporal_pool:
                x = ad.matmul(ad.constant(temporal_pool_matrix(batch.frame_counts, cfg.pool_k)), x)
            if drop > 0:
                keep = (rng.random(x.shape) >= drop) / (1.0 - drop)
                x = ad.mul(x, ad.constant(keep))
            frame_logits = ad.add(ad.matmul(x, ad.transpose(params["head.frame.W"])), params["head.frame.b"])
        return ForwardResult(node_logits, frame_logits, state, features, trace)

    def loss(self, result: ForwardResult, batch: GraphBatch, labels: np.ndarray, pos_weight: float | None = None) -> Tensor:
        """Batch-averaged loss.

        Node task: `labels` is (num_nodes,) with -1 for unlabeled nodes.
        Frame task: `labels` is (total_frames, C) with 0/1 entries.
        """
        if self.task.kind == "node":
            return node_cross_entropy(result.node_logits, batch, labels, self.task, batch.num_samples)
        return frame_bce(result.frame_logits, labels, batch.num_samples, pos_weight)


def _stack_rows(parts: Mapping[str, Tensor], batch: GraphBatch, width: int) -> Tensor:
    out = None
    for t, rows in parts.items():
        if rows.shape[0] == 0:
            continue
        if rows.shape[1] != width:
            raise ModelConfigError(f"node type {t!r} has width {rows.shape[1]}, expected {width}")
        piece = ad.scatter_add(rows, batch.nodes_by_type[t], batch.num_nodes)
        out = piece if out is None else ad.add(out, piece)
    return out if out is not None else ad.constant(np.zeros((batch.num_nodes, width)))


def node_logits_fn(features: Mapping[str, Tensor], params: Mapping[str, Tensor], task: TaskSpec,
                   dropout: float = 0.0, rng: np.random.Generator | None = None) -> dict[str, Tensor]:
    """Linear class scores for every node whose type has a head."""
    out = {}
    for nt in task.node_classes:
        w = params.get(f"head.node.{nt}.W")
        if w is None:
            raise ModelConfigError(f"no classifier head for node type {nt!r}")
        x = features[nt]
        if dropout > 0 and rng is not None:
            x = ad.mul(x, ad.constant((rng.random(x.shape) >= dropout) / (1.0 - dropout)))
        out[nt] = ad.add(ad.matmul(x, ad.transpose(w)), params[f"head.node.{nt}.b"])
    return out


def frame_readout(batch: GraphBatch, node_features: Mapping[str, Tensor], edge_features: Mapping[str, Tensor],
                  registry: TypeRegistry, node_type: str, node_dim: int, edge_dim: int) -> Tensor:
    """Per frame: [mean of `node_type` node features ; mean of edges into them].

    Returns a (total frames, node_dim + edge_dim) tensor; frames with no such
    nodes or edges contribute zero vectors.
    """
    n_frames = batch.total_frames
    idx = batch.nodes_by_type[node_type]
    frames = batch.global_frame[idx]
    counts = np.bincount(frames, minlength=n_frames).astype(np.float64)
    node_sum = ad.scatter_add(node_features[node_type], frames, n_frames)
    node_mean = ad.scale_rows(node_sum, ad.constant(_safe_inverse(counts)))

    edge_sum = None
    edge_counts = np.zeros(n_frames)
    for et in registry.edge_types:
        if et.receiver != node_type:
            continue
        eidx = batch.edges_by_type[et.name]
        if eidx.size == 0:
            continue
        ef = batch.global_frame[batch.receivers[eidx]]
        edge_counts += np.bincount(ef, minlength=n_frames)
        piece = ad.scatter_add(edge_features[et.name], ef, n_frames)
        edge_sum = piece if edge_sum is None else ad.add(edge_sum, piece)
    if edge_sum is None:
        edge_mean = ad.constant(np.zeros((n_frames, edge_dim)))
    else:
        edge_mean = ad.scale_rows(edge_sum, ad.constant(_safe_inverse(edge_counts)))
    return ad.concat([node_mean, edge_mean])


def _safe_inverse(counts: np.ndarray) -> np.ndarray:
    out = np.zeros_like(counts)
    nz = counts > 0
    out[nz] = 1.0 / counts[nz]
    return out


def temporal_pool_matrix(frame_counts: np.ndarray, k: int) -> np.ndarray:
    """Averaging operator over a +-k frame window, never crossing samples."""
    total = int(np.sum(frame_counts))
    p = np.zeros((total, total))
    start = 0
    for t_count in frame_counts:
        for t in range(t_count):
            lo, hi = max(0, t - k), min(t_count, t + k + 1)
            p[start + t, start + lo:start + hi] = 1.0 / (hi - lo)
        start += t_count
    return p


def node_cross_entropy(logits: Mapping[str, Tensor], batch: GraphBatch, labels: np.ndarray, task: TaskSpec,
                       num_samples: int) -> Tensor:
    """Sum of per-node softmax cross-entropies, divided by the sample count."""
    labels = np.asarray(labels)
    terms = []
    for nt, c in task.node_classes.items():
        y = labels[batch.nodes_by_type[nt]]
        bad = (y >= c) | (y < -1)
        if bad.any():
            raise LabelError(f"{nt} label {int(y[bad][0])} outside [0, {c}) (or -1 for unlabeled)")
        mask = y >= 0
        if not mask.any():
            continue
        onehot = np.zeros((y.shape[0], c))
        onehot[np.flatnonzero(mask), y[mask]] = 1.0
        terms.append(ad.total(ad.mul(ad.log_softmax_rows(logits[nt]), ad.constant(onehot))))
    if not terms:
        return ad.constant(0.0)
    acc = terms[0]
    for t in terms[1:]:
        acc = ad.add(acc, t)
    return ad.scale(acc, -1.0 / max(num_samples, 1))


def frame_bce(logits: Tensor, labels: np.ndarray, num_samples: int, pos_weight: float | None = None) -> Tensor:
    """Sigmoid binary cross-entropy summed over frames and classes, per sample."""
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != logits.shape:
        raise LabelError(f"frame labels shape {y.shape} does not match logits {logits.shape}")
    if ((y != 0) & (y != 1)).any():
        raise LabelError("frame labels must be 0/1")
    w = 1.0 if pos_weight is None else float(pos_weight)
    neg_part = ad.total(ad.mul(ad.softplus(logits), ad.constant(1.0 - y)))
    pos_part = ad.total(ad.mul(ad.softplus(ad.neg(logits)), ad.constant(w * y)))
    return ad.scale(ad.add(neg_part, pos_part), 1.0 / max(num_samples, 1))
