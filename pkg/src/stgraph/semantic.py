"""Semantic context module: visual <-> symbolic fusion with graph convolutions.

Visual nodes vote into the symbols they may connect to (softmax over each
node's allowed symbols), symbols concatenate their embedding with the pooled
evidence, a GCN propagates over the normalized label adjacency, and each
visual node attends back over its allowed symbols through a residual update.

Each "scope group" (one sample, or one frame of one sample) gets its own copy
of the symbolic graph; copies never exchange information.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .batch import GraphBatch
from .graph import SymbolicGraph, normalize_adjacency
from .params import fan_in_uniform


class SemanticConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SemanticConfig:
    enabled: bool = True
    symbolic_dim: int = 8
    gcn_layers: int = 1
    adjacency_norm: str = "sym"
    scope: str = "graph"  # "graph" | "frame"
    normalize_embeddings: bool = False

    def __post_init__(self):
        if self.scope not in ("graph", "frame"):
            raise SemanticConfigError(f"scope must be 'graph' or 'frame', got {self.scope!r}")
        if self.gcn_layers < 0 or self.symbolic_dim < 1:
            raise SemanticConfigError("gcn_layers must be >= 0 and symbolic_dim >= 1")


@dataclass
class SemanticTrace:
    pair_nodes: np.ndarray
    pair_symbols: np.ndarray
    phi_vs: np.ndarray
    phi_sv: np.ndarray
    symbolic_features: np.ndarray  # S^(R) rows, one block of C rows per scope group


def check_dims(cfg: SemanticConfig, embedding_dim: int) -> None:
    if cfg.gcn_layers == 0 and embedding_dim != 0:
        raise SemanticConfigError(
            f"gcn_layers=0 leaves symbol features at width K+D_s={embedding_dim + cfg.symbolic_dim}, "
            f"but the back-projection expects D_s={cfg.symbolic_dim}")


def init_semantic_params(sym: SymbolicGraph, cfg: SemanticConfig, node_dim: int, seed: int) -> dict[str, np.ndarray]:
    check_dims(cfg, sym.embedding_dim)
    ds, k, c = cfg.symbolic_dim, sym.embedding_dim, sym.num_symbols
    out = {
        "semantic.w_vs": fan_in_uniform(seed, "semantic.w_vs", (c, node_dim)),
        "semantic.W_p_vs": fan_in_uniform(seed, "semantic.W_p_vs", (ds, node_dim)),
    }
    for r in range(cfg.gcn_layers):
        name = f"semantic.gcn.{r}"
        out[name] = fan_in_uniform(seed, name, (ds, k + ds if r == 0 else ds))
    out["semantic.v_sv"] = np.zeros(ds + node_dim)
    out["semantic.W_p_sv"] = fan_in_uniform(seed, "semantic.W_p_sv", (node_dim, ds))
    return out


def prepared_embeddings(sym: SymbolicGraph, cfg: SemanticConfig) -> np.ndarray:
    emb = sym.embeddings
    if cfg.normalize_embeddings:
        norms = np.linalg.norm(emb, axis=1, keepdims=True)
        emb = emb / np.where(norms > 0, norms, 1.0)
    return emb


def bipartite_pairs(batch: GraphBatch, sym: SymbolicGraph) -> tuple[np.ndarray, np.ndarray]:
    """All allowed (visual node, symbol) pairs, sorted by node then symbol."""
    nodes, symbols = [], []
    for t, idx in batch.nodes_by_type.items():
        allowed = sym.bipartite.get(t, ())
        if not allowed or idx.size == 0:
            continue
        nodes.append(np.repeat(idx, len(allowed)))
        symbols.append(np.tile(np.asarray(allowed, dtype=np.intp), idx.size))
    if not nodes:
        return np.zeros(0, np.intp), np.zeros(0, np.intp)
    pn, ps = np.concatenate(nodes), np.concatenate(symbols)
    order = np.lexsort((ps, pn))
    return pn[order], ps[order]


def scope_groups(batch: GraphBatch, cfg: SemanticConfig) -> tuple[np.ndarray, int]:
    if cfg.scope == "graph":
        return batch.node_sample, batch.num_samples
    return batch.global_frame, batch.total_frames


def associate_visual_to_symbolic(
    h: Tensor, pair_nodes: np.ndarray, pair_symbols: np.ndarray, instance: np.ndarray,
    num_instances: int, num_nodes: int, params: Mapping[str, Tensor],
) -> tuple[Tensor, Tensor]:
    """Returns (phi_vs per pair, pooled evidence f per symbol instance)."""
    scores = ad.row_sum(ad.mul(ad.gather_rows(h, pair_nodes), ad.gather_rows(params["semantic.w_vs"], pair_symbols)))
    phi = ad.segment_softmax(scores, pair_nodes, num_nodes)
    proj = ad.matmul(h, ad.transpose(params["semantic.W_p_vs"]))
    votes = ad.scale_rows(ad.gather_rows(proj, pair_nodes), phi)
    f = ad.relu(ad.scatter_add(votes, instance, num_instances))
    return phi, f


def assemble_symbolic_input(embeddings: np.ndarray, f: Tensor, groups: int) -> Tensor:
    """Row c of every group block is [s_c ; f_c]."""
    return ad.concat([ad.constant(np.tile(embeddings, (groups, 1))), f])


def symbolic_gcn(s0: Tensor, a_hat: np.ndarray, params: Mapping[str, Tensor], layers: int) -> Tensor:
    s = s0
    for r in range(layers):
        s = ad.relu(ad.matmul(ad.block_diag_apply(a_hat, s), ad.transpose(params[f"semantic.gcn.{r}"])))
    return s


def map_symbolic_to_visual(
    h: Tensor, s: Tensor, pair_nodes: np.ndarray, instance: np.ndarray, num_nodes: int,
    params: Mapping[str, Tensor],
) -> tuple[Tensor, Tensor]:
    """Returns (refined node features, phi_sv per pair)."""
    joint = ad.concat([ad.gather_rows(s, instance), ad.gather_rows(h, pair_nodes)])
    phi = ad.segment_softmax(ad.matmul(joint, params["semantic.v_sv"]), pair_nodes, num_nodes)
    back = ad.matmul(s, ad.transpose(params["semantic.W_p_sv"]))
    upd = ad.scatter_add(ad.scale_rows(ad.gather_rows(back, instance), phi), pair_nodes, num_nodes)
    return ad.add(h, ad.relu(upd)), phi


def semantic_forward(
    batch: GraphBatch,
    h: Tensor,
    sym: SymbolicGraph,
    params: Mapping[str, Tensor],
    cfg: SemanticConfig,
    a_hat: np.ndarray | None = None,
) -> tuple[Tensor, SemanticTrace | None]:
    if not cfg.enabled:
        return h, None
    check_dims(cfg, sym.embedding_dim)
    if a_hat is None:
        a_hat = normalize_adjacency(sym.adjacency, cfg.adjacency_norm)
    pn, ps = bipartite_pairs(batch, sym)
    if pn.size == 0:
        return h, None
    group, n_groups = scope_groups(batch, cfg)
    c = sym.num_symbols
    instance = group[pn] * c + ps
    phi_vs, f = associate_visual_to_symbolic(h, pn, ps, instance, n_groups * c, batch.num_nodes, params)
    s0 = assemble_symbolic_input(prepared_embeddings(sym, cfg), f, n_groups)
    s = symbolic_gcn(s0, a_hat, params, cfg.gcn_layers)
    out, phi_sv = map_symbolic_to_visual(h, s, pn, instance, batch.num_nodes, params)
    return out, SemanticTrace(pn, ps, phi_vs.data, phi_sv.data, s.data)


def semantic_forward_naive(
    batch: GraphBatch,
    h: list[np.ndarray],
    sym: SymbolicGraph,
    params: Mapping[str, np.ndarray],
    cfg: SemanticConfig,
) -> tuple[list[np.ndarray], dict]:
    """Loop-based reference for :func:`semantic_forward`."""
    if not cfg.enabled:
        return [np.array(x) for x in h], {}
    n = batch.num_nodes
    c = sym.num_symbols
    ntypes = batch.registry.node_types
    emb = prepared_embeddings(sym, cfg)
    a_hat = normalize_adjacency(sym.adjacency, cfg.adjacency_norm)
    group = batch.node_sample if cfg.scope == "graph" else batch.global_frame
    n_groups = batch.num_samples if cfg.scope == "graph" else batch.total_frames
    w_vs, wp_vs, v_sv, wp_sv = (params["semantic.w_vs"], params["semantic.W_p_vs"],
                                params["semantic.v_sv"], params["semantic.W_p_sv"])
    ds = cfg.symbolic_dim

    allowed = [sym.bipartite.get(ntypes[batch.node_type[i]], ()) for i in range(n)]
    phi_vs: dict[tuple[int, int], float] = {}
    for i in range(n):
        if not allowed[i]:
            continue
        z = {cc: sum(w_vs[cc][k] * h[i][k] for k in range(len(h[i]))) for cc in allowed[i]}
        top = max(z.values())
        ex = {cc: np.exp(v - top) for cc, v in z.items()}
        tot = sum(ex.values())
        for cc in allowed[i]:
            phi_vs[(i, cc)] = ex[cc] / tot

    out = [np.array(x) for x in h]
    phi_sv: dict[tuple[int, int], float] = {}
    s_all = []
    for g in range(n_groups):
        f = [np.zeros(ds) for _ in range(c)]
        for i in range(n):
            if group[i] != g:
                continue
            p = wp_vs @ h[i]
            for cc in allowed[i]:
                f[cc] = f[cc] + phi_vs[(i, cc)] * p
        s = [np.concatenate([emb[cc], np.maximum(f[cc], 0.0)]) for cc in range(c)]
        for r in range(cfg.gcn_layers):
            w = params[f"semantic.gcn.{r}"]
            mixed = []
            for cc in range(c):
                acc = np.zeros(len(s[0]))
                for dd in range(c):
                    acc = acc + a_hat[cc, dd] * s[dd]
                mixed.append(acc)
            s = [np.maximum(w @ row, 0.0) for row in mixed]
        s_all.extend(s)
        for i in range(n):
            if group[i] != g or not allowed[i]:
                continue
            z = {cc: float(v_sv[:ds] @ s[cc] + v_sv[ds:] @ h[i]) for cc in allowed[i]}
            top = max(z.values())
            ex = {cc: np.exp(v - top) for cc, v in z.items()}
            tot = sum(ex.values())
            acc = np.zeros(len(h[i]))
            for cc in allowed[i]:
                phi_sv[(i, cc)] = ex[cc] / tot
                acc = acc + phi_sv[(i, cc)] * (wp_sv @ s[cc])
            out[i] = h[i] + np.maximum(acc, 0.0)
    return out, {"phi_vs": phi_vs, "phi_sv": phi_sv, "symbolic_features": np.array(s_all)}
