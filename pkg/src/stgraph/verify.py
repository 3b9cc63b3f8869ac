"""Self-checks: oracle equivalence, gradient checks and model invariants.

Every check returns a :class:`CheckResult`; ``run_all`` runs the suite used
by ``stgraph verify``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .batch import GraphBatch
from .graph import (
    DEFAULT_EDGE_TYPES, Edge, Node, SymbolicGraph, TypeRegistry, VisualSTGraph, normalize_adjacency, validate,
)
from .model import ModelConfig, STMPNN, TaskSpec
from .params import ParameterBank
from .semantic import SemanticConfig, init_semantic_params, semantic_forward, semantic_forward_naive
from .visual import VisualConfig, init_visual_params, visual_forward, visual_forward_naive


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" {self.detail}" if self.detail else ""
        return f"{status} {self.name}: measured={self.measured:.3g} threshold={self.threshold:.3g}{extra} ({self.seconds:.1f}s)"


def _timed(fn: Callable[..., CheckResult]) -> Callable[..., CheckResult]:
    def run(*args, **kwargs) -> CheckResult:
        start = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - start
        return res
    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


# ---------------------------------------------------------------- instances

def random_registry(rng: np.random.Generator) -> TypeRegistry:
    """Default five edge types with per-type attribute widths drawn at random."""
    return TypeRegistry(
        node_types=("actor", "object"),
        edge_types=DEFAULT_EDGE_TYPES,
        node_dims={"actor": int(rng.integers(2, 6)), "object": int(rng.integers(2, 6))},
        edge_dims={e.name: int(rng.integers(1, 5)) for e in DEFAULT_EDGE_TYPES},
    )


def random_graph(rng: np.random.Generator, registry: TypeRegistry, num_nodes: int, num_frames: int,
                 keep: float = 0.7, shuffle: bool = True) -> VisualSTGraph:
    """Random typed graph: every permitted pair becomes an edge with prob `keep`.

    Node ids are not ordered by frame and edges come in random order when
    `shuffle` is set, so nothing downstream may rely on sorted input.
    """
    frames = rng.integers(0, num_frames, size=num_nodes)
    types = rng.choice(registry.node_types, size=num_nodes)
    nodes = tuple(Node(i, str(types[i]), int(frames[i]), rng.normal(size=registry.node_dims[str(types[i])]))
                  for i in range(num_nodes))
    edges = []
    for et in registry.edge_types:
        for s in nodes:
            for r in nodes:
                if s.id == r.id or s.type != et.sender or r.type != et.receiver:
                    continue
                ok = (r.frame - s.frame == 1) if et.temporal else (r.frame == s.frame)
                if ok and rng.random() < keep:
                    edges.append(Edge(s.id, r.id, et.name, rng.normal(size=registry.edge_dims[et.name])))
    if shuffle:
        edges = [edges[k] for k in rng.permutation(len(edges))]
    return VisualSTGraph(num_frames, nodes, tuple(edges))


def random_symbolic(rng: np.random.Generator, num_symbols: int, embedding_dim: int,
                    node_types: Sequence[str] = ("actor", "object")) -> SymbolicGraph:
    counts = rng.integers(0, 5, size=(num_symbols, num_symbols)).astype(np.float64)
    adj = counts + counts.T
    np.fill_diagonal(adj, 0.0)
    bip = {}
    for nt in node_types:
        size = int(rng.integers(1, num_symbols + 1))
        bip[nt] = tuple(sorted(rng.choice(num_symbols, size=size, replace=False).tolist()))
    return SymbolicGraph(tuple(f"s{k}" for k in range(num_symbols)), rng.normal(size=(num_symbols, embedding_dim)),
                         adj, bip)


def randomize(arrays, rng: np.random.Generator, scale: float = 0.5) -> ParameterBank:
    """Replace every array by N(0, scale^2) noise of the same shape (no zero vectors)."""
    return ParameterBank({k: scale * rng.normal(size=np.shape(v)) for k, v in arrays.items()})


def _leaves(bank: ParameterBank) -> dict[str, ad.Tensor]:
    return bank.leaves()


def _max_abs(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        return float("inf")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


# ----------------------------------------------------------------- oracles

@_timed
def check_oracle_equivalence(num_graphs: int = 100, seed: int = 0, tol: float = 1e-10) -> CheckResult:
    """Batched visual and semantic passes against their loop-based references."""
    rng = np.random.default_rng(seed)
    worst, where = 0.0, ""
    seen_types: set[str] = set()
    made = 0
    while made < num_graphs:
        registry = random_registry(rng)
        size = min(int(rng.integers(1, 4)), num_graphs - made)
        graphs = [random_graph(rng, registry, int(rng.integers(3, 21)), int(rng.integers(1, 5))) for _ in range(size)]
        made += size
        for g in graphs:
            seen_types.update(e.type for e in g.edges)
        batch = GraphBatch.from_graphs(graphs, registry)
        vcfg = VisualConfig(num_layers=int(rng.integers(1, 4)), hidden_dim=int(rng.integers(2, 6)),
                            beta=int(rng.integers(0, 2)), lambda_v=int(rng.integers(0, 2)),
                            lambda_e=int(rng.integers(0, 2)), attention=bool(rng.random() < 0.8))
        params = randomize(init_visual_params(registry, vcfg, 0), rng)
        state = visual_forward(batch, _leaves(params), vcfg)
        h_ref, he_ref, a_ref = visual_forward_naive(batch, dict(params.items()), vcfg)
        for label, got, ref in (("nodes", state.node_matrix.data, np.array(h_ref)),
                                ("edges", state.edge_matrix.data, np.array(he_ref).reshape(-1, vcfg.hidden_dim)),
                                ("attention", np.concatenate(state.attention), np.concatenate(a_ref))):
            err = _max_abs(got, ref)
            if err > worst:
                worst, where = err, f"visual {label}"

        sym = random_symbolic(rng, int(rng.integers(1, 5)), int(rng.integers(1, 4)))
        scfg = SemanticConfig(enabled=True, symbolic_dim=int(rng.integers(1, 4)), gcn_layers=int(rng.integers(1, 3)),
                              adjacency_norm=str(rng.choice(["sym", "row", "none"])),
                              scope=str(rng.choice(["graph", "frame"])))
        sparams = randomize(init_semantic_params(sym, scfg, vcfg.hidden_dim, 0), rng)
        h_in = state.node_matrix.data
        out, trace = semantic_forward(batch, ad.constant(h_in), sym, _leaves(sparams), scfg,
                                      normalize_adjacency(sym.adjacency, scfg.adjacency_norm))
        ref_out, ref_trace = semantic_forward_naive(batch, list(h_in), sym, dict(sparams.items()), scfg)
        checks = [("semantic nodes", out.data, np.array(ref_out))]
        if trace is not None:
            pairs = list(zip(trace.pair_nodes.tolist(), trace.pair_symbols.tolist()))
            checks.append(("phi_vs", trace.phi_vs, [ref_trace["phi_vs"][p] for p in pairs]))
            checks.append(("phi_sv", trace.phi_sv, [ref_trace["phi_sv"][p] for p in pairs]))
            checks.append(("symbol features", trace.symbolic_features, ref_trace["symbolic_features"]))
        for label, got, ref in checks:
            err = _max_abs(got, ref)
            if err > worst:
                worst, where = err, label
    missing = [e.name for e in DEFAULT_EDGE_TYPES if e.name not in seen_types]
    detail = f"worst at {where}" if where else ""
    if missing:
        detail += f" edge types never sampled: {missing}"
    return CheckResult("oracle-equivalence", worst <= tol and not missing, worst, tol, detail.strip())


# --------------------------------------------------------------- gradients

def gradient_instance(seed: int = 0, task: str = "node", size: str = "small"):
    """Instance for finite differences; returns (model, batch, labels, random params).

    "small" is 3 nodes over 2 frames with 3 symbols: an actor and an object
    in frame 0, an actor in frame 1, linked by both spatial directions and
    the actor track. Every attention neighborhood there has one sender, so
    attention weights are constant; "wide" (6 nodes, all five edge types,
    multi-sender neighborhoods) exercises them.
    """
    rng = np.random.default_rng(seed)
    registry = TypeRegistry(("actor", "object"), DEFAULT_EDGE_TYPES, {"actor": 3, "object": 2},
                            {e.name: 2 for e in DEFAULT_EDGE_TYPES})
    if size == "small":
        layout = [("actor", 0), ("object", 0), ("actor", 1)]
        links = [(1, 0, "obj-act-s"), (0, 1, "act-obj-s"), (0, 2, "act-act-t")]
    elif size == "wide":
        layout = [("actor", 0), ("object", 0), ("object", 0), ("actor", 1), ("object", 1), ("object", 1)]
        links = [(1, 0, "obj-act-s"), (2, 0, "obj-act-s"), (0, 1, "act-obj-s"), (1, 2, "obj-obj-s"),
                 (2, 1, "obj-obj-s"), (0, 3, "act-act-t"), (4, 3, "obj-act-s"), (5, 3, "obj-act-s"),
                 (1, 4, "obj-obj-t"), (2, 4, "obj-obj-t"), (2, 5, "obj-obj-t"), (3, 5, "act-obj-s")]
    else:
        raise ValueError(f"unknown instance size {size!r}")
    nodes = tuple(Node(i, t, f, rng.normal(size=registry.node_dims[t])) for i, (t, f) in enumerate(layout))
    edges = tuple(Edge(s, r, t, rng.normal(size=2)) for s, r, t in links)
    graph = VisualSTGraph(2, nodes, edges)
    sym = SymbolicGraph(("a", "b", "c"), rng.normal(size=(3, 2)),
                        np.array([[0, 2, 1], [2, 0, 3], [1, 3, 0]], dtype=float),
                        {"actor": (0, 1, 2), "object": (1, 2)})
    cfg = ModelConfig(num_layers=2, hidden_dim=3, symbolic_dim=2, gcn_layers=1)
    if task == "node":
        spec = TaskSpec("node", {"actor": 3, "object": 2})
        labels = rng.integers(0, 2, size=len(nodes))
        labels[[k for k, (t, _) in enumerate(layout) if t == "actor"]] = 2
    else:
        spec = TaskSpec("frame", frame_classes=3)
        labels = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    model = STMPNN(registry, sym, cfg, spec)
    params = randomize(model.init_params(seed), rng)
    batch = GraphBatch.from_graphs([graph], registry)
    return model, batch, labels, params


def gradient_errors(model: STMPNN, batch: GraphBatch, labels: np.ndarray, params: ParameterBank,
                    step: float = 1e-5, floor: float = 1e-8, pos_weight: float | None = None,
                    stop_above: float | None = None) -> dict[str, float]:
    """Worst relative error between analytic and central-difference partials, per parameter.

    With `stop_above`, returns as soon as one entry's error exceeds it.
    """
    def loss_value(bank: ParameterBank) -> float:
        return model.loss(model.forward(batch, _leaves(bank)), batch, labels, pos_weight).item()

    leaves = _leaves(params)
    loss = model.loss(model.forward(batch, leaves), batch, labels, pos_weight)
    tape = ad.gradient(loss, leaves.values())
    errors = {}
    for name, leaf in leaves.items():
        analytic = tape[leaf]
        worst = 0.0
        base = params[name]
        for idx in np.ndindex(base.shape):
            orig = base[idx]
            base[idx] = orig + step
            up = loss_value(params)
            base[idx] = orig - step
            down = loss_value(params)
            base[idx] = orig
            numeric = (up - down) / (2 * step)
            a = analytic[idx]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
            if stop_above is not None and worst > stop_above:
                errors[name] = worst
                return errors
        errors[name] = worst
    return errors


@_timed
def check_gradients(seed: int = 0, rtol: float = 1e-4) -> CheckResult:
    """End-to-end finite differences through both heads, every parameter entry."""
    worst, where = 0.0, ""
    with ad.checked(True):
        for size in ("small", "wide"):
            for task in ("node", "frame"):
                model, batch, labels, params = gradient_instance(seed, task, size)
                for name, err in gradient_errors(model, batch, labels, params).items():
                    if err > worst:
                        worst, where = err, f"{size}/{task}:{name}"
    return CheckResult("gradient-check", worst < rtol, worst, rtol, f"worst at {where}")


FAULT_OPS = ("matmul", "gather_rows", "scatter_add", "segment_softmax", "relu", "leaky_relu", "concat",
             "scale_rows", "row_sum", "block_diag_apply", "log_softmax_rows", "softplus")


@_timed
def check_fault_injection(seed: int = 0, rtol: float = 1e-4) -> CheckResult:
    """A sign-flipped backward in any op used by the model must fail the gradient check."""
    missed = []
    for op in FAULT_OPS:
        caught = False
        for task in ("node", "frame"):
            model, batch, labels, params = gradient_instance(seed, task, "wide")
            with ad.inject_fault(op):
                errs = gradient_errors(model, batch, labels, params, stop_above=rtol)
            if max(errs.values()) >= rtol:
                caught = True
                break
        if not caught:
            missed.append(op)
    return CheckResult("fault-injection", not missed, float(len(missed)), 0.0,
                       f"undetected: {missed}" if missed else f"{len(FAULT_OPS)} faults detected")


# ------------------------------------------------------------ normalization

def _segment_sums(values: np.ndarray, segments: np.ndarray, count: int) -> np.ndarray:
    out = np.zeros(count)
    np.add.at(out, segments, values)
    return out[np.bincount(segments, minlength=count) > 0]


@_timed
def check_normalization(num_instances: int = 1000, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    """Attention and both association weights sum to one per normalization domain."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(num_instances):
        registry = random_registry(rng)
        kind = k % 4
        if kind == 0:  # no edges at all
            g = random_graph(rng, registry, int(rng.integers(1, 6)), int(rng.integers(1, 3)), keep=0.0)
        elif kind == 1:  # exactly one incoming edge somewhere
            g = random_graph(rng, registry, int(rng.integers(2, 8)), int(rng.integers(1, 3)), keep=0.6)
            g = VisualSTGraph(g.num_frames, g.nodes, g.edges[:1])
        else:
            g = random_graph(rng, registry, int(rng.integers(1, 12)), int(rng.integers(1, 4)),
                             keep=float(rng.uniform(0.1, 1.0)))
        batch = GraphBatch.from_graphs([g], registry)
        scale = float(rng.choice([0.1, 1.0, 10.0, 50.0]))
        vcfg = VisualConfig(num_layers=int(rng.integers(1, 3)), hidden_dim=3, attention=bool(rng.random() < 0.85))
        params = randomize(init_visual_params(registry, vcfg, 0), rng, scale)
        state = visual_forward(batch, _leaves(params), vcfg)
        for a in state.attention:
            if a.size:
                sums = _segment_sums(a, batch.attention_segments, batch.num_attention_segments)
                worst = max(worst, float(np.max(np.abs(sums - 1.0))))
        sym = random_symbolic(rng, int(rng.integers(1, 5)), 2)
        scfg = SemanticConfig(enabled=True, symbolic_dim=2, scope=str(rng.choice(["graph", "frame"])))
        sparams = randomize(init_semantic_params(sym, scfg, 3, 0), rng, scale)
        _, trace = semantic_forward(batch, state.node_matrix, sym, _leaves(sparams), scfg)
        if trace is not None:
            for phi in (trace.phi_vs, trace.phi_sv):
                sums = _segment_sums(phi, trace.pair_nodes, batch.num_nodes)
                worst = max(worst, float(np.max(np.abs(sums - 1.0))))
    return CheckResult("normalization", worst <= tol, worst, tol, f"{num_instances} instances")


# ------------------------------------------------------------- invariants

def _perturb_edge_attrs(g: VisualSTGraph, rng: np.random.Generator) -> VisualSTGraph:
    edges = tuple(Edge(e.sender, e.receiver, e.type, e.attr + rng.normal(scale=3.0, size=e.attr.shape))
                  for e in g.edges)
    return VisualSTGraph(g.num_frames, g.nodes, edges)


def _invariant_instance(rng: np.random.Generator):
    registry = random_registry(rng)
    g = random_graph(rng, registry, int(rng.integers(6, 14)), int(rng.integers(2, 4)), keep=0.8)
    return registry, g


@_timed
def check_ablation_switches(num_trials: int = 20, seed: int = 0) -> CheckResult:
    """Exact invariances implied by the beta / lambda flags.

    beta=0: one-layer attention ignores edge attributes. lambda_e=0: the
    pre-attention message content ignores them. beta=lambda_e=0: every
    layer's messages and node features ignore them. lambda_v=lambda_e=0:
    outputs equal the first-layer receiver projection (pure pass-through).
    """
    rng = np.random.default_rng(seed)
    failures = []
    for trial in range(num_trials):
        registry, g = _invariant_instance(rng)
        g2 = _perturb_edge_attrs(g, rng)
        b1, b2 = GraphBatch.from_graphs([g], registry), GraphBatch.from_graphs([g2], registry)

        cfg = VisualConfig(num_layers=1, hidden_dim=4, beta=0)
        p = _leaves(randomize(init_visual_params(registry, cfg, 0), rng))
        if not all(np.array_equal(x, y) for x, y in zip(visual_forward(b1, p, cfg).attention,
                                                        visual_forward(b2, p, cfg).attention)):
            failures.append(f"beta=0 attention (trial {trial})")

        cfg = VisualConfig(num_layers=1, hidden_dim=4, lambda_e=0)
        p = _leaves(randomize(init_visual_params(registry, cfg, 0), rng))
        c1 = [params_content(b, p, cfg) for b in (b1, b2)]
        if not np.array_equal(*c1):
            failures.append(f"lambda_e=0 message content (trial {trial})")

        cfg = VisualConfig(num_layers=3, hidden_dim=4, beta=0, lambda_e=0)
        p = _leaves(randomize(init_visual_params(registry, cfg, 0), rng))
        s1, s2 = visual_forward(b1, p, cfg), visual_forward(b2, p, cfg)
        if not (np.array_equal(s1.node_matrix.data, s2.node_matrix.data)
                and np.array_equal(s1.edge_matrix.data, s2.edge_matrix.data)):
            failures.append(f"beta=lambda_e=0 features (trial {trial})")

        cfg = VisualConfig(num_layers=3, hidden_dim=4, lambda_v=0, lambda_e=0)
        bank = randomize(init_visual_params(registry, cfg, 0), rng)
        s = visual_forward(b1, _leaves(bank), cfg)
        if not np.array_equal(s.node_matrix.data, pass_through(b1, bank, cfg)):
            failures.append(f"lambda_v=lambda_e=0 pass-through (trial {trial})")
        if s.edge_matrix.data.size and np.any(s.edge_matrix.data != 0):
            failures.append(f"lambda_v=lambda_e=0 messages nonzero (trial {trial})")
    return CheckResult("ablation-switches", not failures, float(len(failures)), 0.0,
                       "; ".join(failures[:3]) or f"{num_trials} trials exact")


def params_content(batch: GraphBatch, params, cfg: VisualConfig) -> np.ndarray:
    """First-layer message content before attention weighting, (E, d)."""
    out = np.zeros((batch.num_edges, cfg.hidden_dim))
    send = np.zeros((batch.num_nodes, cfg.hidden_dim))
    for nt in batch.registry.node_types:
        idx = batch.nodes_by_type[nt]
        send[idx] = batch.node_attr[nt] @ params[f"visual.0.W_s.{nt}"].data.T
    for et in batch.registry.edge_types:
        idx = batch.edges_by_type[et.name]
        e_proj = batch.edge_attr[et.name] @ params[f"visual.0.W_e.{et.name}"].data.T
        out[idx] = cfg.lambda_v * send[batch.senders[idx]] + cfg.lambda_e * e_proj
    return out


def pass_through(batch: GraphBatch, bank: ParameterBank, cfg: VisualConfig) -> np.ndarray:
    """Node features when no message carries anything: the first receiver projection."""
    out = np.zeros((batch.num_nodes, cfg.hidden_dim))
    for nt in batch.registry.node_types:
        idx = batch.nodes_by_type[nt]
        out[idx] = batch.node_attr[nt] @ bank[f"visual.0.W_r.{nt}"].T
    return out


@_timed
def check_typed_isolation(num_trials: int = 20, seed: int = 0) -> CheckResult:
    """Perturbing one edge type's weights leaves first-layer messages of other types untouched."""
    rng = np.random.default_rng(seed)
    failures = []
    for trial in range(num_trials):
        registry, g = _invariant_instance(rng)
        batch = GraphBatch.from_graphs([g], registry)
        cfg = VisualConfig(num_layers=1, hidden_dim=4)
        bank = randomize(init_visual_params(registry, cfg, 0), rng)
        base = visual_forward(batch, _leaves(bank), cfg).edge_matrix.data
        for et in registry.edge_types:
            other = bank.copy()
            for kind in ("W_e", "v_a"):
                name = f"visual.0.{kind}.{et.name}"
                other[name] = other[name] + rng.normal(size=other[name].shape)
            moved = visual_forward(batch, _leaves(other), cfg).edge_matrix.data
            rest = batch.edge_type != registry.edge_index(et.name)
            if not np.array_equal(base[rest], moved[rest]):
                failures.append(f"{et.name} leaked (trial {trial})")
            own = ~rest
            if own.any() and np.array_equal(base[own], moved[own]):
                failures.append(f"{et.name} had no effect on its own edges (trial {trial})")
    return CheckResult("typed-isolation", not failures, float(len(failures)), 0.0,
                       "; ".join(failures[:3]) or f"{num_trials} trials exact")


def relabel(g: VisualSTGraph, perm: np.ndarray) -> VisualSTGraph:
    """Node i becomes node perm[i]; nodes and edges are re-sorted by the new ids."""
    nodes = sorted((Node(int(perm[n.id]), n.type, n.frame, n.attr) for n in g.nodes), key=lambda n: n.id)
    edges = [Edge(int(perm[e.sender]), int(perm[e.receiver]), e.type, e.attr) for e in g.edges]
    order = {name: k for k, name in enumerate(e.name for e in DEFAULT_EDGE_TYPES)}
    edges.sort(key=lambda e: (e.receiver, order.get(e.type, 0), e.sender))
    return VisualSTGraph(g.num_frames, tuple(nodes), tuple(edges))


@_timed
def check_permutation(num_trials: int = 20, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    """Relabeling node ids permutes node features and attention accordingly."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_trials):
        registry, g = _invariant_instance(rng)
        perm = rng.permutation(len(g.nodes))
        g2 = relabel(g, perm)
        cfg = VisualConfig(num_layers=2, hidden_dim=4)
        bank = randomize(init_visual_params(registry, cfg, 0), rng)
        sym = random_symbolic(rng, 3, 2)
        scfg = SemanticConfig(enabled=True, symbolic_dim=2)
        sbank = randomize(init_semantic_params(sym, scfg, 4, 0), rng)
        leaves = {**_leaves(bank), **_leaves(sbank)}
        outs = []
        for graph in (g, g2):
            batch = GraphBatch.from_graphs([graph], registry)
            st = visual_forward(batch, leaves, cfg)
            h, _ = semantic_forward(batch, st.node_matrix, sym, leaves, scfg)
            # key edges by endpoints in the original labeling
            inv = np.argsort(perm) if graph is g2 else np.arange(len(perm))
            keys = [(int(inv[s]), int(inv[r]), int(t)) for s, r, t in zip(batch.senders, batch.receivers, batch.edge_type)]
            edge_feats = dict(zip(keys, st.edge_matrix.data))
            attn = dict(zip(keys, st.attention[-1]))
            outs.append((h.data, edge_feats, attn))
        (h1, e1, a1), (h2, e2, a2) = outs
        worst = max(worst, _max_abs(h1, h2[perm]))
        for k in e1:
            worst = max(worst, _max_abs(e1[k], e2[k]), abs(a1[k] - a2[k]))
    return CheckResult("permutation-equivariance", worst <= tol, worst, tol, f"{num_trials} relabelings")


@_timed
def check_zero_edge_graph(seed: int = 0) -> CheckResult:
    """Without edges every layer keeps the first receiver projection."""
    rng = np.random.default_rng(seed)
    registry = random_registry(rng)
    g = random_graph(rng, registry, 7, 3, keep=0.0)
    batch = GraphBatch.from_graphs([g], registry)
    cfg = VisualConfig(num_layers=4, hidden_dim=5)
    bank = randomize(init_visual_params(registry, cfg, 0), rng)
    out = visual_forward(batch, _leaves(bank), cfg).node_matrix.data
    ref = np.array(visual_forward_naive(batch, dict(bank.items()), cfg)[0])
    expected = pass_through(batch, bank, cfg)
    err = _max_abs(out, expected)
    # the loop reference multiplies per node, so it may differ in the last bit
    ref_err = _max_abs(ref, expected)
    ok = err == 0.0 and ref_err <= 1e-12 and not validate(g, registry)
    return CheckResult("zero-edge-graph", ok, err, 0.0, f"loop reference within {ref_err:.1e}")


CHECKS: dict[str, Callable[..., CheckResult]] = {
    "oracle": check_oracle_equivalence,
    "gradients": check_gradients,
    "normalization": check_normalization,
    "ablation": check_ablation_switches,
    "isolation": check_typed_isolation,
    "permutation": check_permutation,
    "zero-edge": check_zero_edge_graph,
    "fault-injection": check_fault_injection,
}


def run_all(seed: int = 0, only: Sequence[str] | None = None) -> list[CheckResult]:
    names = list(only) if only else list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks {unknown}; choose from {sorted(CHECKS)}")
    return [CHECKS[n](seed=seed) for n in names]
