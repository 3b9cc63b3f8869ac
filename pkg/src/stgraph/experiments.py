"""Desk-scale ablation experiments on the shipped synthetic suites.

Each run generates a suite from a seed, trains with a desk preset, and
scores the held-out split. Results are cached per process so several
comparisons can share runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .batch import GraphBatch
from .model import ModelConfig, STMPNN, apply_ablations
from .params import ParameterBank
from .presets import get_preset
from .synthetic import SYNTHETIC_PRESETS, SyntheticSplits, generate_synthetic
from .training import MetricsReport, evaluate, predict, train

SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class RunOutcome:
    suite: str
    ablations: tuple[str, ...]
    overrides: tuple[tuple[str, object], ...]
    seed: int
    report: MetricsReport
    params: ParameterBank
    model: STMPNN
    seconds: float

    @property
    def score(self) -> float:
        return self.report.score


@lru_cache(maxsize=None)
def suite_data(suite: str, seed: int) -> SyntheticSplits:
    return generate_synthetic(SYNTHETIC_PRESETS[suite], seed)


_SUITE_PRESET = {"node": "desk-node", "distractor": "desk-distractor", "frame": "desk-frame",
                 "two_hop": "desk-two-hop"}


@lru_cache(maxsize=None)
def run(suite: str, seed: int, ablations: tuple[str, ...] = (),
        overrides: tuple[tuple[str, object], ...] = ()) -> RunOutcome:
    """Train one configuration on `suite` (data and init both from `seed`)."""
    preset = get_preset(_SUITE_PRESET[suite])
    cfg = apply_ablations(preset.model.replace(**dict(overrides)), ablations)
    data = suite_data(suite, seed)
    start = time.perf_counter()
    params, _, model = train(data.train, cfg, preset.train.replace(seed=seed))
    report = evaluate(model, params, data.test)
    return RunOutcome(suite, ablations, overrides, seed, report, params, model, time.perf_counter() - start)


def mean_score(suite: str, seeds: Sequence[int] = SEEDS, ablations: tuple[str, ...] = (),
               overrides: tuple[tuple[str, object], ...] = ()) -> float:
    return float(np.mean([run(suite, s, ablations, overrides).score for s in seeds]))


def mean_rare_ap(suite: str, seeds: Sequence[int] = SEEDS, ablations: tuple[str, ...] = ()) -> float:
    return float(np.mean([run(suite, s, ablations).report.rare_class_ap for s in seeds]))


# The paper-style local-feature baseline: no messages and no label fusion.
BASELINE = ("no-messages", "no-semantic")


def zeroed_fusion_matches_visual_only(outcome: RunOutcome) -> bool:
    """With the symbol-to-visual projection zeroed, the trained model must
    produce exactly the predictions of the same weights without the module."""
    model = outcome.model
    zeroed = outcome.params.copy()
    zeroed["semantic.W_p_sv"] = np.zeros_like(zeroed["semantic.W_p_sv"])
    visual_cfg: ModelConfig = model.config.replace(semantic=False)
    visual_model = STMPNN(model.registry, model.symbolic, visual_cfg, model.task)
    visual_params = ParameterBank({k: v for k, v in zeroed.items() if not k.startswith("semantic.")})
    data = suite_data(outcome.suite, outcome.seed).test
    a = predict(model, zeroed, data)
    b = predict(visual_model, visual_params, data)
    if model.task.kind == "frame":
        return bool(np.array_equal(a.frame_scores, b.frame_scores))
    return all(np.array_equal(a.node_scores[t], b.node_scores[t]) for t in a.node_scores)


def inspect_graph(model: STMPNN, params: ParameterBank, graph) -> dict:
    """Per-layer attention and both association weights for one graph."""
    batch = GraphBatch.from_graphs([graph], model.registry)
    out = model.forward(batch, params.leaves())
    etypes = [e.name for e in model.registry.edge_types]
    ids = [n.id for n in graph.nodes]  # batch rows follow graph.nodes
    layers = []
    for layer, a in enumerate(out.state.attention):
        layers.append({
            "layer": layer,
            "edges": [{"sender": ids[s], "receiver": ids[r], "type": etypes[t], "weight": float(w)}
                      for s, r, t, w in zip(batch.senders, batch.receivers, batch.edge_type, a)],
        })
    doc = {"num_nodes": batch.num_nodes, "num_edges": batch.num_edges, "attention": layers,
           "phi_vs": [], "phi_sv": []}
    trace = out.semantic
    if trace is not None:
        labels = model.symbolic.labels
        for key, values in (("phi_vs", trace.phi_vs), ("phi_sv", trace.phi_sv)):
            doc[key] = [{"node": ids[n], "symbol": labels[s], "weight": float(w)}
                        for n, s, w in zip(trace.pair_nodes, trace.pair_symbols, values)]
    return doc
