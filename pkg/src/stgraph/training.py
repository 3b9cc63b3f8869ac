"""Adam training loop, evaluation and metric reports."""

from __future__ import annotations

import dataclasses
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from . import autodiff as ad
from .batch import GraphBatch
from .dataio import Dataset, save_checkpoint, symbolic_to_dict
from .metrics import macro_f1, per_class_ap, per_class_prf
from .model import ModelConfig, STMPNN
from .params import ParameterBank

log = logging.getLogger("stgraph.training")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 5
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dropout: float = 0.5
    seed: int = 0
    clip_norm: float | None = None
    pos_weight: float | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(self, params: ParameterBank, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


@dataclass
class MetricsReport:
    task: str
    num_samples: int = 0
    loss: float | None = None
    macro_f1: float | None = None
    per_type: dict[str, dict] = field(default_factory=dict)
    mean_ap: float | None = None
    per_class_ap: dict[int, float] = field(default_factory=dict)
    classes_without_positives: list[int] = field(default_factory=list)
    rare_class_ap: float | None = None
    loss_curve: list[float] = field(default_factory=list)
    validation_curve: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    wall_clock: float | None = None

    @property
    def score(self) -> float:
        """Headline metric: macro-F1 for node tasks, mAP for frame tasks."""
        return float(self.macro_f1 if self.task == "node" else self.mean_ap)

    def to_dict(self, include_timing: bool = False) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["per_class_ap"] = {str(k): v for k, v in self.per_class_ap.items()}
        if not include_timing:
            d.pop("wall_clock")
        return d


@dataclass
class Predictions:
    node_scores: dict[str, np.ndarray] = field(default_factory=dict)  # per type, (labeled rows, C)
    node_labels: dict[str, np.ndarray] = field(default_factory=dict)
    frame_scores: np.ndarray | None = None
    frame_labels: np.ndarray | None = None
    loss: float = 0.0


def _batch_labels(model: STMPNN, labels: list[np.ndarray]) -> np.ndarray:
    if model.task.kind == "node":
        return np.concatenate(labels) if labels else np.zeros(0, np.intp)
    return np.concatenate(labels, axis=0) if labels else np.zeros((0, model.task.frame_classes))


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield range(start, min(n, start + size))


def predict(model: STMPNN, params: ParameterBank, dataset: Dataset, batch_size: int = 64,
            threads: int = 1) -> Predictions:
    """Forward the whole dataset without dropout; results are in sample order."""
    arrays = params.leaves()

    def run(idx: range):
        graphs = [dataset.graphs[i] for i in idx]
        labels = [dataset.labels[i] for i in idx]
        batch = GraphBatch.from_graphs(graphs, model.registry)
        out = model.forward(batch, arrays)
        y = _batch_labels(model, labels)
        loss = model.loss(out, batch, y).item() * len(graphs)
        if model.task.kind == "node":
            scores = {}
            ys = {}
            for nt in model.task.node_classes:
                rows = y[batch.nodes_by_type[nt]]
                keep = rows >= 0
                scores[nt] = out.node_logits[nt].data[keep]
                ys[nt] = rows[keep]
            return scores, ys, loss
        return out.frame_logits.data, y, loss

    chunks = list(_chunks(len(dataset), batch_size))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]

    pred = Predictions()
    pred.loss = sum(r[2] for r in results) / max(len(dataset), 1)
    if model.task.kind == "node":
        for nt, c in model.task.node_classes.items():
            pred.node_scores[nt] = np.concatenate([r[0][nt] for r in results]) if results else np.zeros((0, c))
            pred.node_labels[nt] = np.concatenate([r[1][nt] for r in results]) if results else np.zeros(0, np.intp)
    else:
        c = model.task.frame_classes
        pred.frame_scores = np.concatenate([r[0] for r in results]) if results else np.zeros((0, c))
        pred.frame_labels = np.concatenate([r[1] for r in results]) if results else np.zeros((0, c))
    return pred


def report_from_predictions(model: STMPNN, pred: Predictions, num_samples: int,
                            rare_classes: list[int] | None = None) -> MetricsReport:
    rep = MetricsReport(task=model.task.kind, num_samples=num_samples, loss=pred.loss)
    if model.task.kind == "node":
        type_scores = []
        for nt in model.task.node_classes:
            y = pred.node_labels[nt]
            yhat = pred.node_scores[nt].argmax(axis=1) if len(y) else np.zeros(0, np.intp)
            table = per_class_prf(y, yhat)
            f1 = macro_f1(y, yhat) if len(y) else 0.0
            rep.per_type[nt] = {"macro_f1": f1, "accuracy": float(np.mean(y == yhat)) if len(y) else 0.0,
                                "per_class": {str(k): v for k, v in table.items()}}
            type_scores.append(f1)
        rep.macro_f1 = float(np.mean(type_scores)) if type_scores else 0.0
    else:
        aps, skipped = per_class_ap(pred.frame_scores, pred.frame_labels)
        rep.per_class_ap = aps
        rep.classes_without_positives = skipped
        rep.mean_ap = float(np.mean(list(aps.values()))) if aps else 0.0
        if rare_classes:
            rare = [aps[c] for c in rare_classes if c in aps]
            rep.rare_class_ap = float(np.mean(rare)) if rare else None
    return rep


def evaluate(model: STMPNN, params: ParameterBank, dataset: Dataset, threads: int = 1) -> MetricsReport:
    """Macro-F1 (node task) or per-frame mAP (frame task) on `dataset`."""
    if dataset.task.kind != model.task.kind:
        raise ValueError(f"dataset task {dataset.task.kind!r} does not match model heads {model.task.kind!r}")
    start = time.perf_counter()
    pred = predict(model, params, dataset, threads=threads)
    rep = report_from_predictions(model, pred, len(dataset), dataset.manifest.metadata.get("rare_classes"))
    rep.wall_clock = time.perf_counter() - start
    return rep


def _first_nonfinite(grads: Mapping[str, np.ndarray]) -> str | None:
    for name, g in grads.items():
        if not np.isfinite(g).all():
            return name
    return None


def train(
    train_set: Dataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    val_set: Dataset | None = None,
    out_dir=None,
    on_epoch: Callable[[int, float, MetricsReport | None], None] | None = None,
) -> tuple[ParameterBank, MetricsReport, STMPNN]:
    """Train end to end with Adam; returns (best parameters, report, model).

    With a validation set the returned parameters are those of the epoch
    with the best validation score; otherwise the final ones. The report is
    computed on the validation set when given, else on the training set.
    """
    start = time.perf_counter()
    model = STMPNN(train_set.registry, train_set.symbolic, model_config, train_set.task)
    params = model.init_params(train_config.seed)
    opt = Adam(params, train_config.learning_rate, train_config.beta1, train_config.beta2, train_config.eps)
    order_rng = np.random.default_rng([train_config.seed, 1])
    drop_rng = np.random.default_rng([train_config.seed, 2])
    eval_set = val_set if val_set is not None else train_set
    ckpt_dir = Path(out_dir) / "checkpoints" if out_dir is not None else None
    meta = {"model": model_config.to_dict(), "task": model.task.to_dict(), "train": train_config.to_dict(),
            "registry": model.registry.to_dict(),
            "symbolic": symbolic_to_dict(train_set.symbolic) if train_set.symbolic is not None else None}

    best = params.copy()
    best_score, best_epoch = -np.inf, None
    loss_curve, val_curve = [], []
    if val_set is not None:
        best_score = evaluate(model, params, val_set).score
        best_epoch = 0
    n = len(train_set)
    for epoch in range(1, train_config.epochs + 1):
        perm = order_rng.permutation(n)
        epoch_loss = 0.0
        for step, idx in enumerate(_chunks(n, train_config.batch_size)):
            members = perm[idx.start:idx.stop]
            graphs = [train_set.graphs[i] for i in members]
            batch = GraphBatch.from_graphs(graphs, model.registry)
            y = _batch_labels(model, [train_set.labels[i] for i in members])
            leaves = params.leaves()
            try:
                out = model.forward(batch, leaves, dropout=train_config.dropout, rng=drop_rng)
                loss = model.loss(out, batch, y, train_config.pos_weight)
                tape = ad.gradient(loss, leaves.values())
            except ad.NonFiniteError as exc:
                raise TrainingDiverged(f"epoch {epoch} step {step}: first non-finite tensor came from "
                                       f"'{exc.op}' (shape {exc.shape})") from exc
            grads = {name: tape[leaf] for name, leaf in leaves.items()}
            bad = _first_nonfinite(grads)
            if bad is not None:
                raise TrainingDiverged(f"epoch {epoch} step {step}: non-finite gradient for parameter '{bad}'")
            if train_config.clip_norm is not None:
                norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
                if norm > train_config.clip_norm:
                    grads = {k: g * (train_config.clip_norm / norm) for k, g in grads.items()}
            opt.step(grads)
            epoch_loss += loss.item() * len(members)
        loss_curve.append(epoch_loss / max(n, 1))
        rep = None
        if val_set is not None:
            rep = evaluate(model, params, val_set)
            val_curve.append(rep.score)
            if rep.score > best_score:
                best_score, best_epoch, best = rep.score, epoch, params.copy()
        log.info("epoch %d loss %.5f%s", epoch, loss_curve[-1],
                 f" val {val_curve[-1]:.4f}" if val_curve else "")
        if ckpt_dir is not None:
            save_checkpoint(ckpt_dir / f"epoch_{epoch:03d}.ckpt", params, {**meta, "epoch": epoch})
        if on_epoch is not None:
            on_epoch(epoch, loss_curve[-1], rep)

    if val_set is None:
        best, best_epoch = params, train_config.epochs
    report = evaluate(model, best, eval_set)
    report.loss_curve = loss_curve
    report.validation_curve = val_curve
    report.best_epoch = best_epoch
    report.wall_clock = time.perf_counter() - start
    if ckpt_dir is not None:
        save_checkpoint(Path(out_dir) / "best.ckpt", best, {**meta, "epoch": best_epoch})
    return best, report, model
