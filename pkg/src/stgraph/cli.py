"""Command-line entry point: ``stgraph generate|train|eval|verify|inspect``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .config import ConfigError, RunConfig, load_config
from .dataio import (
    DataIOError, Dataset, load_checkpoint, load_dataset, load_graph, load_registry, load_symbolic,
    symbolic_from_dict,
)
from .experiments import inspect_graph
from .graph import GraphError, TypeRegistry
from .model import ABLATIONS, ModelConfig, ModelConfigError, STMPNN, TaskSpec
from .presets import PRESETS
from .synthetic import SyntheticConfigError, generate_synthetic, write_synthetic
from .training import TrainingDiverged, evaluate, train
from .verify import CHECKS, run_all

log = logging.getLogger("stgraph")

EXIT_FAILURE = 1
EXIT_USAGE = 2


class CommandError(Exception):
    pass


def _dump(obj, path: Path | None = None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return text


def _config(args) -> RunConfig:
    return load_config(args.config, preset=args.preset, seed=args.seed, ablate=args.ablate, threads=args.threads)


def _echo_config(cfg: RunConfig, out: Path) -> None:
    _dump(cfg.to_dict(), out / "config.json")


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CommandError(f"cannot create output directory {out}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise CommandError(f"output directory {out} is not writable")
    return out


def _dataset_stats(ds: Dataset) -> dict:
    edges: dict[str, int] = {}
    for g in ds.graphs:
        for e in g.edges:
            edges[e.type] = edges.get(e.type, 0) + 1
    stats = {"samples": len(ds), "nodes": sum(len(g.nodes) for g in ds.graphs),
             "frames": sum(g.num_frames for g in ds.graphs), "edges_by_type": dict(sorted(edges.items()))}
    if ds.task.kind == "node":
        y = np.concatenate(ds.labels)
        stats["label_counts"] = {str(c): int(n) for c, n in enumerate(np.bincount(y[y >= 0]))}
    else:
        stats["label_counts"] = {str(c): int(n) for c, n in enumerate(np.sum(np.concatenate(ds.labels), axis=0))}
    return stats


def cmd_generate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, "data")
    splits = generate_synthetic(cfg.data.synthetic, cfg.seed)
    paths = write_synthetic(splits, out)
    _echo_config(cfg, out)
    report = {"manifests": {k: str(v) for k, v in paths.items()},
              "train": _dataset_stats(splits.train), "test": _dataset_stats(splits.test)}
    sys.stdout.write(_dump(report))
    return 0


def _datasets(cfg: RunConfig) -> tuple[Dataset, Dataset | None, Dataset | None]:
    d = cfg.data
    if d.train_manifest:
        train_ds = load_dataset(d.train_manifest)
        val = load_dataset(d.val_manifest) if d.val_manifest else None
        test = load_dataset(d.test_manifest) if d.test_manifest else None
        return train_ds, val, test
    splits = generate_synthetic(d.synthetic, cfg.seed)
    log.info("no train manifest given; generated synthetic %s data in memory", d.synthetic.task)
    return splits.train, None, splits.test


def cmd_train(args) -> int:
    cfg = _config(args)
    for key in ("train_manifest", "val_manifest", "test_manifest"):
        if getattr(args, key):
            setattr(cfg.data, key, getattr(args, key))
    out = _out_dir(args, "run")
    _echo_config(cfg, out)
    train_ds, val_ds, test_ds = _datasets(cfg)
    start = time.perf_counter()
    params, report, model = train(train_ds, cfg.effective_model, cfg.effective_train, val_ds, out)
    metrics = {"train": report.to_dict()}
    if test_ds is not None:
        metrics["test"] = evaluate(model, params, test_ds, threads=cfg.threads).to_dict()
    _dump(metrics, out / "metrics.json")
    _dump({"train_seconds": time.perf_counter() - start}, out / "timing.json")
    summary = {"checkpoint": str(out / "best.ckpt"), "train_score": report.score}
    if "test" in metrics:
        summary["test_score"] = metrics["test"]["macro_f1" if model.task.kind == "node" else "mean_ap"]
    sys.stdout.write(_dump(summary))
    return 0


def _model_from_checkpoint(path) -> tuple[STMPNN, dict, object]:
    params, meta = load_checkpoint(path)
    try:
        registry = TypeRegistry.from_dict(meta["registry"])
        cfg = ModelConfig(**meta["model"])
        task = TaskSpec.from_dict(meta["task"])
    except (KeyError, TypeError) as exc:
        raise CommandError(f"checkpoint {path} lacks model metadata ({exc})") from None
    sym = symbolic_from_dict(meta["symbolic"]) if meta.get("symbolic") else None
    model = STMPNN(registry, sym, cfg, task)
    expected = model.expected_shapes()
    diffs = [f"{k}: checkpoint {params.shapes().get(k)} vs model {v}"
             for k, v in expected.items() if params.shapes().get(k) != v]
    diffs += [f"{k}: unexpected in checkpoint" for k in params.names() if k not in expected]
    if diffs:
        raise CommandError("checkpoint does not match its model config: " + "; ".join(diffs))
    return model, meta, params


def _check_compatible(model: STMPNN, ds: Dataset) -> None:
    diffs = []
    if ds.registry != model.registry:
        for t in model.registry.node_types:
            a, b = model.registry.node_dims.get(t), ds.registry.node_dims.get(t)
            if a != b:
                diffs.append(f"node type {t!r} attribute dim: checkpoint {a} vs data {b}")
        for e in model.registry.edge_types:
            a, b = model.registry.edge_dims.get(e.name), ds.registry.edge_dims.get(e.name)
            if a != b:
                diffs.append(f"edge type {e.name!r} attribute dim: checkpoint {a} vs data {b}")
        extra = set(ds.registry.node_types) ^ set(model.registry.node_types)
        extra |= {e.name for e in ds.registry.edge_types} ^ {e.name for e in model.registry.edge_types}
        if extra:
            diffs.append(f"type sets differ: {sorted(extra)}")
    mt, dt = model.task, ds.task
    if mt.kind != dt.kind:
        diffs.append(f"task kind: checkpoint {mt.kind} vs data {dt.kind}")
    elif mt.kind == "frame" and mt.frame_classes != dt.frame_classes:
        diffs.append(f"frame classes: checkpoint head {mt.frame_classes} vs data {dt.frame_classes}")
    elif mt.kind == "node":
        for t in set(mt.node_classes) | set(dt.node_classes):
            if mt.node_classes.get(t) != dt.node_classes.get(t):
                diffs.append(f"{t} classes: checkpoint head {mt.node_classes.get(t)} vs data {dt.node_classes.get(t)}")
    if model.config.semantic and ds.symbolic is not None and ds.symbolic.labels != model.symbolic.labels:
        diffs.append(f"symbol count: checkpoint {len(model.symbolic.labels)} vs data {len(ds.symbolic.labels)}")
    if diffs:
        raise CommandError("checkpoint and data disagree: " + "; ".join(diffs))


def cmd_eval(args) -> int:
    model, _, params = _model_from_checkpoint(args.checkpoint)
    manifest = args.manifest
    if manifest is None:
        manifest = _config(args).data.test_manifest
    if manifest is None:
        raise CommandError("eval needs --manifest (or data.test_manifest in the config)")
    ds = load_dataset(manifest)
    _check_compatible(model, ds)
    threads = args.threads or 1
    report = evaluate(model, params, ds, threads=threads)
    text = _dump(report.to_dict(), Path(args.out) / "metrics.json" if args.out else None)
    sys.stdout.write(text)
    return 0


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else 0
    fault = ad.inject_fault(args.inject_fault) if args.inject_fault else nullcontext()
    with fault:
        results = run_all(seed, args.only or None)
    for r in results:
        print(r.line())
    if args.out:
        _dump({"seed": seed, "checks": [r.__dict__ for r in results]}, Path(args.out) / "verify.json")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAILURE if failed else 0


def cmd_inspect(args) -> int:
    if args.checkpoint:
        model, _, params = _model_from_checkpoint(args.checkpoint)
    else:
        if not args.registry:
            raise CommandError("inspect needs --checkpoint, or --registry (plus --symbolic) for a fresh model")
        cfg = _config(args)
        registry = load_registry(args.registry)
        sym = load_symbolic(args.symbolic) if args.symbolic else None
        mcfg = cfg.effective_model if sym is not None else cfg.effective_model.replace(semantic=False)
        task = TaskSpec("node", {t: 1 for t in registry.node_types})
        model = STMPNN(registry, sym, mcfg, task)
        params = model.init_params(cfg.seed)
    graph = load_graph(args.graph, model.registry)
    doc = inspect_graph(model, params, graph)
    sys.stdout.write(_dump(doc, Path(args.out) / "inspect.json" if args.out else None))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--preset", choices=sorted(PRESETS), help="base hyperparameter bundle")
    common.add_argument("--ablate", action="append", choices=sorted(ABLATIONS), default=[],
                        help="disable a component (repeatable)")
    common.add_argument("--threads", type=int, help="worker threads for evaluation")

    parser = argparse.ArgumentParser(prog="stgraph", description="Visual-symbolic spatio-temporal graph networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], help="train and write checkpoints + metrics")
    p.add_argument("--train-manifest", dest="train_manifest")
    p.add_argument("--val-manifest", dest="val_manifest")
    p.add_argument("--test-manifest", dest="test_manifest")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", parents=[common], help="run the self-check suite")
    p.add_argument("--only", action="append", choices=sorted(CHECKS), help="run only these checks")
    p.add_argument("--inject-fault", dest="inject_fault", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("inspect", parents=[common], help="dump attention and association weights")
    p.add_argument("--graph", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--registry")
    p.add_argument("--symbolic")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("STGRAPH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CommandError, DataIOError, GraphError, ModelConfigError, SyntheticConfigError) as exc:
        print(f"stgraph {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"stgraph {args.command}: training diverged: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
