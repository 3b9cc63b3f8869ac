"""On-disk formats: graph JSON, symbolic graph JSON, dataset manifests, checkpoints.

Graphs, registries, symbolic graphs and manifests are JSON documents carrying
a ``schema_version``. Floats are written with Python's shortest round-trip
repr, so load(save(x)) is bit-exact.

Checkpoints are ``MAGIC | u64 header length | JSON header | float64 LE data``;
the header lists each parameter's name, byte offset into the data block and
shape, plus free-form metadata.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .graph import Edge, Node, SymbolicGraph, TypeRegistry, VisualSTGraph, validate
from .model import TaskSpec
from .params import ParameterBank

SCHEMA_VERSION = 1
CHECKPOINT_MAGIC = b"STGCKPT1"


class DataIOError(Exception):
    pass


class ParseError(DataIOError):
    def __init__(self, path, message: str, offset: int | None = None):
        self.path = str(path)
        self.offset = offset
        where = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{path}: parse error{where}: {message}")


class SchemaVersionError(DataIOError):
    def __init__(self, path, found):
        self.found = found
        super().__init__(f"{path}: schema_version {found!r} is not supported (expected {SCHEMA_VERSION})")


class ValidationError(DataIOError):
    def __init__(self, path, violations):
        self.violations = list(violations)
        detail = "; ".join(str(v) for v in self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        super().__init__(f"{path}: {len(self.violations)} validation error(s): {detail}{more}")


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _read_json(path) -> Any:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(path, "invalid UTF-8", exc.start) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[:exc.pos].encode("utf-8"))
        raise ParseError(path, exc.msg, offset) from None


def _check_version(path, doc) -> None:
    if not isinstance(doc, dict):
        raise ParseError(path, "top-level value must be an object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(path, doc.get("schema_version"))


def _vec(values) -> np.ndarray:
    return np.array([float(v) for v in values], dtype=np.float64)


def graph_to_dict(graph: VisualSTGraph) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "visual_st_graph",
        "num_frames": graph.num_frames,
        "nodes": [{"id": n.id, "type": n.type, "frame": n.frame, "attr": n.attr.tolist()} for n in graph.nodes],
        "edges": [{"sender": e.sender, "receiver": e.receiver, "type": e.type, "attr": e.attr.tolist()}
                  for e in graph.edges],
    }


def graph_from_dict(doc: Mapping, path="<graph>") -> VisualSTGraph:
    _check_version(path, doc)
    try:
        nodes = tuple(Node(int(n["id"]), str(n["type"]), int(n["frame"]), _vec(n["attr"])) for n in doc["nodes"])
        edges = tuple(Edge(int(e["sender"]), int(e["receiver"]), str(e["type"]), _vec(e["attr"])) for e in doc["edges"])
        return VisualSTGraph(int(doc["num_frames"]), nodes, edges)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(path, f"malformed graph document: {exc!r}") from None


def save_graph(graph: VisualSTGraph, path) -> None:
    _write_text(path, _dump(graph_to_dict(graph)))


def load_graph(path, registry: TypeRegistry | None = None) -> VisualSTGraph:
    """Read a graph file; validates against `registry` when one is given."""
    graph = graph_from_dict(_read_json(path), path)
    if registry is not None:
        problems = validate(graph, registry)
        if problems:
            raise ValidationError(path, problems)
    return graph


def save_registry(registry: TypeRegistry, path) -> None:
    _write_text(path, _dump({"schema_version": SCHEMA_VERSION, "kind": "type_registry", **registry.to_dict()}))


def load_registry(path) -> TypeRegistry:
    doc = _read_json(path)
    _check_version(path, doc)
    try:
        return TypeRegistry.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(path, f"malformed registry: {exc}") from None


def symbolic_to_dict(sym: SymbolicGraph) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "symbolic_graph",
        "symbols": [{"id": k, "label": lab, "embedding": sym.embeddings[k].tolist()} for k, lab in enumerate(sym.labels)],
        "adjacency": sym.adjacency.tolist(),
        "bipartite": {nt: list(v) for nt, v in sym.bipartite.items()},
    }


def symbolic_from_dict(doc: Mapping, path="<symbolic>") -> SymbolicGraph:
    _check_version(path, doc)
    try:
        symbols = sorted(doc["symbols"], key=lambda s: int(s["id"]))
        if [int(s["id"]) for s in symbols] != list(range(len(symbols))):
            raise ValueError("symbol ids must be 0..C-1")
        emb = np.array([_vec(s["embedding"]) for s in symbols]) if symbols else np.zeros((0, 0))
        adj = np.array([_vec(r) for r in doc["adjacency"]]) if symbols else np.zeros((0, 0))
        return SymbolicGraph(tuple(str(s["label"]) for s in symbols), emb, adj,
                             {str(k): tuple(int(x) for x in v) for k, v in doc.get("bipartite", {}).items()})
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(path, f"malformed symbolic graph: {exc}") from None


def save_symbolic(sym: SymbolicGraph, path) -> None:
    _write_text(path, _dump(symbolic_to_dict(sym)))


def load_symbolic(path) -> SymbolicGraph:
    return symbolic_from_dict(_read_json(path), path)


@dataclass
class SampleRecord:
    graph: str  # path relative to the manifest directory
    node_labels: list[int] | None = None  # indexed by node id; -1 = unlabeled
    frame_labels: list[list[int]] | None = None  # active label ids per frame


@dataclass
class DatasetManifest:
    split: str
    task: TaskSpec
    registry: str
    symbolic_graph: str | None
    samples: list[SampleRecord]
    metadata: dict = field(default_factory=dict)
    base_dir: Path = field(default=Path("."), compare=False)

    def to_dict(self) -> dict:
        samples = []
        for s in self.samples:
            rec: dict[str, Any] = {"graph": s.graph}
            if s.node_labels is not None:
                rec["node_labels"] = [int(x) for x in s.node_labels]
            if s.frame_labels is not None:
                rec["frame_labels"] = [[int(x) for x in f] for f in s.frame_labels]
            samples.append(rec)
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "dataset_manifest",
            "split": self.split,
            "task": self.task.to_dict(),
            "registry": self.registry,
            "symbolic_graph": self.symbolic_graph,
            "metadata": self.metadata,
            "samples": samples,
        }

    def resolve(self, rel: str) -> Path:
        return self.base_dir / rel


def save_manifest(manifest: DatasetManifest, path) -> None:
    _write_text(path, _dump(manifest.to_dict()))


def load_manifest(path, check: bool = True) -> DatasetManifest:
    """Read a manifest; with `check`, every referenced file must exist and validate."""
    path = Path(path)
    doc = _read_json(path)
    _check_version(path, doc)
    try:
        samples = [SampleRecord(s["graph"], s.get("node_labels"), s.get("frame_labels")) for s in doc["samples"]]
        manifest = DatasetManifest(
            split=str(doc["split"]), task=TaskSpec.from_dict(doc["task"]), registry=str(doc["registry"]),
            symbolic_graph=doc.get("symbolic_graph"), samples=samples, metadata=dict(doc.get("metadata", {})),
            base_dir=path.parent,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(path, f"malformed manifest: {exc}") from None
    if check:
        load_dataset(manifest)
    return manifest


@dataclass
class Dataset:
    manifest: DatasetManifest
    registry: TypeRegistry
    symbolic: SymbolicGraph | None
    graphs: list[VisualSTGraph]
    labels: list[np.ndarray]  # node task: (n,) ints; frame task: (T, C) 0/1

    @property
    def task(self) -> TaskSpec:
        return self.manifest.task

    def __len__(self) -> int:
        return len(self.graphs)


def frame_label_matrix(active: Sequence[Sequence[int]], num_frames: int, num_classes: int) -> np.ndarray:
    y = np.zeros((num_frames, num_classes))
    if len(active) != num_frames:
        raise DataIOError(f"{len(active)} frame label sets for a {num_frames}-frame graph")
    for t, labs in enumerate(active):
        for c in labs:
            if not 0 <= int(c) < num_classes:
                raise DataIOError(f"frame label {c} outside [0, {num_classes})")
            y[t, int(c)] = 1.0
    return y


def load_dataset(manifest: DatasetManifest | str | os.PathLike) -> Dataset:
    if not isinstance(manifest, DatasetManifest):
        manifest = load_manifest(manifest, check=False)
    registry = load_registry(manifest.resolve(manifest.registry))
    sym = load_symbolic(manifest.resolve(manifest.symbolic_graph)) if manifest.symbolic_graph else None
    if sym is not None:
        sym.check_registry(registry)
    graphs, labels = [], []
    task = manifest.task
    for rec in manifest.samples:
        gpath = manifest.resolve(rec.graph)
        if not gpath.exists():
            raise DataIOError(f"manifest references missing graph file {gpath}")
        g = load_graph(gpath, registry)
        graphs.append(g)
        if task.kind == "node":
            if rec.node_labels is None or len(rec.node_labels) != len(g.nodes):
                raise DataIOError(f"{rec.graph}: need one node label per node")
            y = np.asarray(rec.node_labels, dtype=np.intp)
            for n, lab in zip(g.nodes, y):
                c = task.node_classes.get(n.type)
                if lab >= 0 and (c is None or lab >= c):
                    raise DataIOError(f"{rec.graph}: node {n.id} label {lab} outside declared classes for {n.type!r}")
                if lab < -1:
                    raise DataIOError(f"{rec.graph}: node {n.id} label {lab} is invalid")
            labels.append(y)
        else:
            if rec.frame_labels is None:
                raise DataIOError(f"{rec.graph}: frame task sample without frame labels")
            labels.append(frame_label_matrix(rec.frame_labels, g.num_frames, task.frame_classes))
    return Dataset(manifest, registry, sym, graphs, labels)


def save_checkpoint(path, params: ParameterBank, meta: Mapping[str, Any] | None = None) -> None:
    entries, offset = [], 0
    for name, arr in params.items():
        entries.append({"name": name, "offset": offset, "shape": list(arr.shape)})
        offset += arr.size * 8
    header = json.dumps({"schema_version": SCHEMA_VERSION, "params": entries, "meta": dict(meta or {})},
                        sort_keys=True, allow_nan=False).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for _, arr in params.items():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ParameterBank, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ParseError(path, "not a checkpoint (bad magic)", 0)
    if len(raw) < 16:
        raise ParseError(path, "truncated header length", len(raw))
    (hlen,) = struct.unpack("<Q", raw[8:16])
    if len(raw) < 16 + hlen:
        raise ParseError(path, "truncated header", len(raw))
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(path, f"bad header: {exc}", 16) from None
    if header.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(path, header.get("schema_version"))
    data = raw[16 + hlen:]
    bank = ParameterBank()
    for ent in header["params"]:
        shape = tuple(ent["shape"])
        count = int(np.prod(shape)) if shape else 1
        start, stop = ent["offset"], ent["offset"] + 8 * count
        if stop > len(data):
            raise ParseError(path, f"data for {ent['name']} is truncated", 16 + hlen + len(data))
        bank[ent["name"]] = np.frombuffer(data[start:stop], dtype="<f8").reshape(shape).astype(np.float64)
    return bank, header.get("meta", {})
