"""Run configuration: a JSON/YAML file validated against the config dataclasses.

Layout::

    preset: desk-node          # optional base bundle
    seed: 0
    threads: 1
    ablate: [no-semantic]
    model: {num_layers: 2, ...}        # ModelConfig fields
    train: {epochs: 30, ...}           # TrainConfig fields
    data:
      synthetic_preset: node
      synthetic: {num_train: 100}      # SyntheticTaskConfig overrides
      train_manifest: path/train.json
      val_manifest: null
      test_manifest: path/test.json

Unknown keys anywhere are rejected with their dotted path.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .model import ABLATIONS, ModelConfig, apply_ablations
from .presets import get_preset
from .synthetic import SYNTHETIC_PRESETS, SyntheticTaskConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


_TOP_KEYS = {"preset", "seed", "threads", "ablate", "model", "train", "data"}
_DATA_KEYS = {"synthetic_preset", "synthetic", "train_manifest", "val_manifest", "test_manifest"}


def _coerce(path: str, value: Any, default: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float) or default is None:
        if value is None and default is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or len(value) != len(default):
            raise ConfigError(f"{path}: expected a list of {len(default)} numbers, got {value!r}")
        return tuple(_coerce(f"{path}[{k}]", v, d) for k, (v, d) in enumerate(zip(value, default)))
    raise ConfigError(f"{path}: unsupported field type")


def _overlay(path: str, base, overrides: Mapping[str, Any]):
    """New dataclass instance with `overrides` applied after type checking."""
    if not isinstance(overrides, Mapping):
        raise ConfigError(f"{path}: expected a mapping, got {type(overrides).__name__}")
    known = {f.name for f in dataclasses.fields(base)}
    changes = {}
    for key, value in overrides.items():
        if key not in known:
            raise ConfigError(f"unknown config key '{path}.{key}'")
        changes[key] = _coerce(f"{path}.{key}", value, getattr(base, key))
    try:
        return dataclasses.replace(base, **changes)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass
class DataConfig:
    synthetic: SyntheticTaskConfig
    synthetic_preset: str | None = None
    train_manifest: str | None = None
    val_manifest: str | None = None
    test_manifest: str | None = None


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    data: DataConfig
    preset: str | None = None
    seed: int = 0
    threads: int = 1
    ablate: list[str] = field(default_factory=list)

    @property
    def effective_model(self) -> ModelConfig:
        return apply_ablations(self.model, self.ablate)

    @property
    def effective_train(self) -> TrainConfig:
        return self.train.replace(seed=self.seed)

    def to_dict(self) -> dict:
        """The effective configuration, suitable for echoing next to outputs."""
        return {
            "preset": self.preset,
            "seed": self.seed,
            "threads": self.threads,
            "ablate": list(self.ablate),
            "model": self.effective_model.to_dict(),
            "train": self.effective_train.to_dict(),
            "data": {
                "synthetic_preset": self.data.synthetic_preset,
                "synthetic": self.data.synthetic.replace(seed=self.seed).to_dict(),
                "train_manifest": self.data.train_manifest,
                "val_manifest": self.data.val_manifest,
                "test_manifest": self.data.test_manifest,
            },
        }


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def build_config(doc: Mapping[str, Any] | None = None, *, preset: str | None = None, seed: int | None = None,
                 ablate: list[str] | None = None, threads: int | None = None) -> RunConfig:
    """Merge preset defaults, the config document, then explicit overrides."""
    doc = dict(doc or {})
    for key in doc:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown config key '{key}'")
    preset = preset if preset is not None else doc.get("preset")
    model, train, syn_name = ModelConfig(), TrainConfig(), None
    if preset is not None:
        try:
            p = get_preset(preset)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        model, train, syn_name = p.model, p.train, p.synthetic
    model = _overlay("model", model, doc.get("model", {}) or {})
    train = _overlay("train", train, doc.get("train", {}) or {})

    data_doc = doc.get("data", {}) or {}
    if not isinstance(data_doc, Mapping):
        raise ConfigError("data: expected a mapping")
    for key in data_doc:
        if key not in _DATA_KEYS:
            raise ConfigError(f"unknown config key 'data.{key}'")
    syn_name = data_doc.get("synthetic_preset", syn_name)
    if syn_name is not None and syn_name not in SYNTHETIC_PRESETS:
        raise ConfigError(f"data.synthetic_preset: unknown {syn_name!r}; choose from {sorted(SYNTHETIC_PRESETS)}")
    syn = SYNTHETIC_PRESETS[syn_name] if syn_name else SyntheticTaskConfig()
    syn = _overlay("data.synthetic", syn, data_doc.get("synthetic", {}) or {})
    paths = {}
    for key in ("train_manifest", "val_manifest", "test_manifest"):
        v = data_doc.get(key)
        if v is not None and not isinstance(v, str):
            raise ConfigError(f"data.{key}: expected a path string")
        paths[key] = v
    data = DataConfig(syn, syn_name, **paths)

    run_seed = seed if seed is not None else _coerce("seed", doc.get("seed", 0), 0)
    run_threads = threads if threads is not None else _coerce("threads", doc.get("threads", 1), 1)
    if run_threads < 1:
        raise ConfigError("threads must be >= 1")
    names = list(doc.get("ablate", []) or [])
    if not all(isinstance(n, str) for n in names):
        raise ConfigError("ablate: expected a list of names")
    names += list(ablate or [])
    for n in names:
        if n not in ABLATIONS:
            raise ConfigError(f"ablate: unknown ablation {n!r}; choose from {sorted(ABLATIONS)}")
    return RunConfig(model, train, data, preset, run_seed, run_threads, names)


def load_config(path=None, **overrides) -> RunConfig:
    return build_config(read_config_file(path) if path else {}, **overrides)
