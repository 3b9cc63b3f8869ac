"""Named hyperparameter bundles (model + optimizer)."""

from __future__ import annotations

from dataclasses import dataclass

from .model import ModelConfig
from .training import TrainConfig


@dataclass(frozen=True)
class Preset:
    model: ModelConfig
    train: TrainConfig
    synthetic: str | None = None  # default synthetic generator preset
    note: str = ""


_DESK_TRAIN = TrainConfig(epochs=30, batch_size=25, learning_rate=0.01, dropout=0.0)

PRESETS: dict[str, Preset] = {
    # full-size settings for real per-node activity data
    "cad120-style": Preset(
        ModelConfig(num_layers=4, hidden_dim=256, gcn_layers=1, symbolic_dim=256),
        TrainConfig(epochs=100, batch_size=5, learning_rate=1e-3, dropout=0.5),
        synthetic="node",
        note="per-node labels, message width 256",
    ),
    # full-size settings for real multi-label frame data
    "charades-style": Preset(
        ModelConfig(num_layers=3, hidden_dim=512, gcn_layers=1, symbolic_dim=256),
        TrainConfig(epochs=40, batch_size=16, learning_rate=1e-4, dropout=0.5),
        synthetic="frame",
        note="per-frame multi-label, actor readout",
    ),
    # laptop-scale settings used by the shipped synthetic suites
    "desk-node": Preset(ModelConfig(num_layers=2, hidden_dim=16, symbolic_dim=8), _DESK_TRAIN, "node"),
    "desk-distractor": Preset(ModelConfig(num_layers=2, hidden_dim=16, symbolic_dim=8), _DESK_TRAIN, "distractor"),
    "desk-frame": Preset(ModelConfig(num_layers=2, hidden_dim=16, symbolic_dim=8), _DESK_TRAIN, "frame"),
    # per-frame symbol copies so label fusion cannot bridge frames
    "desk-two-hop": Preset(ModelConfig(num_layers=2, hidden_dim=16, symbolic_dim=8, symbolic_scope="frame"),
                           _DESK_TRAIN, "two_hop"),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
