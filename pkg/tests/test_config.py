import pytest

from stgraph.config import ConfigError, build_config, load_config
from stgraph.presets import PRESETS, get_preset


def test_unknown_nested_key_is_named():
    with pytest.raises(ConfigError, match="unknown config key 'model.bogus'"):
        build_config({"model": {"bogus": 1}})
    with pytest.raises(ConfigError, match="'data.where'"):
        build_config({"data": {"where": "x"}})
    with pytest.raises(ConfigError, match="'colour'"):
        build_config({"colour": "red"})


def test_type_errors_name_the_field():
    with pytest.raises(ConfigError, match="model.num_layers: expected an integer"):
        build_config({"model": {"num_layers": "four"}})
    with pytest.raises(ConfigError, match="train.learning_rate"):
        build_config({"train": {"learning_rate": True}})
    with pytest.raises(ConfigError, match="model"):
        build_config({"model": {"beta": 3}})


def test_layering_preset_then_file_then_flags():
    cfg = build_config({"preset": "desk-node", "seed": 4, "train": {"epochs": 3}, "ablate": ["no-semantic"]},
                       seed=9, ablate=["no-attention"])
    assert cfg.model.num_layers == get_preset("desk-node").model.num_layers
    assert cfg.train.epochs == 3 and cfg.seed == 9
    assert cfg.ablate == ["no-semantic", "no-attention"]
    eff = cfg.effective_model
    assert not eff.semantic and not eff.attention
    assert cfg.to_dict()["train"]["seed"] == 9


def test_yaml_and_json_files(tmp_path):
    (tmp_path / "c.yaml").write_text("preset: desk-frame\nmodel:\n  hidden_dim: 7\n")
    (tmp_path / "c.json").write_text('{"preset": "desk-frame", "model": {"hidden_dim": 7}}')
    a, b = load_config(tmp_path / "c.yaml"), load_config(tmp_path / "c.json")
    assert a.to_dict() == b.to_dict() and a.data.synthetic.task == "frame"


def test_unknown_names():
    with pytest.raises(ConfigError, match="unknown ablation"):
        build_config({"ablate": ["no-coffee"]})
    with pytest.raises(ConfigError):
        build_config(preset="imagenet")
    with pytest.raises(ConfigError, match="synthetic_preset"):
        build_config({"data": {"synthetic_preset": "spiral"}})


def test_presets_are_consistent():
    for name, p in PRESETS.items():
        assert p.model.hidden_dim > 0 and p.train.epochs > 0, name
    assert get_preset("cad120-style").model.num_layers == 4
    assert get_preset("charades-style").model.num_layers == 3
