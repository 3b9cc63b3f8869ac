import json

import numpy as np
import pytest

from stgraph.dataio import load_checkpoint
from stgraph.model import ModelConfig
from stgraph.params import ParameterBank
from stgraph.synthetic import SyntheticTaskConfig, generate_synthetic
from stgraph.training import Adam, TrainConfig, TrainingDiverged, evaluate, predict, train

SMALL = ModelConfig(num_layers=1, hidden_dim=6, symbolic_dim=4)
QUICK = TrainConfig(epochs=2, batch_size=8, learning_rate=0.01, dropout=0.0)


@pytest.fixture(scope="module")
def node_data():
    return generate_synthetic(SyntheticTaskConfig(num_train=24, num_test=12), 0)


@pytest.fixture(scope="module")
def frame_data():
    return generate_synthetic(SyntheticTaskConfig(task="frame", num_train=12, num_test=8, frames=4), 0)


def test_adam_matches_hand_computation():
    bank = ParameterBank({"w": np.array([1.0, -2.0])})
    opt = Adam(bank, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    g1, g2 = np.array([0.5, -1.0]), np.array([0.1, 3.0])
    w = np.array([1.0, -2.0])
    m = v = np.zeros(2)
    for t, g in enumerate((g1, g2), start=1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        opt.step({"w": g})
    assert np.max(np.abs(bank["w"] - w)) < 1e-15
    # the first step moves each entry by lr regardless of gradient scale
    fresh = ParameterBank({"w": np.zeros(2)})
    Adam(fresh, lr=0.1).step({"w": np.array([1e-3, -50.0])})
    assert np.allclose(fresh["w"], [-0.1, 0.1], atol=1e-6)


def test_zero_epochs_returns_initial_parameters(node_data):
    params, report, model = train(node_data.train, SMALL, QUICK.replace(epochs=0))
    assert params == model.init_params(QUICK.seed)
    assert report.loss_curve == [] and report.best_epoch == 0


def test_zero_learning_rate_keeps_parameters(node_data):
    params, report, model = train(node_data.train, SMALL, QUICK.replace(learning_rate=0.0))
    assert params == model.init_params(QUICK.seed)
    assert len(report.loss_curve) == 2


def test_loss_decreases_on_a_tiny_problem(node_data):
    _, report, _ = train(node_data.train, SMALL, QUICK.replace(epochs=15))
    assert report.loss_curve[-1] < report.loss_curve[0]


def test_same_seed_gives_identical_metrics(node_data):
    runs = [train(node_data.train, SMALL, QUICK.replace(dropout=0.3), node_data.test) for _ in range(2)]
    assert runs[0][0] == runs[1][0]
    a, b = (json.dumps(r[1].to_dict(), sort_keys=True) for r in runs)
    assert a == b
    other = train(node_data.train, SMALL, QUICK.replace(dropout=0.3, seed=1), node_data.test)
    assert other[0] != runs[0][0]


def test_checkpoints_every_epoch(tmp_path, node_data):
    params, _, _ = train(node_data.train, SMALL, QUICK.replace(epochs=3), out_dir=tmp_path)
    names = sorted(p.name for p in (tmp_path / "checkpoints").iterdir())
    assert names == ["epoch_001.ckpt", "epoch_002.ckpt", "epoch_003.ckpt"]
    last, meta = load_checkpoint(tmp_path / "checkpoints" / "epoch_003.ckpt")
    assert last == params and meta["epoch"] == 3
    best, meta = load_checkpoint(tmp_path / "best.ckpt")
    assert best == params and meta["model"]["hidden_dim"] == 6 and meta["symbolic"]["kind"] == "symbolic_graph"


def test_validation_picks_best_epoch(node_data):
    seen = []
    params, report, model = train(node_data.train, SMALL, QUICK.replace(epochs=4), node_data.test,
                                  on_epoch=lambda e, loss, rep: seen.append(rep.score))
    assert report.validation_curve == seen
    # epoch 0 is the initialization; ties keep the earliest epoch
    scores = [evaluate(model, model.init_params(0), node_data.test).score] + seen
    assert report.best_epoch == int(np.argmax(scores))
    assert evaluate(model, params, node_data.test).score == max(scores)


def test_divergence_names_the_op(node_data):
    with pytest.raises(TrainingDiverged, match="non-finite tensor came from 'matmul'"):
        train(node_data.train, SMALL, QUICK.replace(epochs=5, learning_rate=1e300))


def test_frame_task_trains_and_reports_ap(frame_data):
    _, report, model = train(frame_data.train, SMALL, QUICK, frame_data.test)
    assert report.task == "frame" and 0.0 <= report.mean_ap <= 1.0
    assert report.rare_class_ap is not None
    assert set(report.per_class_ap) | set(report.classes_without_positives) == set(range(model.task.frame_classes))


def test_threaded_prediction_is_identical(node_data):
    _, _, model = train(node_data.train, SMALL, QUICK.replace(epochs=0))
    params = model.init_params(0)
    a = predict(model, params, node_data.test, batch_size=3, threads=1)
    b = predict(model, params, node_data.test, batch_size=3, threads=4)
    assert np.array_equal(a.node_scores["actor"], b.node_scores["actor"])


def test_task_mismatch_is_rejected(node_data, frame_data):
    _, _, model = train(node_data.train, SMALL, QUICK.replace(epochs=0))
    with pytest.raises(ValueError, match="does not match"):
        evaluate(model, model.init_params(0), frame_data.test)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1)
    with pytest.raises(ValueError):
        TrainConfig(dropout=1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_metrics_json_excludes_wall_clock(node_data):
    _, report, _ = train(node_data.train, SMALL, QUICK.replace(epochs=1))
    assert "wall_clock" not in report.to_dict() and report.to_dict(include_timing=True)["wall_clock"] > 0


def test_four_layer_model_learns_node_task():
    from stgraph import experiments as ex
    outcome = ex.run("node", 0, (), (("num_layers", 4),))
    assert outcome.score >= 0.95
