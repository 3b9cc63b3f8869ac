import numpy as np
import pytest
from sklearn.metrics import average_precision_score, f1_score

from stgraph.metrics import average_precision, macro_f1, mean_average_precision, per_class_ap, per_class_prf


def test_perfect_predictions():
    y = [0, 1, 2, 2]
    assert macro_f1(y, y) == 1.0
    scores = np.eye(3)[y]
    assert mean_average_precision(scores, np.eye(3)[y]) == 1.0


def test_undefined_ratios_count_as_zero():
    table = per_class_prf([0, 0], [1, 1])
    assert table[0]["f1"] == 0.0 and table[1]["precision"] == 0.0
    assert macro_f1([0, 0], [1, 1]) == 0.0


def test_class_without_positives_is_skipped():
    labels = np.array([[1, 0], [0, 0]])
    aps, skipped = per_class_ap(np.array([[0.9, 0.1], [0.2, 0.8]]), labels)
    assert skipped == [1] and aps == {0: 1.0}
    with pytest.raises(ValueError):
        average_precision([0.1, 0.2], [0, 0])


def brute_force_ap(scores, positives):
    # average over positives of precision at the positive's rank, strict order
    order = sorted(range(len(scores)), key=lambda k: -scores[k])
    hits, total = 0, 0.0
    for rank, k in enumerate(order, start=1):
        if positives[k]:
            hits += 1
            total += hits / rank
    return total / sum(positives)


def test_ap_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 15))
        scores = rng.random(n)
        pos = rng.random(n) < 0.4
        if not pos.any():
            pos[0] = True
        assert abs(average_precision(scores, pos) - brute_force_ap(scores, pos)) < 1e-12


def test_ap_small_examples():
    assert average_precision([0.9, 0.8, 0.1], [1, 0, 1]) == pytest.approx((1 + 2 / 3) / 2, abs=1e-15)
    assert average_precision([0.1, 0.8, 0.9], [1, 0, 0]) == pytest.approx(1 / 3, abs=1e-15)


def test_ap_agrees_with_sklearn_without_ties():
    rng = np.random.default_rng(1)
    for _ in range(30):
        scores = rng.random((40, 3))
        labels = (rng.random((40, 3)) < 0.3).astype(int)
        labels[0] = 1
        ours = mean_average_precision(scores, labels)
        theirs = np.mean([average_precision_score(labels[:, c], scores[:, c]) for c in range(3)])
        assert abs(ours - theirs) < 1e-12


def test_macro_f1_agrees_with_sklearn():
    rng = np.random.default_rng(2)
    for _ in range(30):
        y = rng.integers(0, 4, size=25)
        p = rng.integers(0, 4, size=25)
        want = f1_score(y, p, average="macro", labels=np.union1d(y, p), zero_division=0)
        assert abs(macro_f1(y, p) - want) < 1e-12


def test_macro_f1_hand_example():
    # class 0: p=1/2 r=1 -> f1 2/3; class 1: p=1 r=2/3 -> f1 4/5
    table = per_class_prf([0, 1, 1, 1], [0, 0, 1, 1])
    assert table[0]["f1"] == pytest.approx(2 / 3, abs=1e-15)
    assert table[1]["f1"] == pytest.approx(0.8, abs=1e-15)
    assert macro_f1([0, 1, 1, 1], [0, 0, 1, 1]) == pytest.approx((2 / 3 + 0.8) / 2, abs=1e-15)


def test_all_negative_predictions_zero_positive_f1():
    y = [0, 1, 0, 1, 0, 1]
    table = per_class_prf(y, [0] * 6)
    assert table[1]["f1"] == 0.0 and table[0]["f1"] == pytest.approx(2 / 3, abs=1e-15)
