"""Ablation ordering on the shipped synthetic suites, 5 seeds each.

Node suite scores are macro-F1; the frame suite is multi-label, so it is
scored by mAP.
"""

import pytest

from stgraph import experiments as ex


def report(capsys, passed, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if passed else 'FAIL'} monotonicity: {detail}")


@pytest.mark.parametrize("suite", ["node", "frame"])
def test_full_model_beats_visual_only_beats_baseline(suite, capsys):
    full = ex.mean_score(suite)
    visual = ex.mean_score(suite, ablations=("no-semantic",))
    base = ex.mean_score(suite, ablations=ex.BASELINE)
    metric = "macro-F1" if suite == "node" else "mAP"
    ok = full - visual >= 0.05 and visual - base >= 0.05
    report(capsys, ok, f"{suite} suite {metric}: full {full:.3f}, visual-only {visual:.3f}, "
                       f"no-message baseline {base:.3f} (each gap >= 0.05)")
    assert visual - base >= 0.05
    assert full - visual >= 0.05
