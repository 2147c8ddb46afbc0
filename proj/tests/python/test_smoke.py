import json
import math
import os
import subprocess

import pytest

import hafrm


def test_loss_closed_forms():
    assert hafrm.reward_loss([0.7], [0.7]) == pytest.approx(math.log(2), abs=1e-12)
    assert hafrm.reward_loss([2.0], [0.0]) == pytest.approx(0.126928011, abs=1e-9)
    assert hafrm.policy_loss_dpo([-3.0], [-5.0], [-3.0], [-5.0], 0.1) == pytest.approx(math.log(2))


def test_synth_records_prefer_chosen():
    records = hafrm.synth_generate("marker-count", 20, seed=1)
    assert len(records) == 20
    for r in records:
        assert hafrm.truth_score("marker-count", r["chosen"]) > hafrm.truth_score("marker-count", r["rejected"])
    assert records == hafrm.synth_generate("marker-count", 20, seed=1)


def test_unknown_rule_raises():
    with pytest.raises(hafrm.Error):
        hafrm.synth_generate("no-such-rule", 3)


def test_train_and_score(tmp_path):
    data = tmp_path / "d.jsonl"
    with open(data, "w") as f:
        for r in hafrm.synth_generate("marker-count", 120, seed=0):
            f.write(json.dumps(r) + "\n")
    out = tmp_path / "run"
    code, _, err = hafrm.run_cli(
        ["train", "--data", str(data), "--out", str(out), "--d-model", "16", "--layers", "1",
         "--heads", "2", "--max-seq-len", "64", "--max-steps", "6", "--batch-size", "8"])
    assert code == 0, err
    model = hafrm.RewardModel(str(out / "best.ckpt"))
    assert 0.0 <= model.val_accuracy <= 1.0
    assert math.isfinite(model.score("Q1", "a ++ b"))
    assert model.log_prob("Q1", "a b") < 0.0
    assert model.best_of_n("Q1", ["a", "b", "c"]) in (0, 1, 2)
    with pytest.raises(hafrm.FormatError):
        hafrm.RewardModel(str(data))


def test_cli_binary_help():
    binary = os.environ.get("HAFRM_BIN")
    if not binary:
        pytest.skip("HAFRM_BIN not set")
    assert subprocess.run([binary, "--help"], capture_output=True).returncode == 0
