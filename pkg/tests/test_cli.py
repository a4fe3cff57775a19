"""End-to-end tests of the command-line interface (run in-process)."""

import json

import numpy as np
import pytest

from egrnet.cli import main
from egrnet.dataset import load_manifest


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A synthesized 2-class dataset plus a tiny-network config file."""
    root = tmp_path_factory.mktemp("cli")
    spec = {
        "sample_rate_hz": 4096.0,
        "sample_length": 256,
        "samples_per_class": 8,
        "rng_seed": 3,
        "classes": [
            {"name": "healthy", "carrier_freq_hz": 256.0, "impulse_rate_hz": 20.0,
             "modulation_depth": 0.2, "decay_constant": 80.0, "amplitude": 1.0},
            {"name": "inner_race", "carrier_freq_hz": 512.0, "impulse_rate_hz": 90.0,
             "modulation_depth": 0.8, "decay_constant": 120.0, "amplitude": 1.0},
        ],
    }
    (root / "spec.json").write_text(json.dumps(spec))
    assert main(["synth", "--spec", str(root / "spec.json"),
                 "--out", str(root / "ds")]) == 0
    config = {
        "manifest_path": str(root / "ds" / "manifest.json"),
        "snr_db": [0.0],
        "trials": 1,
        "epochs": 2,
        "batch_size": 4,
        "blocks": [[3, 2, 1], [3, 2, 2]],
        "rng_seed": 9,
        "record_timing": False,
    }
    (root / "config.json").write_text(json.dumps(config))
    return root


def test_synth_writes_loadable_dataset(workspace):
    man = load_manifest(workspace / "ds" / "manifest.json")
    assert man.num_classes == 2
    assert man.sample_length == 256
    assert [c.name for c in man.classes] == ["healthy", "inner_race"]


def test_synth_missing_spec_exits_2(tmp_path):
    assert main(["synth", "--spec", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "out")]) == 2


def test_synth_invalid_json_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert main(["synth", "--spec", str(bad), "--out", str(tmp_path / "out")]) == 2


def test_convert_emits_images_and_csv(workspace, tmp_path):
    rc = main(["convert", "--manifest", str(workspace / "ds" / "manifest.json"),
               "--class-id", "1", "--sample-index", "0", "--emit", "both",
               "--out", str(tmp_path)])
    assert rc == 0
    for suffix in ("rsm.pgm", "rsm.csv", "egr.pgm", "egr.csv",
                   "stripe_profile.csv"):
        assert (tmp_path / f"class1_s0_{suffix}").exists()
    egr = np.loadtxt(tmp_path / "class1_s0_egr.csv", delimiter=",")
    assert egr.shape == (16, 16)
    np.testing.assert_allclose(egr, egr.T)


def test_convert_bad_sample_index_exits_2(workspace, tmp_path):
    rc = main(["convert", "--manifest", str(workspace / "ds" / "manifest.json"),
               "--class-id", "0", "--sample-index", "99", "--out", str(tmp_path)])
    assert rc == 2


def test_train_then_eval_roundtrip(workspace, tmp_path):
    run = tmp_path / "run"
    rc = main(["train", "--config", str(workspace / "config.json"),
               "--out", str(run)])
    assert rc == 0
    for name in ("model.json", "model.egrn", "curves.csv", "result.json"):
        assert (run / name).exists()
    result = json.loads((run / "result.json").read_text())
    assert "seconds" not in result  # record_timing is off in the config
    assert len((run / "curves.csv").read_text().strip().splitlines()) == 1 + 2

    rc = main(["eval", "--config", str(workspace / "config.json"),
               "--arch", str(run / "model.json"),
               "--weights", str(run / "model.egrn"),
               "--out", str(tmp_path / "eval")])
    assert rc == 0
    ev = json.loads((tmp_path / "eval" / "eval.json").read_text())
    # same noise seed and split as training-time evaluation
    assert ev["test_accuracy_pct"] == result["test_accuracy_pct"]
    assert ev["confusion"] == result["confusion"]


def test_train_flag_overrides_config(workspace, tmp_path):
    rc = main(["train", "--config", str(workspace / "config.json"),
               "--epochs", "1", "--out", str(tmp_path)])
    assert rc == 0
    result = json.loads((tmp_path / "result.json").read_text())
    assert result["config"]["epochs"] == 1


def test_train_without_manifest_exits_2(tmp_path):
    assert main(["train", "--manifest", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "out")]) == 2


def test_sweep_outputs(workspace, tmp_path):
    rc = main(["sweep", "--config", str(workspace / "config.json"),
               "--snr-db", "0,6", "--out", str(tmp_path)])
    assert rc == 0
    rows = (tmp_path / "results.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 2  # two SNRs x one trial
    assert json.loads((tmp_path / "summary.json").read_text())["snr_db"].keys() \
        == {"0", "6"}


def test_ablate_outputs(workspace, tmp_path):
    rc = main(["ablate", "--config", str(workspace / "config.json"),
               "--epochs", "1", "--out", str(tmp_path)])
    assert rc == 0
    rows = (tmp_path / "ablation.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 3  # one per variant


def test_separability_report(workspace, tmp_path):
    rc = main(["separability", "--manifest", str(workspace / "ds" / "manifest.json"),
               "--snr", "0", "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "separability.json").read_text())
    assert set(doc) == {"rsm", "egr", "snr_db"}
    assert -1.0 <= doc["egr"]["silhouette"] <= 1.0


def test_gradcheck_layer_scope_passes():
    assert main(["gradcheck", "--scope", "layer"]) == 0


def test_gradcheck_negative_control_fails():
    # a deliberately corrupted gradient must be caught with exit code 1
    assert main(["gradcheck", "--scope", "net", "--inject-bug"]) == 1


def test_inspect_manifest(workspace):
    assert main(["inspect", "--manifest",
                 str(workspace / "ds" / "manifest.json")]) == 0


def test_inspect_checkpoint(workspace, tmp_path):
    run = tmp_path / "run"
    assert main(["train", "--config", str(workspace / "config.json"),
                 "--epochs", "0", "--out", str(run)]) == 0
    assert main(["inspect", "--arch", str(run / "model.json"),
                 "--weights", str(run / "model.egrn")]) == 0


def test_inspect_nothing_exits_2():
    assert main(["inspect"]) == 2


def test_bad_usage_exits_2():
    assert main(["frobnicate"]) == 2
    assert main(["synth"]) == 2  # missing required flags
