"""CLI surface: subcommands, error codes, reproducibility of artifacts."""

import json
import subprocess
import sys

import pytest


def run_cli(*args, cwd=None):
    proc = subprocess.run(
        [sys.executable, "-m", "setnet.cli", *args],
        capture_output=True, text=True, cwd=cwd,
    )
    payload = json.loads(proc.stdout.strip().splitlines()[-1])
    return proc.returncode, payload


def write_config(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


def test_synth_counting_and_train_predict(workdir):
    synth_cfg = write_config(workdir, "synth.json",
                             {"task": "counting", "n": 300, "d": 4, "seed": 5})
    code, out = run_cli("synth", "--config", synth_cfg,
                        "--out", str(workdir / "data"))
    assert code == 0
    assert out["seed"] == 5
    assert out["config"]["task"] == "counting"
    data_file = out["files"]["data"]

    train_cfg = write_config(workdir, "train.json", {
        "data": data_file, "hidden": [8], "epochs": 3, "batch_size": 32,
        "learning_rate": 0.02, "alpha_max": 12.0, "beta_max": 4.0, "seed": 1,
    })
    code, out = run_cli("train", "--config", train_cfg,
                        "--out", str(workdir / "model"))
    assert code == 0
    assert out["final_loss"] == pytest.approx(out["final_loss"])
    model_file = out["files"]["model"]
    log_header = open(out["files"]["train_log"]).readline()
    assert "schema_version" in log_header

    pred_cfg = write_config(workdir, "pred.json",
                            {"model": model_file, "features": data_file})
    code, out = run_cli("predict", "--config", pred_cfg,
                        "--out", str(workdir / "pred"))
    assert code == 0
    rows = [json.loads(l) for l in open(out["files"]["predictions"])][1:]
    assert len(rows) == 300
    assert all(r["alpha"] > 0 and r["beta"] > 0 and r["mode"] >= 0 for r in rows)


def test_multilabel_eval_pipeline(workdir):
    synth_cfg = write_config(workdir, "ml.json", {
        "task": "multilabel", "n": 150, "d": 4, "C": 8, "seed": 9, "noise": 0.0,
    })
    code, out = run_cli("synth", "--config", synth_cfg,
                        "--out", str(workdir / "ml"))
    assert code == 0
    records = out["files"]["records"]

    eval_cfg = write_config(workdir, "evalml.json",
                            {"records": records, "mode": "fixed-k"})
    code, out = run_cli("eval-ml", "--config", eval_cfg,
                        "--out", str(workdir / "mlres"))
    assert code == 0
    assert len(out["sweep"]) == 9  # k = 0..8
    assert out["sweep"][-1]["O-R"] == 1.0
    curve = open(out["files"]["curve"]).read().splitlines()
    assert curve[1].startswith("k,")

    # Noise-free scores with oracle counts give perfect predicted-k metrics.
    feats = out_features = json.loads(
        open(str(workdir / "ml") + "/features.jsonl").readline()
    )
    counts_rows = [json.loads(l)
                   for l in open(str(workdir / "ml") + "/features.jsonl")][1:]
    pred_path = workdir / "oracle_pred.jsonl"
    with open(pred_path, "w") as fh:
        fh.write(json.dumps({"schema_version": 1, "config_hash": "x", "seed": 0}))
        fh.write("\n")
        for row in counts_rows:
            fh.write(json.dumps({"mode": row["count"]}))
            fh.write("\n")
    eval2 = write_config(workdir, "evalml2.json", {
        "records": records, "mode": "predicted-k", "pred": str(pred_path),
    })
    code, out = run_cli("eval-ml", "--config", eval2,
                        "--out", str(workdir / "mlres2"))
    assert code == 0
    assert out["metrics"]["O-F1"] == 1.0


def test_boxes_nms_eval_pipeline(workdir):
    synth_cfg = write_config(workdir, "boxes.json", {
        "task": "boxes", "n": 40, "d": 4, "seed": 13, "jitter": 0.0,
        "fp_rate": 0.0,
    })
    code, out = run_cli("synth", "--config", synth_cfg,
                        "--out", str(workdir / "boxes"))
    assert code == 0
    files = out["files"]

    nms_cfg = write_config(workdir, "nms.json", {
        "proposals": files["proposals"], "mstar_file": files["counts"],
    })
    code, out = run_cli("nms", "--config", nms_cfg,
                        "--out", str(workdir / "kept"))
    assert code == 0
    kept_file = out["files"]["kept"]

    eval_cfg = write_config(workdir, "evaldet.json",
                            {"dets": kept_file, "gts": files["gt"]})
    code, out = run_cli("eval-det", "--config", eval_cfg,
                        "--out", str(workdir / "detres"))
    assert code == 0
    assert out["f1"] == pytest.approx(1.0)
    assert out["mr"] == pytest.approx(1e-10)


def test_nms_fixed_and_model_sources(workdir):
    synth_cfg = write_config(workdir, "boxes2.json",
                             {"task": "boxes", "n": 10, "d": 4, "seed": 17})
    code, out = run_cli("synth", "--config", synth_cfg,
                        "--out", str(workdir / "boxes2"))
    proposals = out["files"]["proposals"]
    nms_cfg = write_config(workdir, "nms_fixed.json",
                           {"proposals": proposals, "mstar_fixed": 2})
    code, out = run_cli("nms", "--config", nms_cfg,
                        "--out", str(workdir / "kept2"))
    assert code == 0
    kept = [l for l in open(out["files"]["kept"]) if not l.startswith("#")]
    by_image = {}
    for line in kept:
        by_image.setdefault(line.split()[0], []).append(line)
    assert all(len(v) <= 2 for v in by_image.values())


def test_nms_model_source(workdir):
    # Constant high-rate maps so every image carries proposals: the feature
    # rows then align one-to-one with the images in the proposals file.
    const_maps = {
        "alpha_map": {"weights": [], "bias": 12.0, "lo": 12.0, "hi": 12.0},
        "beta_map": {"weights": [], "bias": 1.0, "lo": 1.0, "hi": 1.0},
    }
    synth_box = write_config(workdir, "boxes3.json",
                             {"task": "boxes", "n": 6, "d": 4, "seed": 19,
                              **const_maps})
    code, out = run_cli("synth", "--config", synth_box,
                        "--out", str(workdir / "boxes3"))
    proposals = out["files"]["proposals"]

    synth_cnt = write_config(workdir, "cnt.json",
                             {"task": "counting", "n": 6, "d": 4, "seed": 20})
    code, out = run_cli("synth", "--config", synth_cnt,
                        "--out", str(workdir / "cnt"))
    feats = out["files"]["data"]
    train_cfg = write_config(workdir, "train_m.json", {
        "data": feats, "hidden": [4], "epochs": 1, "alpha_max": 12.0,
        "beta_max": 4.0, "seed": 2,
    })
    code, out = run_cli("train", "--config", train_cfg,
                        "--out", str(workdir / "m2"))
    model_file = out["files"]["model"]

    nms_cfg = write_config(workdir, "nms_model.json", {
        "proposals": proposals, "mstar_model": model_file,
        "mstar_features": feats,
    })
    code, out = run_cli("nms", "--config", nms_cfg,
                        "--out", str(workdir / "kept3"))
    assert code == 0
    assert out["n_images"] == 6


def test_log_env_controls_stderr(workdir):
    import os
    import subprocess
    cfg = write_config(workdir, "logtest.json",
                       {"task": "counting", "n": 20, "d": 4, "seed": 1})
    env = dict(os.environ, SETNET_LOG="info")
    proc = subprocess.run(
        [sys.executable, "-m", "setnet.cli", "synth", "--config", cfg,
         "--out", str(workdir / "logrun")],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0
    assert "counting samples" in proc.stderr
    # stdout stays machine-readable JSON.
    assert json.loads(proc.stdout.strip())["command"] == "synth"


def test_sample_command(workdir):
    cfg = write_config(workdir, "sample.json", {
        "card": "pmf", "pmf": [0.0, 0.0, 1.0], "element": "categorical",
        "probs": [0.6, 0.4], "n": 50, "seed": 3,
    })
    code, out = run_cli("sample", "--config", cfg, "--out", str(workdir / "s"))
    assert code == 0
    rows = [json.loads(l) for l in open(out["files"]["samples"])][1:]
    assert all(len(r["set"]) == 2 for r in rows)
    assert out["mean_cardinality"] == 2.0


def test_gradcheck_defaults(workdir):
    code, out = run_cli("gradcheck", "--out", str(workdir / "g"))
    assert code == 0
    assert out["max_rel_error"] < 1e-4


def test_seed_flag_overrides_config(workdir):
    cfg = write_config(workdir, "seedtest.json",
                       {"task": "counting", "n": 50, "d": 4, "seed": 1})
    code, out = run_cli("synth", "--config", cfg, "--seed", "42",
                        "--out", str(workdir / "seedrun"))
    assert code == 0
    assert out["seed"] == 42
    header = json.loads(open(out["files"]["data"]).readline())
    assert header["seed"] == 42


class TestErrorCodes:
    def test_unknown_key_is_config_error(self, workdir):
        cfg = write_config(workdir, "bad1.json",
                           {"task": "counting", "bogus": 1})
        code, out = run_cli("synth", "--config", cfg, "--out", str(workdir))
        assert code == 1
        assert out["code"] == "config"

    def test_missing_required_key(self, workdir):
        cfg = write_config(workdir, "bad2.json", {"n": 10})
        code, out = run_cli("synth", "--config", cfg, "--out", str(workdir))
        assert code == 1
        assert out["code"] == "config"

    def test_missing_file_is_data_error(self, workdir):
        cfg = write_config(workdir, "bad3.json",
                           {"data": str(workdir / "nope.jsonl")})
        code, out = run_cli("train", "--config", cfg, "--out", str(workdir))
        assert code == 1
        assert out["code"] == "data"

    def test_numeric_error(self, workdir):
        cfg = write_config(workdir, "bad4.json",
                           {"card": "negbin", "a": -1.0, "b": 0.5, "n": 5})
        code, out = run_cli("sample", "--config", cfg, "--out", str(workdir))
        assert code == 1
        assert out["code"] == "numeric"

    def test_bad_flag_is_config_error(self, workdir):
        proc = subprocess.run(
            [sys.executable, "-m", "setnet.cli", "no-such-command"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 1
        assert json.loads(proc.stdout.strip())["code"] == "config"
