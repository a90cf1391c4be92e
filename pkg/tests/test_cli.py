import csv
import io
import json
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from morphdetect.cli import main
from morphdetect.config import Config, ConfigError, load_config
from morphdetect.detector import train_detector
from morphdetect.features import describe_dims
from morphdetect.harness.bundle import save_bundle


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


SMALL_TOML = """\
seed = 2

[descriptor]
working_size = 64

[fusion]
bootstrap_replicates = 10
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic 64 px dataset, a feature cache and a trained bundle."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.toml"
    cfg.write_text(SMALL_TOML)
    assert main(["synth", "--out", str(root / "data"), "--n", "12", "--size", "64",
                 "--media", "digital", "ps1", "--seed", "5"]) == 0
    manifest = root / "data" / "manifest.csv"
    assert main(["extract", "--manifest", str(manifest), "--out", str(root / "cache"), "--config", str(cfg)]) == 0
    assert main(["train", "--manifest", str(manifest), "--cache", str(root / "cache"), "--config", str(cfg),
                 "--train-select", "medium=digital,post=before", "--out", str(root / "b.bin")]) == 0
    return root, manifest, cfg


# ------------------------------------------------------------------ config


def test_config_files(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(SMALL_TOML)
    c = load_config(p)
    assert c.seed == 2 and c.descriptor.working_size == 64 and c.fusion.bootstrap_replicates == 10
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"classifiers": {"svm_c": 2, "srkda_sigma": 1.5}}))
    c = load_config(j)
    assert c.classifiers.svm_c == 2.0 and c.classifiers.srkda_sigma == 1.5
    assert load_config() == Config()
    for bad, msg in (('colour = "red"', "unknown key"), ("[descriptor]\nlbp_radius = 0", "lbp_radius"),
                     ("[classifiers]\nsvm_c = \"big\"", "number"), ("seed = ", "parse error"),
                     ("[fusion]\nweighting = \"max\"", "weighting"), ("[descriptor]\nworking_size = 8", "too small")):
        p.write_text(bad)
        with pytest.raises(ConfigError, match=msg):
            load_config(p)


def test_malformed_config_fails_with_one_line(capsys, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[classifiers]\nsvm_c = -1\n")
    code, out, err = run(capsys, "train", "--manifest", tmp_path / "none.csv", "--config", bad, "--out", tmp_path / "b")
    assert code == 1 and out == ""
    assert err.strip().count("\n") == 0 and "svm_c" in err and err.startswith("morphdetect train: error:")
    assert not (tmp_path / "b").exists()


# ------------------------------------------------------------------ commands


def test_describe_dims(capsys):
    code, out, _ = run(capsys, "describe-dims")
    d = json.loads(out)
    assert code == 0 and d["totals"] == {"LBP": 4608, "HOG": 424008, "BSIF": 4608}


def test_protocols_listing(capsys):
    code, out, _ = run(capsys, "protocols")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 60
    assert {r["protocol"] for r in rows} == {"intra", "inter-medium", "inter-medium-varied-post"}


def test_extract_writes_cache(workspace):
    root, _, _ = workspace
    names = sorted(p.name for p in (root / "cache").iterdir())
    assert names == sorted(f"{ft}_{part}.bin" for ft in ("LBP", "HOG", "BSIF") for part in ("train", "test"))


def test_score_and_evaluate(capsys, workspace, tmp_path):
    root, manifest, cfg = workspace
    code, out, err = run(capsys, "score", "--bundle", root / "b.bin", "--manifest", manifest,
                         "--test-select", "medium=digital,post=before")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 12 and "INFO" not in out
    assert {r["decision"] for r in rows} <= {"Morph", "BonaFide"}
    code, out, _ = run(capsys, "score", "--bundle", root / "b.bin", "--image", root / "data" / rows[0]["path"])
    # BLAS blocking differs between a batch and a single row, so equality is to rounding only
    assert code == 0 and float(out.splitlines()[1].split(",")[1]) == pytest.approx(float(rows[0]["score"]), rel=1e-9)

    code, out, _ = run(capsys, "evaluate", "--bundle", root / "b.bin", "--manifest", manifest, "--cache", root / "cache",
                       "--protocol", "intra", "--test-select", "medium=digital,post=before")
    cached = json.loads(out)
    assert code == 0 and cached["n_morph"] == 6 and cached["metadata"]["protocol"] == "intra"
    code, out, _ = run(capsys, "evaluate", "--bundle", root / "b.bin", "--manifest", manifest,
                       "--protocol", "intra", "--test-select", "medium=digital,post=before", "--out", tmp_path / "ev")
    assert code == 0 and json.loads((tmp_path / "ev" / "report.json").read_text()) == cached
    assert (tmp_path / "ev" / "det.csv").read_text().startswith("threshold")


def test_evaluate_protocol_errors(capsys, workspace):
    root, manifest, _ = workspace
    code, out, err = run(capsys, "evaluate", "--bundle", root / "b.bin", "--manifest", manifest,
                         "--protocol", "intra", "--test-select", "medium=ps1,post=before")
    assert code == 1 and out == "" and "intra protocol violation" in err
    code, _, _ = run(capsys, "evaluate", "--bundle", root / "b.bin", "--manifest", manifest,
                     "--protocol", "inter-medium", "--test-select", "medium=ps1,post=before")
    assert code == 0
    code, _, err = run(capsys, "evaluate", "--bundle", root / "b.bin", "--manifest", manifest,
                       "--protocol", "inter-medium", "--test-select", "medium=ps2,post=before")
    assert code == 1 and "empty" in err


def test_bad_inputs_exit_nonzero(capsys, workspace, tmp_path):
    root, manifest, _ = workspace
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"\0" * 100)
    code, _, err = run(capsys, "score", "--bundle", junk, "--image", manifest)
    assert code == 1 and "magic" in err
    code, _, err = run(capsys, "score", "--bundle", root / "b.bin", "--image", tmp_path / "missing.png")
    assert code == 1 and "missing.png" in err
    code, _, err = run(capsys, "train", "--manifest", manifest, "--train-select", "medium=tv", "--out", tmp_path / "x")
    assert code == 1 and "medium" in err


def test_run_writes_run_directory(capsys, workspace, tmp_path):
    root, manifest, cfg = workspace
    code, out, _ = run(capsys, "run", "--manifest", manifest, "--protocol", "inter-medium", "--config", cfg,
                       "--train-select", "medium=ps1,post=before", "--test-select", "medium=digital,post=before",
                       "--out", tmp_path)
    run_dir = Path(out.strip())
    assert code == 0 and run_dir.parent == tmp_path / "runs"
    assert json.loads((run_dir / "config.json").read_text())["spec"]["protocol"] == "inter_medium"


def test_module_entry_point_exit_code():
    res = subprocess.run([sys.executable, "-m", "morphdetect.cli", "score", "--bundle", "/nonexistent",
                          "--image", "x.png"], capture_output=True, text=True)
    assert res.returncode == 1 and res.stdout == "" and "error" in res.stderr


@pytest.mark.slow
def test_score_one_image_under_two_seconds(capsys, workspace, tmp_path):
    """Single-image scoring at the full 320 px working size."""
    root, _, _ = workspace
    dims = describe_dims(320, 3, 6, 8, 9, 2, 8)[1]
    rng = np.random.default_rng(0)
    # models of the right dimensions are enough to time extraction plus scoring
    feats = {ft: rng.random((20, d)) for ft, d in dims.items()}
    cfg = replace(Config(), fusion=replace(Config().fusion, bootstrap_replicates=5))
    save_bundle(tmp_path / "full.bin", train_detector(feats, np.repeat([0, 1], 10), cfg))
    probe = sorted((root / "data" / "digital" / "before" / "raw").iterdir())[0]
    argv = ["score", "--bundle", str(tmp_path / "full.bin"), "--image", str(probe)]
    main(argv)  # warm the JIT and filter bank caches
    capsys.readouterr()
    t = time.perf_counter()
    code = main(argv)
    elapsed = time.perf_counter() - t
    assert code == 0 and elapsed < 2.0, elapsed
