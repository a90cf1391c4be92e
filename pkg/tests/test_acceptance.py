"""Acceptance suite: one test per criterion, each recording a PASS/FAIL verdict.

The end-to-end criteria (6, 7) generate synthetic data at 320 px and take a
few minutes; they carry the ``slow`` marker as well.
"""

import json
import time
from dataclasses import replace

import numpy as np
import pytest

from morphdetect.classifiers import TrainingSet, train_linear_svm, train_pcrc, train_srkda
from morphdetect.cli import main
from morphdetect.config import Config, DescriptorConfig
from morphdetect.features import bsif_histogram, default_filterbank, hog_descriptor, lbp_histogram
from morphdetect.fusion import (
    FusionWeights,
    estimate_weights_bootstrap,
    fuse,
    fuse_level1,
    fuse_level2,
)
from morphdetect.harness.experiment import (
    ExperimentSpec,
    ProtocolError,
    enumerate_protocol_cells,
    run_experiment,
    select_rows,
)
from morphdetect.harness.manifest import load_manifest
from morphdetect.harness.synth import SynthOptions, generate_synthetic_dataset
from morphdetect.metrics import LabeledScores, bpcer_at_apcer_exact, d_eer, d_eer_exact
from morphdetect.scalespace import collapse, laplacian_pyramid

from helpers import separable_blobs
from oracles import bpcer_at_apcer_oracle, d_eer_oracle
from test_classifiers import kda_oracle
from test_features import bsif_oracle, hog_oracle, lbp_oracle

INTRA = "medium=digital,post=before,compressed=no"


@pytest.mark.criterion(1)
def test_c1_pyramid_exactness(criterion):
    rng = np.random.default_rng(1001)
    planes = [rng.random((64, 64)) for _ in range(100)]
    t = time.perf_counter()
    worst = 0.0
    for x in planes:
        bands, res = laplacian_pyramid(x, return_residue=True)
        worst = max(worst, float(np.max(np.abs(collapse(bands, res) - x))))
    elapsed = time.perf_counter() - t
    ok = criterion(1, worst < 1e-6 and elapsed < 5.0, f"max err {worst:.2e}, {elapsed:.2f} s")
    assert ok, (worst, elapsed)


@pytest.mark.criterion(2)
def test_c2_feature_oracles(criterion):
    rng = np.random.default_rng(1002)
    bank = default_filterbank()
    small = [rng.random((16, 16)) for _ in range(20)]
    lbp_ok = all(np.array_equal(lbp_histogram(x), lbp_oracle(x)) for x in small)
    bsif_ok = all(np.array_equal(bsif_histogram(x, bank), bsif_oracle(x, bank)) for x in small)
    hog_err = max(float(np.max(np.abs(hog_descriptor(x) - hog_oracle(x)))) for x in (rng.random((32, 32)) for _ in range(20)))
    ok = criterion(2, lbp_ok and bsif_ok and hog_err < 1e-9,
                   f"LBP exact={lbp_ok}, BSIF exact={bsif_ok}, HoG max err {hog_err:.1e}")
    assert ok


@pytest.mark.criterion(3)
def test_c3_metric_oracles(criterion):
    rng = np.random.default_rng(1003)
    mismatches = 0
    for _ in range(200):
        nb, nm = rng.integers(1, 25, size=2)
        # coarse grid so ties between and within classes are common
        bona = np.round(rng.normal(0, 1, nb), 1)
        morph = np.round(rng.normal(rng.uniform(0, 2), 1, nm), 1)
        ls = LabeledScores(bona, morph)
        mismatches += d_eer_exact(ls)[0] != d_eer_oracle(bona, morph)
        for target in (0.05, 0.10):
            mismatches += bpcer_at_apcer_exact(ls, target)[0] != bpcer_at_apcer_oracle(bona, morph, target)
    hand = d_eer(LabeledScores([0.6, 0.2, 0.3, 0.1], [0.7, 0.8, 0.4, 0.5]))[0]
    ok = criterion(3, mismatches == 0 and hand == 0.25, f"{mismatches} mismatches over 200 sets, hand case {hand}")
    assert ok


@pytest.mark.criterion(4)
def test_c4_classifier_sanity(criterion):
    acc = {"SVM": [], "SRKDA": [], "PCRC": []}
    for seed in range(10):
        x, labels = separable_blobs(2000 + seed, n=40, sigma=0.5, margin=2.0)
        ts = TrainingSet.build(x, labels)
        for name, model in (("SVM", train_linear_svm(ts)), ("SRKDA", train_srkda(ts)), ("PCRC", train_pcrc(ts))):
            acc[name].append(np.mean((model.score(x) > 0) == (labels == 1)))
    agree = []
    for seed in range(5):
        x, labels = separable_blobs(3000 + seed, n=30)
        ts = TrainingSet.build(x, labels)
        m = train_srkda(ts)
        decide = kda_oracle(ts.x, labels, m.sigma, m.metadata["delta"])
        agree.append(np.array_equal((m.score(x) > 0).astype(int), decide(ts.x)))
    accs = {k: float(min(v)) for k, v in acc.items()}
    ok = criterion(4, all(a == 1.0 for a in accs.values()) and all(agree),
                   f"min train accuracy {accs}, KDA oracle agreement {sum(agree)}/5")
    assert ok


def _dev_grids(seed, n=40):
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], n // 2)
    strength = rng.uniform(0, 2, size=(3, 3))
    return rng.normal(size=(n, 3, 3)) + labels[:, None, None] * strength, labels


@pytest.mark.criterion(5)
def test_c5_fusion_invariants(criterion):
    simplex = True
    for seed in range(200):
        grids, labels = _dev_grids(seed)
        w = estimate_weights_bootstrap(grids, labels, 20, seed=seed).weights
        for triple in list(w.level1) + [w.level2]:
            simplex &= bool(np.all(triple >= 0) and abs(triple.sum() - 1) < 1e-9)

    rng = np.random.default_rng(1005)
    g = rng.random((50, 3, 3))
    passthrough = 0.0
    for c in range(3):
        for f in range(3):
            l1 = np.zeros((3, 3))
            l1[:, f] = 1.0
            l2 = np.zeros(3)
            l2[c] = 1.0
            w = FusionWeights(l1, l2)
            passthrough = max(passthrough, float(np.max(np.abs(fuse_level2(w, fuse_level1(w, g)) - g[:, f, c]))))

    grids, labels = _dev_grids(7)
    probes = rng.normal(0, 1.5, (50, 3, 3))
    ranking = True
    for scale in (1e-3, 0.37, 5.0, 1e4):
        base = estimate_weights_bootstrap(grids, labels, 50, seed=3)
        scaled = estimate_weights_bootstrap(scale * grids, labels, 50, seed=3)
        s = fuse(base.weights, base.params, probes)
        s_c = fuse(scaled.weights, scaled.params, scale * probes)
        ranking &= bool(np.array_equal(np.argsort(s, kind="stable"), np.argsort(s_c, kind="stable")))
    ok = criterion(5, simplex and passthrough <= 1e-12 and ranking,
                   f"simplex={simplex}, passthrough err {passthrough:.1e}, ranking preserved={ranking}")
    assert ok


@pytest.mark.criterion(8)
def test_c8_protocol_coverage(criterion, tmp_path):
    m = generate_synthetic_dataset(tmp_path, 6, seed=8, media=("digital", "ps1", "ps2"), posts=("before", "after"),
                                   compression=(False, True), options=SynthOptions(size=64))
    manifest = load_manifest(m)
    cells = enumerate_protocol_cells()
    cfg = replace(Config(descriptor=DescriptorConfig(working_size=64)),
                  fusion=replace(Config().fusion, bootstrap_replicates=5))
    cache, failures = {}, []
    for table, proto, tr, te in cells:
        spec = ExperimentSpec(proto, tr, te, seed=0)
        try:
            select_rows(manifest, spec)
            report, _, _ = run_experiment(manifest, spec, cfg, feature_cache=cache)
            assert 0.0 <= report.d_eer <= 1.0
        except Exception as exc:  # any failure in any cell is a verdict, not a crash
            failures.append(f"{table} {spec.label()}: {exc}")
    tables = sorted({c[0] for c in cells})
    rejected = False
    try:
        select_rows(manifest, ExperimentSpec.parse("intra", "medium=digital,post=before", "medium=ps1,post=before"))
    except ProtocolError:
        rejected = True
    ok = criterion(8, len(cells) == 60 and not failures and rejected,
                   f"{len(cells) - len(failures)}/{len(cells)} cells ran over tables {', '.join(tables)}; "
                   f"illegal intra spec rejected={rejected}")
    assert ok, failures[:3]


# ------------------------------------------------------------------ end to end at 320 px


@pytest.fixture(scope="module")
def synthetic(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept")
    t = time.perf_counter()
    manifest = generate_synthetic_dataset(root / "data", 100, seed=0)
    return root, manifest, time.perf_counter() - t


def _train_and_evaluate(root, manifest, tag, cache=None):
    bundle, out = root / f"{tag}.bin", root / f"{tag}-eval"
    args = ["--cache", str(cache)] if cache else []
    assert main(["train", "--manifest", str(manifest), "--train-select", INTRA, "--seed", "0",
                 "--out", str(bundle), *args]) == 0
    assert main(["evaluate", "--bundle", str(bundle), "--manifest", str(manifest), "--protocol", "intra",
                 "--test-select", INTRA, "--out", str(out), *args]) == 0
    return bundle, out / "report.json"


@pytest.mark.slow
@pytest.mark.criterion(7)
def test_c7_end_to_end_synthetic(criterion, synthetic, tmp_path):
    root, manifest, synth_s = synthetic
    t = time.perf_counter()
    assert main(["extract", "--manifest", str(manifest), "--out", str(root / "cache")]) == 0
    _, report_path = _train_and_evaluate(root, manifest, "run1", cache=root / "cache")
    elapsed = time.perf_counter() - t
    rep = json.loads(report_path.read_text())
    deer, b10 = rep["d_eer"], rep["bpcer_at_apcer"]["0.10"]

    flat = generate_synthetic_dataset(tmp_path / "ghost0", 100, seed=0, options=SynthOptions(ghost=0.0))
    spec = ExperimentSpec.parse("intra", INTRA, INTRA, seed=0)
    flat_report, _, _ = run_experiment(load_manifest(flat), spec, Config())
    ok = criterion(
        7,
        deer <= 0.05 and b10 <= 0.10 and elapsed < 600 and 0.4 <= flat_report.d_eer <= 0.6,
        f"D-EER {100 * deer:.2f}%, BPCER@APCER=10% {100 * b10:.2f}%, pipeline {elapsed:.0f} s "
        f"(+{synth_s:.0f} s synthesis), ghost=0 D-EER {100 * flat_report.d_eer:.2f}%",
    )
    assert ok


@pytest.mark.slow
@pytest.mark.criterion(6)
def test_c6_determinism(criterion, synthetic):
    root, manifest, _ = synthetic
    # one run from cached features, one extracting from the images again
    _, first = _train_and_evaluate(root, manifest, "det-a", cache=root / "cache" if (root / "cache").exists() else None)
    _, second = _train_and_evaluate(root, manifest, "det-b")
    same = first.read_bytes() == second.read_bytes()
    bundles = (root / "det-a.bin").read_bytes() == (root / "det-b.bin").read_bytes()
    ok = criterion(6, same, f"report.json byte-identical={same}, bundles byte-identical={bundles}")
    assert ok


@pytest.mark.slow
def test_score_bona_fide_example(synthetic, capsys):
    """A bona fide synthetic test image scored with the synthetic-trained bundle."""
    root, manifest, _ = synthetic
    bundle = root / "run1.bin"
    if not bundle.exists():
        pytest.skip("needs the end-to-end bundle")
    rows = [r for r in load_manifest(manifest).select("test", {"medium": "digital"}) if not r.is_morph]
    capsys.readouterr()
    assert main(["score", "--bundle", str(bundle), "--image", str(manifest.parent / rows[0].path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[1].endswith(",BonaFide")
