from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morphdetect.metrics import (
    EER_DEFINITION,
    LabeledScores,
    apcer,
    bpcer,
    bpcer_at_apcer,
    bpcer_at_apcer_exact,
    d_eer,
    d_eer_exact,
    det_curve,
    evaluate,
)
from oracles import bpcer_at_apcer_oracle, d_eer_oracle


def test_apcer_bpcer_examples():
    assert apcer([0.7, 0.8, 0.9], 0.5) == 0
    assert apcer([0.2, 0.8], 0.5) == 0.5
    assert bpcer([0.1, 0.2, 0.3], 0.5) == 0
    assert bpcer([0.2, 0.8], 0.5) == 0.5
    assert bpcer([0.5], 0.5) == 1.0  # score == threshold is classified Morph
    assert apcer([0.5], 0.5) == 0.0


def test_rates_match_direct_count():
    rng = np.random.default_rng(0)
    s = rng.random(100)
    for t in rng.random(10):
        assert apcer(s, t) == sum(1 for v in s if v < t) / 100
        assert bpcer(s, t) == sum(1 for v in s if v >= t) / 100


def test_d_eer_examples():
    assert d_eer(LabeledScores([0.1, 0.2, 0.3], [0.7, 0.8, 0.9]))[0] == 0.0
    eer, thr = d_eer_exact(LabeledScores([0.6, 0.2, 0.3, 0.1], [0.7, 0.8, 0.4, 0.5]))
    assert eer == Fraction(1, 4)
    assert apcer([0.7, 0.8, 0.4, 0.5], thr) == bpcer([0.6, 0.2, 0.3, 0.1], thr) == 0.25
    same = [0.1, 0.5, 0.9, 0.3]
    assert d_eer(LabeledScores(same, same))[0] == 0.5


def test_bpcer_at_apcer_examples():
    ls = LabeledScores([0.1, 0.2, 0.3], [0.7, 0.8, 0.9])
    assert bpcer_at_apcer(ls, 0.05)[0] == 0.0 and bpcer_at_apcer(ls, 0.10)[0] == 0.0
    # target 1.0: every threshold qualifies, including the top one where BPCER is 0
    rng = np.random.default_rng(1)
    ls = LabeledScores(rng.random(30), rng.random(30))
    val, thr, ok = bpcer_at_apcer(ls, 1.0)
    assert ok and val == 0.0 and thr > max(ls.bona_fide.max(), ls.morph.max())


def test_bpcer_at_apcer_overlap_case():
    rng = np.random.default_rng(2)
    bona = rng.uniform(0.0, 0.5, 20)
    morph = rng.uniform(0.5, 1.0, 20)
    # shift so the four lowest morphs fall among the bona fide scores
    morph[np.argsort(morph)[:4]] -= 0.3
    ls = LabeledScores(bona, morph)
    for target in (0.05, 0.10, 0.20):
        assert bpcer_at_apcer_exact(ls, target)[0] == bpcer_at_apcer_oracle(bona, morph, target)


def test_oracle_equivalence_200_sets():
    rng = np.random.default_rng(3)
    for i in range(200):
        nb, nm = rng.integers(1, 501, 2)
        # quantised scores exercise ties
        q = rng.choice([None, 10, 100])
        bona = rng.normal(0.0, 1.0, nb)
        morph = rng.normal(rng.uniform(0, 2), 1.0, nm)
        if q:
            bona, morph = np.round(bona * q) / q, np.round(morph * q) / q
        ls = LabeledScores(bona, morph)
        assert d_eer_exact(ls)[0] == d_eer_oracle(bona, morph), i
        for target in (0.05, 0.10):
            assert bpcer_at_apcer_exact(ls, target)[0] == bpcer_at_apcer_oracle(bona, morph, target), i


scores = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=40)


@settings(max_examples=200, deadline=None)
@given(bona=scores, morph=scores)
def test_det_monotone_and_bounded(bona, morph):
    pts = det_curve(LabeledScores(bona, morph))
    thr = [p[0] for p in pts]
    assert thr == sorted(thr)
    a = [p[1] for p in pts]
    b = [p[2] for p in pts]
    # APCER rises and BPCER falls as the threshold rises
    assert all(x <= y for x, y in zip(a, a[1:]))
    assert all(x >= y for x, y in zip(b, b[1:]))
    assert a[0] == 0.0 and b[0] == 1.0 and a[-1] == 1.0 and b[-1] == 0.0
    for t, ai, bi in pts:
        assert ai == apcer(morph, t) and bi == bpcer(bona, t)


@settings(max_examples=200, deadline=None)
@given(bona=scores, morph=scores)
def test_d_eer_invariant_under_increasing_map(bona, morph):
    base = d_eer_exact(LabeledScores(bona, morph))[0]
    # strictly increasing in exact arithmetic: a cubic of each value's rank
    levels = np.unique(np.concatenate([bona, morph]))
    f = lambda x: np.searchsorted(levels, x).astype(np.float64) ** 3 - 7.5  # noqa: E731
    assert d_eer_exact(LabeledScores(f(bona), f(morph)))[0] == base
    assert 0 <= base <= 1  # 1 when every morph scores below every bona fide


def test_empty_and_nonfinite_rejected():
    with pytest.raises(ValueError, match="empty"):
        LabeledScores([], [0.1])
    with pytest.raises(ValueError, match="non-finite"):
        LabeledScores([np.nan], [0.1])
    with pytest.raises(ValueError):
        apcer([], 0.5)


def test_report_serialisation():
    rep = evaluate(LabeledScores([0.6, 0.2, 0.3, 0.1], [0.7, 0.8, 0.4, 0.5]), operating_threshold=0.45,
                   metadata={"run": "x"})
    d = rep.to_dict()
    assert d["d_eer"] == 0.25 and set(d["bpcer_at_apcer"]) == {"0.05", "0.10"}
    assert d["metadata"]["eer_definition"] == EER_DEFINITION and d["metadata"]["run"] == "x"
    assert rep.apcer_at_operating == 0.25 and rep.bpcer_at_operating == 0.25
    assert rep.to_json() == rep.to_json()
    lines = rep.det_csv().splitlines()
    assert lines[0] == "threshold,apcer,bpcer" and len(lines) == len(rep.det_points) + 1
    assert "D-EER             25.00 %" in rep.summary()
