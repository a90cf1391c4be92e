"""ISO/IEC 30107-3 style error rates for morph detection scores.

Scores are oriented so that higher means "more morph-like". At threshold t a
sample is classified Morph when ``score >= t``. All rates are computed from
integer counts and converted to float only on output.
"""

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

EER_DEFINITION = (
    "finite-sample: threshold minimising |APCER-BPCER| over distinct scores, "
    "midpoints and max+1; ties go to the lower threshold; D-EER=(APCER+BPCER)/2"
)


def _as_scores(x, name):
    a = np.asarray(x, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValueError(f"{name} scores are empty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} scores contain non-finite values")
    return a


@dataclass(frozen=True)
class LabeledScores:
    bona_fide: np.ndarray
    morph: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bona_fide", _as_scores(self.bona_fide, "bona fide"))
        object.__setattr__(self, "morph", _as_scores(self.morph, "morph"))

    @classmethod
    def from_labels(cls, scores, is_morph):
        scores = np.asarray(scores, dtype=np.float64)
        is_morph = np.asarray(is_morph, dtype=bool)
        return cls(scores[~is_morph], scores[is_morph])


def apcer(morph_scores, threshold):
    """Fraction of morphs scored below ``threshold`` (accepted as bona fide)."""
    m = _as_scores(morph_scores, "morph")
    return int(np.count_nonzero(m < threshold)) / m.size


def bpcer(bona_scores, threshold):
    """Fraction of bona fide samples scored at or above ``threshold``."""
    b = _as_scores(bona_scores, "bona fide")
    return int(np.count_nonzero(b >= threshold)) / b.size


def candidate_thresholds(ls: LabeledScores):
    s = np.unique(np.concatenate([ls.bona_fide, ls.morph]))
    mids = (s[:-1] + s[1:]) / 2.0
    cand = np.empty(2 * s.size, dtype=np.float64)
    cand[0::2] = s
    cand[1:-1:2] = mids
    cand[-1] = s[-1] + 1.0
    return cand


def _error_counts(ls, thresholds):
    m = np.sort(ls.morph)
    b = np.sort(ls.bona_fide)
    a_cnt = np.searchsorted(m, thresholds, side="left").astype(np.int64)
    b_cnt = b.size - np.searchsorted(b, thresholds, side="left").astype(np.int64)
    return a_cnt, b_cnt


def d_eer_exact(ls: LabeledScores):
    """D-EER as a Fraction together with its threshold."""
    t = candidate_thresholds(ls)
    a, b = _error_counts(ls, t)
    nm, nb = ls.morph.size, ls.bona_fide.size
    gap = np.abs(a * nb - b * nm)
    i = int(np.argmin(gap))
    return Fraction(int(a[i]) * nb + int(b[i]) * nm, 2 * nm * nb), float(t[i])


def d_eer(ls: LabeledScores):
    eer, thr = d_eer_exact(ls)
    return float(eer), thr


def bpcer_at_apcer_exact(ls: LabeledScores, target):
    """Lowest BPCER over thresholds with APCER <= target.

    Returns ``(bpcer, threshold, attainable)``. APCER is 0 at the lowest
    candidate, so ``attainable`` is only False for a negative target.
    """
    t = candidate_thresholds(ls)
    a, b = _error_counts(ls, t)
    nm, nb = ls.morph.size, ls.bona_fide.size
    tgt = Fraction(target).limit_denominator(10 ** 9)
    ok = a * tgt.denominator <= tgt.numerator * nm
    if not ok.any():
        return Fraction(int(b[-1]), nb), float(t[-1]), False
    # BPCER is nonincreasing in the threshold, so the largest qualifying one wins.
    i = int(np.flatnonzero(ok)[-1])
    return Fraction(int(b[i]), nb), float(t[i]), True


def bpcer_at_apcer(ls: LabeledScores, target):
    val, thr, attainable = bpcer_at_apcer_exact(ls, target)
    return float(val), thr, attainable


def det_curve(ls: LabeledScores):
    """``(threshold, apcer, bpcer)`` at every candidate threshold, ascending."""
    t = candidate_thresholds(ls)
    a, b = _error_counts(ls, t)
    return [(float(ti), int(ai) / ls.morph.size, int(bi) / ls.bona_fide.size) for ti, ai, bi in zip(t, a, b)]


@dataclass
class EvalReport:
    d_eer: float
    eer_threshold: float
    bpcer_at_apcer: dict
    det_points: list
    n_bona_fide: int
    n_morph: int
    operating_threshold: float | None = None
    apcer_at_operating: float | None = None
    bpcer_at_operating: float | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "d_eer": self.d_eer,
            "eer_threshold": self.eer_threshold,
            "bpcer_at_apcer": {f"{k:.2f}": v for k, v in sorted(self.bpcer_at_apcer.items())},
            "n_bona_fide": self.n_bona_fide,
            "n_morph": self.n_morph,
            "operating_threshold": self.operating_threshold,
            "apcer_at_operating": self.apcer_at_operating,
            "bpcer_at_operating": self.bpcer_at_operating,
            "det_points": [{"threshold": t, "apcer": a, "bpcer": b} for t, a, b in self.det_points],
            "metadata": self.metadata,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def det_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "apcer", "bpcer"])
        for t, a, b in self.det_points:
            w.writerow([repr(t), repr(a), repr(b)])
        return buf.getvalue()

    def summary(self):
        lines = [
            f"D-EER            {100 * self.d_eer:6.2f} %",
            f"BPCER@APCER=5%   {100 * self.bpcer_at_apcer[0.05]:6.2f} %",
            f"BPCER@APCER=10%  {100 * self.bpcer_at_apcer[0.10]:6.2f} %",
        ]
        if self.operating_threshold is not None:
            lines.append(
                f"at dev threshold {self.operating_threshold:.4f}: "
                f"APCER {100 * self.apcer_at_operating:.2f} %, BPCER {100 * self.bpcer_at_operating:.2f} %"
            )
        return "\n".join(lines)


def evaluate(ls: LabeledScores, operating_threshold=None, targets=(0.05, 0.10), metadata=None):
    eer, thr = d_eer(ls)
    report = EvalReport(
        d_eer=eer,
        eer_threshold=thr,
        bpcer_at_apcer={t: bpcer_at_apcer(ls, t)[0] for t in targets},
        det_points=det_curve(ls),
        n_bona_fide=int(ls.bona_fide.size),
        n_morph=int(ls.morph.size),
        metadata={"eer_definition": EER_DEFINITION, **(metadata or {})},
    )
    if operating_threshold is not None:
        report.operating_threshold = float(operating_threshold)
        report.apcer_at_operating = apcer(ls.morph, operating_threshold)
        report.bpcer_at_operating = bpcer(ls.bona_fide, operating_threshold)
    return report
