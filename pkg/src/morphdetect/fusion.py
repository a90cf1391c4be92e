"""Two-level weighted-sum fusion of the 3x3 (feature x classifier) score grid.

Level 1 has one fusion unit per classifier, combining its three feature
streams. Level 2 combines the three classifier-level scores. Stream weights
are estimated on a development split from bootstrapped D-EERs.
"""

import json
from dataclasses import dataclass

import numpy as np

from .classifiers import CLASSIFIER_KINDS, MORPH
from .features import FEATURE_TYPES
from .metrics import LabeledScores, d_eer

WEIGHTING_RULES = ("one_minus_eer", "inverse_eer")
INVERSE_EER_FLOOR = 0.01


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class NormalizationParams:
    lo: np.ndarray  # (3 features, 3 classifiers)
    hi: np.ndarray

    @property
    def degenerate(self):
        return ~(self.hi > self.lo)

    @classmethod
    def fit(cls, grids):
        grids = np.asarray(grids, dtype=np.float64)
        return cls(grids.min(axis=0), grids.max(axis=0))


@dataclass(frozen=True)
class FusionWeights:
    level1: np.ndarray  # (3 classifiers, 3 features)
    level2: np.ndarray  # (3 classifiers,)

    def __post_init__(self):
        for name, w in (("level1", self.level1), ("level2", self.level2.reshape(1, -1))):
            if np.any(w < 0) or np.any(np.abs(w.sum(axis=-1) - 1.0) > 1e-9):
                raise FusionError(f"{name} weights must be nonnegative and sum to 1 per unit")

    @classmethod
    def uniform(cls):
        return cls(np.full((3, 3), 1.0 / 3.0), np.full(3, 1.0 / 3.0))

    def to_dict(self):
        return {
            "level1": {c: dict(zip(FEATURE_TYPES, map(float, self.level1[ci]))) for ci, c in enumerate(CLASSIFIER_KINDS)},
            "level2": dict(zip(CLASSIFIER_KINDS, map(float, self.level2))),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def normalize_scores(params: NormalizationParams, grids):
    """Min-max map each stream to [0, 1], clipping outside the learned range.

    Degenerate streams (max == min on the dev split) map to 0.
    """
    grids = np.asarray(grids, dtype=np.float64)
    span = np.where(params.degenerate, 1.0, params.hi - params.lo)
    out = np.clip((grids - params.lo) / span, 0.0, 1.0)
    return np.where(params.degenerate, 0.0, out)


def fuse_level1(weights: FusionWeights, normalized):
    """Per classifier c: sum over features f of w[c, f] * score[f, c]."""
    return np.einsum("...fc,cf->...c", np.asarray(normalized, dtype=np.float64), weights.level1)


def fuse_level2(weights: FusionWeights, level1_scores):
    return np.asarray(level1_scores, dtype=np.float64) @ weights.level2


def weights_from_eers(eers, degenerate=None, rule="one_minus_eer"):
    """Normalised weights from per-stream mean D-EERs; degenerate streams get 0."""
    eers = np.asarray(eers, dtype=np.float64)
    if rule == "one_minus_eer":
        raw = 1.0 - eers
    elif rule == "inverse_eer":
        raw = 1.0 / np.maximum(eers, INVERSE_EER_FLOOR)
    else:
        raise FusionError(f"unknown weighting rule {rule!r}")
    raw = np.maximum(raw, 0.0)
    if degenerate is not None:
        raw = np.where(degenerate, 0.0, raw)
    total = raw.sum()
    if not total > 0:
        raise FusionError("all streams in a fusion unit are degenerate")
    return raw / total


def _bootstrap_eers(streams, is_morph, replicates):
    """Mean D-EER of each column of ``streams`` over the replicate index sets."""
    eers = np.zeros(streams.shape[1])
    for idx in replicates:
        s, m = streams[idx], is_morph[idx]
        for k in range(streams.shape[1]):
            eers[k] += d_eer(LabeledScores(s[~m, k], s[m, k]))[0]
    return eers / len(replicates)


def bootstrap_replicates(labels, n_replicates, seed, resample=True):
    """Index arrays resampled with replacement within each class."""
    labels = np.asarray(labels)
    if not resample:
        return [np.arange(labels.size)]
    rng = np.random.default_rng(seed)
    bona = np.flatnonzero(labels != MORPH)
    morph = np.flatnonzero(labels == MORPH)
    return [
        np.concatenate([rng.choice(bona, bona.size, replace=True), rng.choice(morph, morph.size, replace=True)])
        for _ in range(n_replicates)
    ]


@dataclass(frozen=True)
class WeightEstimate:
    weights: FusionWeights
    params: NormalizationParams
    level1_eers: np.ndarray  # (3 features, 3 classifiers) mean bootstrapped D-EER
    level2_eers: np.ndarray  # (3,)


def estimate_weights_bootstrap(dev_grids, labels, n_replicates=100, seed=0, resample=True, rule="one_minus_eer"):
    """Fusion weights and normalisation learned on development scores.

    ``dev_grids`` is (n, 3, 3) raw scores, ``labels`` 0/1 per row.
    """
    dev_grids = np.asarray(dev_grids, dtype=np.float64)
    labels = np.asarray(labels)
    is_morph = labels == MORPH
    if is_morph.all() or not is_morph.any():
        raise FusionError("development set must contain both classes")
    if n_replicates < 1:
        raise FusionError("need at least one bootstrap replicate")

    params = NormalizationParams.fit(dev_grids)
    if params.degenerate.all():
        raise FusionError("all score streams are constant on the development set")
    norm = normalize_scores(params, dev_grids)
    reps = bootstrap_replicates(labels, n_replicates, seed, resample)

    nf, nc = len(FEATURE_TYPES), len(CLASSIFIER_KINDS)
    eer1 = _bootstrap_eers(norm.reshape(len(norm), nf * nc), is_morph, reps).reshape(nf, nc)
    level1 = np.stack([weights_from_eers(eer1[:, c], params.degenerate[:, c], rule) for c in range(nc)])

    partial = FusionWeights(level1, np.full(nc, 1.0 / nc))
    fused1 = fuse_level1(partial, norm)
    deg2 = ~(fused1.max(axis=0) > fused1.min(axis=0))
    eer2 = _bootstrap_eers(fused1, is_morph, reps)
    level2 = weights_from_eers(eer2, deg2, rule)
    return WeightEstimate(FusionWeights(level1, level2), params, eer1, eer2)


def fuse(weights: FusionWeights, params: NormalizationParams, grids):
    """Raw (..., 3, 3) score grids to final fused scores in [0, 1]."""
    return fuse_level2(weights, fuse_level1(weights, normalize_scores(params, grids)))


def decide(score, threshold):
    """'Morph' when ``score >= threshold``, else 'BonaFide'."""
    return "Morph" if score >= threshold else "BonaFide"
