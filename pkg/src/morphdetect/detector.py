"""End-to-end detector: image -> 3x3 score grid -> fused morph score."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import features as feat
from .classifiers import CLASSIFIER_KINDS, MORPH, score_matrix, train_models
from .config import Config, DescriptorConfig
from .features import FEATURE_TYPES
from .fusion import FusionWeights, NormalizationParams, decide, estimate_weights_bootstrap, fuse
from .imaging import decompose_color_spaces, load_image
from .metrics import LabeledScores, d_eer
from .scalespace import build_scale_space_stack

log = logging.getLogger(__name__)


def extract_features(path, desc: DescriptorConfig = DescriptorConfig()):
    rgb = load_image(path, desc.working_size, desc.center_crop)
    stack = build_scale_space_stack(decompose_color_spaces(rgb, str(path)), desc.pyramid_levels)
    return feat.extract_feature_set(stack, None, desc.lbp_radius, desc.hog_cell, desc.hog_bins, desc.hog_block)


def _extract_job(args):
    path, desc = args
    return extract_features(path, desc)


def extract_many(paths, desc: DescriptorConfig = DescriptorConfig(), workers=1, cache=None):
    """Feature matrices {type: (n, d)} in the order of ``paths``.

    ``cache`` is an optional dict keyed by (path, descriptor digest) that is
    consulted and filled; worker count never changes the result.
    """
    paths = [str(p) for p in paths]
    digest = desc.digest()
    out = None

    def put(i, fs):
        nonlocal out
        if out is None:
            out = {ft: np.empty((len(paths), fs[ft].size)) for ft in FEATURE_TYPES}
        for ft in FEATURE_TYPES:
            out[ft][i] = fs[ft]

    todo = []
    for i, p in enumerate(paths):
        if cache is not None and (p, digest) in cache:
            put(i, cache[(p, digest)])
        else:
            todo.append(i)
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = ex.map(_extract_job, [(paths[i], desc) for i in todo], chunksize=4)
            for i, fs in zip(todo, results):
                put(i, fs)
                if cache is not None:
                    cache[(paths[i], digest)] = fs
    else:
        for i in todo:
            fs = extract_features(paths[i], desc)
            put(i, fs)
            if cache is not None:
                cache[(paths[i], digest)] = fs
    if out is None:
        raise ValueError("no images to extract")
    return out


def dev_split(labels, fraction, seed):
    """Stratified (fit, dev) index arrays; at least one dev and two fit rows per class."""
    labels = np.asarray(labels)
    rng = np.random.default_rng([seed, 0])
    fit, dev = [], []
    for c in (0, 1):
        idx = np.flatnonzero(labels == c)
        k = max(1, int(round(fraction * idx.size)))
        if idx.size - k < 2:
            raise ValueError(f"class {c} has {idx.size} training rows; need at least 3 for a dev carve-out")
        perm = rng.permutation(idx)
        dev.append(perm[:k])
        fit.append(perm[k:])
    return np.sort(np.concatenate(fit)), np.sort(np.concatenate(dev))


@dataclass
class Detector:
    models: dict
    weights: FusionWeights
    params: NormalizationParams
    threshold: float
    descriptor: DescriptorConfig
    hyperparams: dict
    metadata: dict = field(default_factory=dict)

    def score_grids(self, feature_matrices):
        return score_matrix(self.models, feature_matrices)

    def fused_scores(self, feature_matrices):
        return fuse(self.weights, self.params, self.score_grids(feature_matrices))

    def decide(self, score):
        return decide(score, self.threshold)


def train_detector(feature_matrices, labels, config: Config = Config(), metadata=None):
    """Dev carve-out, nine classifiers, bootstrap fusion weights and a dev D-EER threshold."""
    labels = np.asarray(labels, dtype=np.int64)
    fit, dev = dev_split(labels, config.fusion.dev_fraction, config.seed)
    hyper = {k: v for k, v in vars(config.classifiers).items()}
    log.info("training 9 models on %d rows (%d dev rows held out)", fit.size, dev.size)
    models = train_models({ft: m[fit] for ft, m in feature_matrices.items()}, labels[fit], hyper)
    dev_grids = score_matrix(models, {ft: m[dev] for ft, m in feature_matrices.items()})
    est = estimate_weights_bootstrap(
        dev_grids, labels[dev], config.fusion.bootstrap_replicates, [config.seed, 1], rule=config.fusion.weighting
    )
    dev_fused = fuse(est.weights, est.params, dev_grids)
    dev_eer, threshold = d_eer(LabeledScores.from_labels(dev_fused, labels[dev] == MORPH))
    meta = {
        "seed": config.seed,
        "n_fit": int(fit.size),
        "n_dev": int(dev.size),
        "dev_d_eer": dev_eer,
        "dev_stream_eers": {
            f"{ft}/{kind}": float(est.level1_eers[fi, ci])
            for fi, ft in enumerate(FEATURE_TYPES)
            for ci, kind in enumerate(CLASSIFIER_KINDS)
        },
        "dev_level2_eers": dict(zip(CLASSIFIER_KINDS, map(float, est.level2_eers))),
        **(metadata or {}),
    }
    return Detector(models, est.weights, est.params, float(threshold), config.descriptor, hyper, meta)
