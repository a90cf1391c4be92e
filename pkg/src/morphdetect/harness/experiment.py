"""Experiment protocols, the protocol cell matrix, and the end-to-end runner."""

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..classifiers import MORPH
from ..config import Config
from ..detector import extract_many, train_detector
from ..metrics import LabeledScores, evaluate
from .bundle import save_bundle
from .manifest import ENUMS, ManifestError, check_subject_disjoint, format_selector, parse_selector

log = logging.getLogger(__name__)

PROTOCOLS = ("intra", "inter_medium", "inter_medium_varied_post")


class ProtocolError(ValueError):
    pass


def normalize_protocol(name):
    p = name.replace("-", "_")
    if p not in PROTOCOLS:
        raise ProtocolError(f"unknown protocol {name!r}; choose from {', '.join(x.replace('_', '-') for x in PROTOCOLS)}")
    return p


@dataclass(frozen=True)
class ExperimentSpec:
    protocol: str
    train_select: dict
    test_select: dict
    seed: int = 0
    overrides: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, protocol, train_select, test_select, seed=0, overrides=None):
        return cls(normalize_protocol(protocol), parse_selector(train_select), parse_selector(test_select),
                   seed, dict(overrides or {}))

    def label(self):
        return f"{self.protocol}: train[{format_selector(self.train_select)}] test[{format_selector(self.test_select)}]"

    def to_dict(self):
        return {
            "protocol": self.protocol,
            "train_select": format_selector(self.train_select),
            "test_select": format_selector(self.test_select),
            "seed": self.seed,
            "overrides": self.overrides,
        }


def validate_protocol(protocol, train_select, test_select):
    """Raise ProtocolError unless the selectors fit the protocol.

    intra: same medium and post (compression must match when given);
    inter_medium: different medium, same post;
    inter_medium_varied_post: different post.
    """
    protocol = normalize_protocol(protocol)
    tr, te = train_select, test_select

    def need(key):
        if key not in tr or key not in te:
            raise ProtocolError(f"{protocol} protocol requires {key}= in both selectors")

    if protocol == "intra":
        need("medium")
        need("post")
        for k in ("medium", "post", "compressed"):
            if tr.get(k) != te.get(k):
                raise ProtocolError(
                    f"intra protocol violation: train {k}={tr.get(k)} but test {k}={te.get(k)}"
                )
    elif protocol == "inter_medium":
        need("medium")
        need("post")
        if tr["medium"] == te["medium"]:
            raise ProtocolError(f"inter-medium protocol violation: both selectors use medium={tr['medium']}")
        if tr["post"] != te["post"]:
            raise ProtocolError("inter-medium protocol violation: post-processing differs; use inter-medium-varied-post")
    else:
        need("post")
        if tr["post"] == te["post"]:
            raise ProtocolError(f"varied-post protocol violation: both selectors use post={tr['post']}")


def enumerate_protocol_cells(media=ENUMS["medium"], compression=("no", "yes")):
    """All (table, protocol, train selector, test selector) cells of the results grid.

    Table II is within-medium; IV and V are cross-medium before and after
    post-processing; VI-a/VI-b train on one post state and test on the other
    across media.
    """
    pairs = [(a, b) for a in media for b in media if a != b]
    cells = []
    for comp in compression:
        for m in media:
            for post in ENUMS["post"]:
                sel = {"medium": m, "post": post, "compressed": comp}
                cells.append(("II", "intra", sel, dict(sel)))
    for table, post in (("IV", "before"), ("V", "after")):
        for comp in compression:
            for a, b in pairs:
                cells.append((table, "inter_medium", {"medium": a, "post": post, "compressed": comp},
                              {"medium": b, "post": post, "compressed": comp}))
    for table, (p_train, p_test) in (("VI-a", ("after", "before")), ("VI-b", ("before", "after"))):
        for comp in compression:
            for a, b in pairs:
                cells.append((table, "inter_medium_varied_post",
                              {"medium": a, "post": p_train, "compressed": comp},
                              {"medium": b, "post": p_test, "compressed": comp}))
    return cells


def config_for(spec: ExperimentSpec, config: Config):
    cfg = replace(config, seed=spec.seed)
    if spec.overrides:
        unknown = set(spec.overrides) - set(vars(cfg.classifiers))
        if unknown:
            raise ProtocolError(f"unknown hyperparameter override(s): {sorted(unknown)}")
        cfg = replace(cfg, classifiers=replace(cfg.classifiers, **spec.overrides))
    return cfg.validate()


def select_rows(manifest, spec: ExperimentSpec):
    validate_protocol(spec.protocol, spec.train_select, spec.test_select)
    train = manifest.select("train", spec.train_select)
    test = manifest.select("test", spec.test_select)
    for name, rows, sel in (("train", train, spec.train_select), ("test", test, spec.test_select)):
        if not rows:
            raise ManifestError(f"empty {name} selection for [{format_selector(sel)}]")
    check_subject_disjoint(train, test)
    return train, test


def labels_of(rows):
    return np.array([MORPH if r.is_morph else 0 for r in rows], dtype=np.int64)


def run_experiment(manifest, spec: ExperimentSpec, config: Config = Config(), out_dir=None, feature_cache=None):
    """Extract, train, fuse, score and evaluate one protocol cell.

    Returns (EvalReport, Detector, run directory or None). ``feature_cache`` is
    an optional dict shared across calls so features are extracted once.
    """
    cfg = config_for(spec, config)
    train_rows, test_rows = select_rows(manifest, spec)
    t0 = time.perf_counter()
    desc = cfg.descriptor
    x_train = extract_many([manifest.resolve(r) for r in train_rows], desc, cfg.workers, feature_cache)
    x_test = extract_many([manifest.resolve(r) for r in test_rows], desc, cfg.workers, feature_cache)
    t1 = time.perf_counter()
    detector = train_detector(x_train, labels_of(train_rows), cfg, metadata=training_metadata(spec, train_rows))
    t2 = time.perf_counter()
    scores = detector.fused_scores(x_test)
    report = evaluate(
        LabeledScores.from_labels(scores, labels_of(test_rows) == MORPH),
        operating_threshold=detector.threshold,
        metadata=report_metadata(spec, cfg, detector, len(train_rows)),
    )
    t3 = time.perf_counter()
    timings = {"extract_s": t1 - t0, "train_s": t2 - t1, "score_s": t3 - t2, "total_s": t3 - t0}
    log.info("%s -> D-EER %.2f%% (%.1f s)", spec.label(), 100 * report.d_eer, timings["total_s"])

    run_dir = None
    if out_dir is not None:
        run_dir = write_run(out_dir, spec, cfg, report, detector, timings)
    return report, detector, run_dir


def training_metadata(spec, train_rows):
    return {
        "protocol": spec.protocol,
        "train_select": format_selector(spec.train_select),
        "train_subjects": sorted({s for r in train_rows for s in r.subjects}),
    }


def report_metadata(spec, cfg, detector, n_train):
    return {
        "protocol": spec.protocol,
        "train_select": format_selector(spec.train_select),
        "test_select": format_selector(spec.test_select),
        "seed": cfg.seed,
        "n_train": n_train,
        "descriptor_digest": cfg.descriptor.digest(),
        "fusion_weights": detector.weights.to_dict(),
        "dev_d_eer": detector.metadata.get("dev_d_eer"),
    }


def write_run(out_dir, spec, cfg, report, detector, timings):
    """Persist ``runs/<timestamp>-<hash>/{report.json, det.csv, bundle.bin, config.json}``."""
    key = json.dumps({"spec": spec.to_dict(), "config": cfg.to_dict()}, sort_keys=True)
    digest = hashlib.sha256(key.encode()).hexdigest()[:10]
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    run_dir = Path(out_dir) / "runs" / f"{stamp}-{digest}"
    run_dir.mkdir(parents=True, exist_ok=False)
    (run_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (run_dir / "det.csv").write_text(report.det_csv(), encoding="utf-8")
    save_bundle(run_dir / "bundle.bin", detector)
    record = {"spec": spec.to_dict(), "config": cfg.to_dict(), "timings": timings, "created": stamp}
    (run_dir / "config.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return run_dir
