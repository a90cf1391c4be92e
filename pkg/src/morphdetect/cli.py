"""morphdetect command line.

Machine-readable output goes to stdout or --out files; logs go to stderr.
Every command exits 0 on success and 1 with a one-line diagnostic on error.
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .classifiers import MORPH
from .config import ConfigError, load_config
from .detector import extract_many, train_detector
from .features import FEATURE_TYPES, FilterBankError, describe_dims
from .harness.bundle import BundleError, load_bundle, load_features, save_bundle, save_features
from .harness.experiment import (
    ExperimentSpec,
    ProtocolError,
    enumerate_protocol_cells,
    labels_of,
    normalize_protocol,
    report_metadata,
    run_experiment,
    training_metadata,
    validate_protocol,
)
from .harness.manifest import ManifestError, format_selector, load_manifest, parse_selector
from .harness.synth import MEDIA, POSTS, SynthOptions, generate_synthetic_dataset
from .imaging import ImageError
from .metrics import LabeledScores, evaluate

log = logging.getLogger("morphdetect")

PROTOCOL_CHOICES = ("intra", "inter-medium", "inter-medium-varied-post")


class CLIError(Exception):
    pass


def _config(args):
    return load_config(getattr(args, "config", None)).with_overrides(
        seed=getattr(args, "seed", None), workers=getattr(args, "workers", None)
    )


def _feature_matrices(manifest, rows, cfg, cache_dir=None, partition=None):
    """Feature matrices for ``rows``, from the cache directory when given."""
    if cache_dir is None:
        return extract_many([manifest.resolve(r) for r in rows], cfg.descriptor, cfg.workers)
    out = {}
    for ft in FEATURE_TYPES:
        path = Path(cache_dir) / f"{ft}_{partition}.bin"
        matrix, _, cached = load_features(path, cfg.descriptor)
        index = {rec["path"]: i for i, rec in enumerate(cached)}
        missing = [r.path for r in rows if r.path not in index]
        if missing:
            raise CLIError(f"{path}: no cached features for {missing[0]} (re-run extract)")
        out[ft] = matrix[[index[r.path] for r in rows]]
    return out


# ---------------------------------------------------------------- commands


def cmd_extract(args):
    cfg = _config(args)
    manifest = load_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for partition in ("train", "test"):
        rows = manifest.select(partition)
        if not rows:
            continue
        log.info("extracting %d %s images", len(rows), partition)
        mats = extract_many([manifest.resolve(r) for r in rows], cfg.descriptor, cfg.workers)
        recs = [asdict(r) for r in rows]
        for ft in FEATURE_TYPES:
            path = save_features(out / f"{ft}_{partition}.bin", mats[ft], ft, recs, cfg.descriptor)
            print(f"{path}\t{mats[ft].shape[0]}x{mats[ft].shape[1]}")
    return 0


def cmd_train(args):
    cfg = _config(args)
    manifest = load_manifest(args.manifest)
    sel = parse_selector(args.train_select)
    rows = manifest.select("train", sel)
    if not rows:
        raise CLIError(f"empty train selection for [{format_selector(sel)}]")
    x = _feature_matrices(manifest, rows, cfg, args.cache, "train")
    spec = ExperimentSpec("intra", sel, sel, cfg.seed)
    det = train_detector(x, labels_of(rows), cfg, metadata=training_metadata(spec, rows))
    path = save_bundle(args.out, det)
    log.info("bundle written to %s (dev D-EER %.2f%%)", path, 100 * det.metadata["dev_d_eer"])
    print(path)
    return 0


def cmd_score(args):
    det = load_bundle(args.bundle)
    if args.image:
        paths = [Path(p) for p in args.image]
    else:
        manifest = load_manifest(args.manifest)
        rows = manifest.select(args.partition, parse_selector(args.test_select))
        if not rows:
            raise CLIError("empty selection")
        paths = [manifest.resolve(r) for r in rows]
    workers = args.workers or 1
    scores = det.fused_scores(extract_many(paths, det.descriptor, workers))
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("path", "score", "decision"))
        for p, s in zip(paths, scores):
            w.writerow((str(p), repr(float(s)), det.decide(s)))
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_evaluate(args):
    det = load_bundle(args.bundle)
    manifest = load_manifest(args.manifest)
    train_sel = parse_selector(det.metadata.get("train_select", ""))
    test_sel = parse_selector(args.test_select)
    validate_protocol(normalize_protocol(args.protocol), train_sel, test_sel)
    rows = manifest.select("test", test_sel)
    if not rows:
        raise CLIError(f"empty test selection for [{format_selector(test_sel)}]")
    leaked = sorted(set(det.metadata.get("train_subjects", ())) & {s for r in rows for s in r.subjects})
    if leaked:
        raise CLIError(f"subject leakage between bundle training set and test set: {', '.join(leaked[:10])}")
    # features must be computed with the descriptor the bundle was trained on
    cfg = load_config(args.config).with_overrides(workers=args.workers)
    cfg = replace(cfg, seed=det.metadata.get("seed", 0), descriptor=det.descriptor)
    x = _feature_matrices(manifest, rows, cfg, args.cache, "test")
    scores = det.fused_scores(x)
    spec = ExperimentSpec(normalize_protocol(args.protocol), train_sel, test_sel, cfg.seed)
    report = evaluate(
        LabeledScores.from_labels(scores, labels_of(rows) == MORPH),
        operating_threshold=det.threshold,
        metadata=report_metadata(spec, cfg, det, det.metadata.get("n_fit", 0) + det.metadata.get("n_dev", 0)),
    )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "det.csv").write_text(report.det_csv(), encoding="utf-8")
        log.info("%s", report.summary())
        print(out / "report.json")
    else:
        sys.stdout.write(report.to_json())
    return 0


def cmd_run(args):
    cfg = _config(args)
    manifest = load_manifest(args.manifest)
    spec = ExperimentSpec.parse(args.protocol, args.train_select, args.test_select, cfg.seed)
    report, _, run_dir = run_experiment(manifest, spec, cfg, out_dir=args.out)
    log.info("%s", report.summary())
    print(run_dir)
    return 0


def cmd_protocols(args):
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("table", "protocol", "train_select", "test_select"))
    for table, proto, tr, te in enumerate_protocol_cells():
        w.writerow((table, proto.replace("_", "-"), format_selector(tr), format_selector(te)))
    return 0


def cmd_synth(args):
    opts = SynthOptions(ghost=args.ghost, size=args.size)
    path = generate_synthetic_dataset(
        args.out, args.n, args.seed, media=tuple(args.media), posts=tuple(args.posts),
        compression=(False, True) if args.compression == "both" else (args.compression == "yes",), options=opts,
    )
    print(path)
    return 0


def cmd_describe_dims(args):
    d = _config(args).descriptor
    rows, totals = describe_dims(d.working_size, d.pyramid_levels, 6, d.hog_cell, d.hog_bins, d.hog_block, d.bsif_bits)
    print(json.dumps({"working_size": d.working_size, "levels": rows, "totals": totals}, indent=2))
    return 0


# ---------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="morphdetect", description="Single-image face morphing attack detection")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="JSON or TOML config file")
        sp.add_argument("--workers", type=int, help="feature extraction processes")
        if seed:
            sp.add_argument("--seed", type=int)

    sp = sub.add_parser("extract", help="cache features per (feature type, partition)")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True, help="cache directory")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("train", help="train the nine classifiers and fusion weights")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--cache", help="feature cache directory from 'extract'")
    sp.add_argument("--train-select", default="", help="e.g. medium=digital,post=before,compressed=no")
    sp.add_argument("--out", required=True, help="bundle path")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("score", help="fused score and decision per image")
    sp.add_argument("--bundle", required=True)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--image", nargs="+")
    g.add_argument("--manifest")
    sp.add_argument("--partition", choices=("train", "test"), default="test")
    sp.add_argument("--test-select", default="")
    sp.add_argument("--out", help="CSV path (default stdout)")
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("evaluate", help="evaluate a bundle on the test partition")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--cache")
    sp.add_argument("--protocol", choices=PROTOCOL_CHOICES, required=True)
    sp.add_argument("--test-select", default="")
    sp.add_argument("--out", help="directory for report.json and det.csv (default: report to stdout)")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("run", help="full experiment for one protocol cell")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--protocol", choices=PROTOCOL_CHOICES, required=True)
    sp.add_argument("--train-select", required=True)
    sp.add_argument("--test-select", required=True)
    sp.add_argument("--out", required=True, help="root for runs/<timestamp>-<hash>/")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("protocols", help="list every protocol cell of the results grid")
    sp.set_defaults(func=cmd_protocols)

    sp = sub.add_parser("synth", help="write a synthetic dataset and manifest")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int, default=10, help="samples per class per cell")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--media", nargs="+", choices=MEDIA, default=["digital"])
    sp.add_argument("--posts", nargs="+", choices=POSTS, default=["before"])
    sp.add_argument("--compression", choices=("no", "yes", "both"), default="no")
    sp.add_argument("--ghost", type=float, default=SynthOptions.ghost, help="ghosting amplitude (0 = none)")
    sp.add_argument("--size", type=int, default=SynthOptions.size)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("describe-dims", help="descriptor dimensions for the configured geometry")
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_describe_dims)
    return p


_EXPECTED = (CLIError, ConfigError, ManifestError, ProtocolError, BundleError, ImageError,
             FilterBankError, OSError, ValueError, KeyError)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("morphdetect: interrupted", file=sys.stderr)
        return 130
    except _EXPECTED as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"morphdetect {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
