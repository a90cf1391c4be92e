"""CSV dataset manifest: one row per image with its label and capture attributes."""

import csv
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

log = logging.getLogger(__name__)

COLUMNS = ("path", "label", "medium", "post", "compressed", "partition", "subject_id")
ENUMS = {
    "label": ("bonafide", "morph"),
    "medium": ("digital", "ps1", "ps2"),
    "post": ("before", "after"),
    "compressed": ("yes", "no"),
    "partition": ("train", "test"),
}
SELECTOR_KEYS = ("medium", "post", "compressed")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRow:
    path: str
    label: str
    medium: str
    post: str
    compressed: str
    partition: str
    subject_id: str

    @property
    def is_morph(self):
        return self.label == "morph"

    @property
    def subjects(self):
        """Contributing subjects; morph ids list both contributors joined by '+'."""
        return tuple(s for s in self.subject_id.split("+") if s)

    def matches(self, selector):
        return all(getattr(self, k) == v for k, v in selector.items())


@dataclass(frozen=True)
class DatasetManifest:
    rows: tuple
    root: Path

    def resolve(self, row):
        p = Path(row.path)
        return p if p.is_absolute() else self.root / p

    def select(self, partition=None, selector=None):
        selector = selector or {}
        return [r for r in self.rows if (partition is None or r.partition == partition) and r.matches(selector)]

    def summary(self):
        """Counts keyed by (partition, medium, post, compressed, label)."""
        return Counter((r.partition, r.medium, r.post, r.compressed, r.label) for r in self.rows)

    def summary_text(self):
        lines = [f"{len(self.rows)} rows"]
        for key, n in sorted(self.summary().items()):
            lines.append("  " + " ".join(key) + f": {n}")
        return "\n".join(lines)


def check_subject_disjoint(train_rows, test_rows):
    train = {s for r in train_rows for s in r.subjects}
    test = {s for r in test_rows for s in r.subjects}
    leaked = sorted(train & test)
    if leaked:
        raise ManifestError(f"subject leakage across partitions: {', '.join(leaked[:10])}")


def parse_selector(text):
    """``"medium=digital,post=before"`` -> dict. Empty text selects everything."""
    sel = {}
    if not text:
        return sel
    for part in text.split(","):
        if not part.strip():
            continue
        if "=" not in part:
            raise ManifestError(f"bad selector term {part!r}; expected key=value")
        k, v = (s.strip() for s in part.split("=", 1))
        if k not in SELECTOR_KEYS:
            raise ManifestError(f"unknown selector key {k!r}; use {', '.join(SELECTOR_KEYS)}")
        if v not in ENUMS[k]:
            raise ManifestError(f"unknown {k} value {v!r}")
        sel[k] = v
    return sel


def format_selector(sel):
    return ",".join(f"{k}={sel[k]}" for k in SELECTOR_KEYS if k in sel)


def load_manifest(path, check_files=True):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    if not text.strip():
        raise ManifestError(f"{path}: manifest is empty")
    reader = csv.DictReader(text.splitlines())
    missing = [c for c in COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise ManifestError(f"{path}: missing column(s) {', '.join(missing)}")

    rows, seen = [], set()
    for lineno, rec in enumerate(reader, start=2):
        vals = {c: (rec.get(c) or "").strip() for c in COLUMNS}
        for col, allowed in ENUMS.items():
            if vals[col] not in allowed:
                raise ManifestError(f"{path}:{lineno}: unknown {col} value {vals[col]!r}")
        if not vals["path"] or not vals["subject_id"]:
            raise ManifestError(f"{path}:{lineno}: empty path or subject_id")
        if vals["path"] in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate path {vals['path']}")
        seen.add(vals["path"])
        rows.append(ManifestRow(**vals))
    if not rows:
        raise ManifestError(f"{path}: manifest has no rows")

    manifest = DatasetManifest(tuple(rows), path.parent)
    check_subject_disjoint(manifest.select("train"), manifest.select("test"))
    if check_files:
        absent = [r.path for r in rows if not manifest.resolve(r).is_file()]
        if absent:
            raise ManifestError(f"{path}: {len(absent)} missing file(s), first: {absent[0]}")
    log.info("manifest %s: %s", path, manifest.summary_text())
    return manifest


def write_manifest(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([getattr(r, c) if hasattr(r, c) else r[c] for c in COLUMNS])
