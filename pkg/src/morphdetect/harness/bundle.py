"""Binary model bundle and on-disk feature cache.

Both formats share one container layout::

    magic (8 bytes) | u32 version | u64 header length | header JSON (utf-8)
    | raw little-endian arrays | sha256 of everything before it (32 bytes)

The header lists every array as {dtype, shape, offset} relative to the start
of the array section. An array referenced from several places is stored once.
"""

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from ..classifiers import PCRC, SRKDA, LinearSVM, Standardization
from ..config import DescriptorConfig
from ..detector import Detector
from ..features import FEATURE_TYPES
from ..fusion import FusionWeights, NormalizationParams

BUNDLE_MAGIC = b"MORPHDET"
CACHE_MAGIC = b"MDFEATS\x00"
BUNDLE_VERSION = 1
CACHE_VERSION = 1

_MODEL_TYPES = {cls.kind: cls for cls in (LinearSVM, SRKDA, PCRC)}


class BundleError(ValueError):
    pass


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


class _ArrayTable:
    def __init__(self):
        self.entries, self.blobs, self._keep = [], [], []
        self._by_id = {}
        self._offset = 0

    def add(self, arr):
        if id(arr) in self._by_id:
            return self._by_id[id(arr)]
        self._keep.append(arr)  # pin the id for the lifetime of the table
        a = np.ascontiguousarray(arr)
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        ref = len(self.entries)
        self.entries.append({"dtype": a.dtype.str, "shape": list(a.shape), "offset": self._offset})
        self.blobs.append(a)
        self._offset += a.nbytes
        self._by_id[id(arr)] = ref
        return ref


def _write_container(path, magic, version, header, table):
    hbytes = json.dumps(dict(header, arrays=table.entries), sort_keys=True, default=_jsonable).encode()
    path = Path(path)
    h = hashlib.sha256()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            chunks = [magic, struct.pack("<IQ", version, len(hbytes)), hbytes]
            chunks += [memoryview(a).cast("B") for a in table.blobs if a.size]
            for c in chunks:
                fh.write(c)
                h.update(c)
            fh.write(h.digest())
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _read_container(path, magic, version):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise BundleError(f"{path}: {exc}") from exc
    fixed = len(magic) + 12
    if len(raw) < fixed + 32 or raw[: len(magic)] != magic:
        raise BundleError(f"{path}: wrong file type (bad magic)")
    if hashlib.sha256(memoryview(raw)[:-32]).digest() != raw[-32:]:
        raise BundleError(f"{path}: checksum mismatch (file truncated or corrupted)")
    ver, hlen = struct.unpack_from("<IQ", raw, len(magic))
    if ver != version:
        raise BundleError(f"{path}: unsupported format version {ver} (expected {version})")
    header = json.loads(raw[fixed : fixed + hlen].decode())
    base = fixed + hlen
    arrays = []
    for e in header["arrays"]:
        dt = np.dtype(e["dtype"])
        count = int(np.prod(e["shape"], dtype=np.int64))
        a = np.frombuffer(raw, dtype=dt, count=count, offset=base + e["offset"]).reshape(e["shape"])
        arrays.append(a.astype(dt.newbyteorder("="), copy=True))
    return header, arrays


# ------------------------------------------------------------------ model bundle


def _encode_value(v, table):
    if isinstance(v, np.ndarray):
        return {"__array__": table.add(v)}
    if isinstance(v, Standardization):
        return {"__std__": [table.add(v.mean), table.add(v.scale)]}
    if isinstance(v, np.generic):
        return v.item()
    return v


def _decode_value(v, arrays):
    if isinstance(v, dict) and "__array__" in v:
        return arrays[v["__array__"]]
    if isinstance(v, dict) and "__std__" in v:
        m, s = v["__std__"]
        return Standardization(arrays[m], arrays[s])
    return v


def save_bundle(path, detector: Detector):
    """Write ``detector`` atomically; returns the path."""
    table = _ArrayTable()
    models = []
    for (ft, kind), model in sorted(detector.models.items()):
        params = {f.name: _encode_value(getattr(model, f.name), table) for f in fields(model)}
        models.append({"feature_type": ft, "kind": kind, "params": params})
    header = {
        "descriptor": asdict(detector.descriptor),
        "descriptor_digest": detector.descriptor.digest(),
        "hyperparams": detector.hyperparams,
        "metadata": detector.metadata,
        "threshold": detector.threshold,
        "weights": {"level1": table.add(detector.weights.level1), "level2": table.add(detector.weights.level2)},
        "normalization": {"lo": table.add(detector.params.lo), "hi": table.add(detector.params.hi)},
        "models": models,
    }
    return _write_container(path, BUNDLE_MAGIC, BUNDLE_VERSION, header, table)


def load_bundle(path, expect_descriptor: DescriptorConfig = None):
    """Read a bundle; raises BundleError on corruption, version or descriptor mismatch."""
    header, arrays = _read_container(path, BUNDLE_MAGIC, BUNDLE_VERSION)
    try:
        desc = DescriptorConfig(**header["descriptor"])
    except TypeError as exc:
        raise BundleError(f"{path}: bad descriptor block: {exc}") from exc
    if desc.digest() != header["descriptor_digest"]:
        raise BundleError(f"{path}: descriptor digest mismatch (different filter bank?)")
    if expect_descriptor is not None and expect_descriptor.digest() != header["descriptor_digest"]:
        raise BundleError(f"{path}: bundle was trained with a different descriptor configuration")
    models = {}
    for m in header["models"]:
        cls = _MODEL_TYPES.get(m["kind"])
        if cls is None:
            raise BundleError(f"{path}: unknown classifier kind {m['kind']!r}")
        params = {k: _decode_value(v, arrays) for k, v in m["params"].items()}
        models[(m["feature_type"], m["kind"])] = cls(**params)
    missing = [(f, k) for f in FEATURE_TYPES for k in _MODEL_TYPES if (f, k) not in models]
    if missing:
        raise BundleError(f"{path}: missing models {missing}")
    w, n = header["weights"], header["normalization"]
    return Detector(
        models,
        FusionWeights(arrays[w["level1"]], arrays[w["level2"]]),
        NormalizationParams(arrays[n["lo"]], arrays[n["hi"]]),
        float(header["threshold"]),
        desc,
        header["hyperparams"],
        header["metadata"],
    )


# ------------------------------------------------------------------ feature cache


def save_features(path, matrix, feature_type, rows, descriptor: DescriptorConfig):
    """Cache one (n, d) matrix; ``rows`` holds one JSON-able record per matrix row."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != len(rows):
        raise BundleError(f"feature matrix {matrix.shape} does not match {len(rows)} rows")
    table = _ArrayTable()
    header = {
        "descriptor_digest": descriptor.digest(),
        "feature_type": feature_type,
        "rows": list(rows),
        "matrix": table.add(matrix),
    }
    return _write_container(path, CACHE_MAGIC, CACHE_VERSION, header, table)


def load_features(path, expect_descriptor: DescriptorConfig = None):
    """Returns (matrix, feature type, rows)."""
    header, arrays = _read_container(path, CACHE_MAGIC, CACHE_VERSION)
    if expect_descriptor is not None and expect_descriptor.digest() != header["descriptor_digest"]:
        raise BundleError(f"{path}: feature cache was built with a different descriptor configuration")
    return arrays[header["matrix"]], header["feature_type"], header["rows"]
