"""LBP, HoG and BSIF descriptors over the scale-space sub-images."""

import hashlib
import struct
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from . import kernels
from .scalespace import ScaleSpaceStack

FEATURE_TYPES = ("LBP", "HOG", "BSIF")

FILTERBANK_MAGIC = b"BSIFBANK"
FILTERBANK_VERSION = 1
DEFAULT_FILTERBANK = "bsif_11x11_8bit.bin"

HOG_CELL = 8
HOG_BINS = 9
HOG_BLOCK = 2
HOG_CLIP = 0.2
HOG_EPS = 1e-5


class FilterBankError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSet:
    lbp: np.ndarray
    hog: np.ndarray
    bsif: np.ndarray
    source_id: str = ""

    def __getitem__(self, feature_type):
        return getattr(self, feature_type.lower())


# ------------------------------------------------------------------ filter bank


def write_filterbank(path, filters):
    filters = np.ascontiguousarray(filters, dtype="<f8")
    count, size, size2 = filters.shape
    if size != size2:
        raise FilterBankError("filters must be square")
    body = FILTERBANK_MAGIC + struct.pack("<III", FILTERBANK_VERSION, count, size) + filters.tobytes()
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def read_filterbank(path, expect_count=8, expect_size=11):
    """Load and validate a filter bank (count x size x size, zero-mean, orthonormal)."""
    raw = Path(path).read_bytes()
    header = len(FILTERBANK_MAGIC) + 12
    if len(raw) < header + 32 or raw[:len(FILTERBANK_MAGIC)] != FILTERBANK_MAGIC:
        raise FilterBankError(f"{path}: not a filter bank file")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise FilterBankError(f"{path}: checksum mismatch")
    version, count, size = struct.unpack_from("<III", raw, len(FILTERBANK_MAGIC))
    if version != FILTERBANK_VERSION:
        raise FilterBankError(f"{path}: unsupported filter bank version {version}")
    if len(body) != header + count * size * size * 8:
        raise FilterBankError(f"{path}: payload size does not match header")
    filters = np.frombuffer(body, dtype="<f8", offset=header).reshape(count, size, size).astype(np.float64)
    validate_filterbank(filters, expect_count, expect_size)
    filters.setflags(write=False)
    return filters


def validate_filterbank(filters, expect_count=8, expect_size=11):
    if filters.ndim != 3 or filters.shape != (expect_count, expect_size, expect_size):
        raise FilterBankError(
            f"filter bank must be {expect_count}x{expect_size}x{expect_size}, got {filters.shape}"
        )
    flat = filters.reshape(expect_count, -1)
    if not np.all(np.isfinite(flat)):
        raise FilterBankError("filter bank has non-finite taps")
    if np.max(np.abs(flat.sum(axis=1))) > 1e-9:
        raise FilterBankError("filters are not zero-mean")
    if np.max(np.abs(flat @ flat.T - np.eye(expect_count))) > 1e-8:
        raise FilterBankError("filter rows are not orthonormal")


@lru_cache(maxsize=None)
def default_filterbank():
    with resources.as_file(resources.files("morphdetect.data") / DEFAULT_FILTERBANK) as p:
        return read_filterbank(p)


# ------------------------------------------------------------------ descriptors


def _l1(hist):
    total = hist.sum()
    return hist / total if total > 0 else hist


def lbp_histogram(plane, radius=1):
    """256-bin L1-normalised LBP(8, radius) histogram over interior pixels."""
    plane = np.asarray(plane, dtype=np.float64)
    if min(plane.shape) < 2 * radius + 1:
        raise ValueError(f"plane {plane.shape} too small for LBP radius {radius}")
    codes = kernels.lbp_codes(plane, radius)
    return _l1(np.bincount(codes.ravel(), minlength=256).astype(np.float64))


def hog_block_count(h, w, cell=HOG_CELL, block=HOG_BLOCK):
    return max(h // cell - block + 1, 0) * max(w // cell - block + 1, 0)


def hog_dim(h, w, cell=HOG_CELL, nbins=HOG_BINS, block=HOG_BLOCK):
    return hog_block_count(h, w, cell, block) * block * block * nbins


def normalize_blocks(cells, block=HOG_BLOCK):
    """Overlapping block vectors (stride one cell) with L2-Hys normalisation."""
    ncy, ncx, nbins = cells.shape
    by, bx = ncy - block + 1, ncx - block + 1
    if by <= 0 or bx <= 0:
        return np.zeros(0)
    blocks = np.empty((by, bx, block, block, nbins))
    for dy in range(block):
        for dx in range(block):
            blocks[:, :, dy, dx, :] = cells[dy:dy + by, dx:dx + bx, :]
    v = blocks.reshape(by * bx, -1)
    v = v / np.sqrt(np.sum(v * v, axis=1, keepdims=True) + HOG_EPS ** 2)
    v = np.minimum(v, HOG_CLIP)
    v = v / np.sqrt(np.sum(v * v, axis=1, keepdims=True) + HOG_EPS ** 2)
    return v.ravel()


def hog_descriptor(plane, cell=HOG_CELL, nbins=HOG_BINS, block=HOG_BLOCK):
    plane = np.asarray(plane, dtype=np.float64)
    if min(plane.shape) < cell * block:
        raise ValueError(f"plane {plane.shape} too small for {block}x{block} blocks of {cell}px cells")
    return normalize_blocks(kernels.hog_cells(plane, cell, nbins), block)


def bsif_histogram(plane, filters=None):
    """Binarised filter-response codes (bit f set when filter f responds > 0), histogrammed."""
    if filters is None:
        filters = default_filterbank()
    plane = np.asarray(plane, dtype=np.float64)
    nf, k, _ = filters.shape
    padded = kernels.pad_reflect101(plane, k // 2)
    codes = kernels.bsif_codes(padded, filters)
    return _l1(np.bincount(codes.ravel(), minlength=2 ** nf).astype(np.float64))


def extract_feature_set(stack: ScaleSpaceStack, filters=None, lbp_radius=1,
                        hog_cell=HOG_CELL, hog_bins=HOG_BINS, hog_block=HOG_BLOCK):
    """Concatenate per-sub-image fragments in stack order, one vector per feature type."""
    if filters is None:
        filters = default_filterbank()
    lbp = [lbp_histogram(s, lbp_radius) for s in stack.sub_images]
    hog = [hog_descriptor(s, hog_cell, hog_bins, hog_block) for s in stack.sub_images]
    bsif = [bsif_histogram(s, filters) for s in stack.sub_images]
    return FeatureSet(np.concatenate(lbp), np.concatenate(hog), np.concatenate(bsif), stack.source_id)


def describe_dims(size, levels=3, n_channels=6, cell=HOG_CELL, nbins=HOG_BINS, block=HOG_BLOCK, bsif_bits=8):
    """Per-level sub-image size and descriptor dimensions for a square working size."""
    rows = []
    h = size
    for lvl in range(levels):
        rows.append({
            "level": lvl + 1,
            "size": h,
            "lbp": 256,
            "bsif": 2 ** bsif_bits,
            "hog_blocks": hog_block_count(h, h, cell, block),
            "hog": hog_dim(h, h, cell, nbins, block),
        })
        h = -(-h // 2)
    totals = {
        "LBP": n_channels * sum(r["lbp"] for r in rows),
        "HOG": n_channels * sum(r["hog"] for r in rows),
        "BSIF": n_channels * sum(r["bsif"] for r in rows),
    }
    return rows, totals
