"""Per-pixel kernels for the texture descriptors.

Every kernel has a numba implementation (``*_nb``) and a pure-numpy one
(``*_np``). The unsuffixed name dispatches on ``_accel.BACKEND``. Both paths
produce bit-identical LBP/BSIF codes; HoG cell histograms agree to rounding.
"""

import math

import numpy as np

from ._accel import BACKEND, njit

# Filter responses at or below this are binarized to 0. Zero-mean filters on a
# flat patch give round-off sized responses, which must not set bits.
BSIF_EPS = 1e-12

# Neighbour offsets (dy, dx) for LBP bit 0..7: east first, then counter-clockwise.
LBP_OFFSETS = np.array(
    [(0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1)],
    dtype=np.int64,
)


def reflect101_index(idx, n):
    """Map integer indices onto ``[0, n)`` with reflect-101 (mirror without edge repeat)."""
    idx = np.asarray(idx, dtype=np.int64)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.mod(idx, period)
    return np.where(idx > n - 1, period - idx, idx)


def pad_reflect101(plane, r):
    rows = reflect101_index(np.arange(-r, plane.shape[0] + r), plane.shape[0])
    cols = reflect101_index(np.arange(-r, plane.shape[1] + r), plane.shape[1])
    return plane[np.ix_(rows, cols)]


# --------------------------------------------------------------------------- LBP


def lbp_codes_np(plane, radius=1):
    plane = np.ascontiguousarray(plane, dtype=np.float64)
    h, w = plane.shape
    r = radius
    center = plane[r:h - r, r:w - r]
    codes = np.zeros(center.shape, dtype=np.int64)
    for bit in range(8):
        dy = LBP_OFFSETS[bit, 0] * r
        dx = LBP_OFFSETS[bit, 1] * r
        neigh = plane[r + dy:h - r + dy, r + dx:w - r + dx]
        codes |= (neigh >= center).astype(np.int64) << bit
    return codes


@njit
def _lbp_codes_nb(plane, radius, offsets):
    h, w = plane.shape
    r = radius
    out = np.zeros((h - 2 * r, w - 2 * r), dtype=np.int64)
    for y in range(r, h - r):
        for x in range(r, w - r):
            c = plane[y, x]
            code = 0
            for bit in range(8):
                if plane[y + offsets[bit, 0] * r, x + offsets[bit, 1] * r] >= c:
                    code |= 1 << bit
            out[y - r, x - r] = code
    return out


def lbp_codes_nb(plane, radius=1):
    return _lbp_codes_nb(np.ascontiguousarray(plane, dtype=np.float64), int(radius), LBP_OFFSETS)


# -------------------------------------------------------------------------- BSIF


def bsif_codes_np(padded, filters):
    """Codes for the valid region of ``padded`` (already border-extended by size//2)."""
    padded = np.ascontiguousarray(padded, dtype=np.float64)
    nf, k, _ = filters.shape
    h = padded.shape[0] - k + 1
    w = padded.shape[1] - k + 1
    resp = np.zeros((nf, h, w), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            resp += filters[:, i, j, None, None] * padded[None, i:i + h, j:j + w]
    codes = np.zeros((h, w), dtype=np.int64)
    for f in range(nf):
        codes |= (resp[f] > BSIF_EPS).astype(np.int64) << f
    return codes


@njit
def _bsif_codes_nb(padded, filters, eps):
    # Tap-outer loop order keeps each pixel's summation sequence identical to
    # the numpy path while letting the inner x loop vectorise.
    nf, k, _ = filters.shape
    h = padded.shape[0] - k + 1
    w = padded.shape[1] - k + 1
    out = np.zeros((h, w), dtype=np.int64)
    resp = np.empty((h, w), dtype=np.float64)
    for f in range(nf):
        resp[:, :] = 0.0
        for i in range(k):
            for j in range(k):
                t = filters[f, i, j]
                for y in range(h):
                    for x in range(w):
                        resp[y, x] += t * padded[y + i, x + j]
        for y in range(h):
            for x in range(w):
                if resp[y, x] > eps:
                    out[y, x] |= 1 << f
    return out


def bsif_codes_nb(padded, filters):
    return _bsif_codes_nb(
        np.ascontiguousarray(padded, dtype=np.float64),
        np.ascontiguousarray(filters, dtype=np.float64),
        BSIF_EPS,
    )


# --------------------------------------------------------------------------- HoG


def hog_cells_np(plane, cell=8, nbins=9):
    plane = np.ascontiguousarray(plane, dtype=np.float64)
    h, w = plane.shape
    ncy, ncx = h // cell, w // cell
    gx = np.zeros_like(plane)
    gy = np.zeros_like(plane)
    gx[:, 1:-1] = plane[:, 2:] - plane[:, :-2]
    gy[1:-1, :] = plane[2:, :] - plane[:-2, :]
    gx = gx[:ncy * cell, :ncx * cell]
    gy = gy[:ncy * cell, :ncx * cell]
    mag = np.sqrt(gx * gx + gy * gy)
    deg = np.arctan2(gy, gx) * (180.0 / math.pi)
    deg = np.where(deg < 0.0, deg + 180.0, deg)
    deg = np.where(deg >= 180.0, deg - 180.0, deg)
    bins = np.minimum((deg / (180.0 / nbins)).astype(np.int64), nbins - 1)
    cy = np.arange(ncy * cell) // cell
    cx = np.arange(ncx * cell) // cell
    flat = ((cy[:, None] * ncx + cx[None, :]) * nbins + bins).ravel()
    hist = np.bincount(flat, weights=mag.ravel(), minlength=ncy * ncx * nbins)
    return hist.reshape(ncy, ncx, nbins)


@njit
def _hog_cells_nb(plane, cell, nbins):
    h, w = plane.shape
    ncy = h // cell
    ncx = w // cell
    hist = np.zeros((ncy, ncx, nbins), dtype=np.float64)
    width = 180.0 / nbins
    for y in range(ncy * cell):
        for x in range(ncx * cell):
            gx = 0.0
            gy = 0.0
            if 0 < x < w - 1:
                gx = plane[y, x + 1] - plane[y, x - 1]
            if 0 < y < h - 1:
                gy = plane[y + 1, x] - plane[y - 1, x]
            mag = math.sqrt(gx * gx + gy * gy)
            deg = math.atan2(gy, gx) * (180.0 / math.pi)
            if deg < 0.0:
                deg += 180.0
            if deg >= 180.0:
                deg -= 180.0
            b = int(deg / width)
            if b > nbins - 1:
                b = nbins - 1
            hist[y // cell, x // cell, b] += mag
    return hist


def hog_cells_nb(plane, cell=8, nbins=9):
    return _hog_cells_nb(np.ascontiguousarray(plane, dtype=np.float64), int(cell), int(nbins))


if BACKEND == "numba":
    lbp_codes = lbp_codes_nb
    bsif_codes = bsif_codes_nb
    hog_cells = hog_cells_nb
else:
    lbp_codes = lbp_codes_np
    bsif_codes = bsif_codes_np
    hog_cells = hog_cells_np
