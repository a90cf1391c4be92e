"""Burt-Adelson Laplacian pyramid and the 18-entry scale-space stack."""

from dataclasses import dataclass

import numpy as np

from .imaging import CHANNELS, ColorStack
from .kernels import reflect101_index

BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
LEVELS = 3


def _filter_axis(a, axis, gain=1.0):
    """5-tap binomial along ``axis`` with reflect-101 borders."""
    n = a.shape[axis]
    idx = reflect101_index(np.arange(-2, n + 2), n)
    ext = np.take(a, idx, axis=axis)
    out = np.zeros_like(a, dtype=np.float64)
    for t, wgt in enumerate(BINOMIAL5 * gain):
        sl = [slice(None)] * a.ndim
        sl[axis] = slice(t, t + n)
        out += wgt * ext[tuple(sl)]
    return out


def gaussian_reduce(plane):
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or min(plane.shape) < 2:
        raise ValueError(f"gaussian_reduce needs a 2-D plane at least 2x2, got {plane.shape}")
    blurred = _filter_axis(_filter_axis(plane, 0), 1)
    return blurred[::2, ::2]


def expand(plane, target_dims):
    """Zero-interleave upsample to ``target_dims`` and interpolate with the binomial kernel."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    th, tw = target_dims
    if th not in (2 * h - 1, 2 * h) or tw not in (2 * w - 1, 2 * w):
        raise ValueError(f"cannot expand {plane.shape} to {tuple(target_dims)}")
    up = np.zeros((th, tw), dtype=np.float64)
    up[::2, ::2] = plane
    return _filter_axis(_filter_axis(up, 0, gain=2.0), 1, gain=2.0)


def laplacian_pyramid(plane, levels=LEVELS, return_residue=False):
    """Band-pass levels ``G_i - expand(G_{i+1})`` for i = 0..levels-1.

    With ``return_residue`` the low-pass ``G_levels`` is returned as well; it is
    needed to collapse the pyramid but is not a feature sub-image.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if min(plane.shape) < 2 ** levels:
        raise ValueError(f"plane {plane.shape} too small for a {levels}-level pyramid")
    bands = []
    g = plane
    for _ in range(levels):
        g_next = gaussian_reduce(g)
        bands.append(g - expand(g_next, g.shape))
        g = g_next
    if return_residue:
        return bands, g
    return bands


def collapse(bands, residue):
    g = residue
    for band in reversed(bands):
        g = band + expand(g, band.shape)
    return g


@dataclass(frozen=True)
class ScaleSpaceStack:
    """Channel-major band images: H1, H2, H3, S1, ..., Cr3 (k = 1..18)."""

    sub_images: tuple
    source_id: str = ""
    levels: int = LEVELS

    def __len__(self):
        return len(self.sub_images)

    @staticmethod
    def label(k, levels=LEVELS):
        """Name of the 1-based entry ``k``, e.g. ``label(4) == 'S1'``."""
        ch, lvl = divmod(k - 1, levels)
        return f"{CHANNELS[ch]}{lvl + 1}"


def build_scale_space_stack(cs: ColorStack, levels=LEVELS):
    subs = []
    for channel in cs.channels:
        subs.extend(laplacian_pyramid(channel, levels))
    return ScaleSpaceStack(tuple(subs), cs.source_id, levels)
