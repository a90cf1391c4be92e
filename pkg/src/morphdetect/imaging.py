"""Image loading and the HSV + YCbCr channel decomposition.

Planes are 2-D float64 arrays in [0, 1], row-major (height, width).
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

CHANNELS = ("H", "S", "V", "Y", "Cb", "Cr")
WORKING_SIZE = 320
SUPPORTED_FORMATS = ("PNG", "JPEG")


class ImageError(ValueError):
    pass


@dataclass(frozen=True)
class ColorStack:
    """Six channel planes in the fixed order H, S, V, Y, Cb, Cr."""

    channels: np.ndarray  # (6, height, width)
    source_id: str = ""

    def __post_init__(self):
        if self.channels.ndim != 3 or self.channels.shape[0] != len(CHANNELS):
            raise ValueError(f"ColorStack needs shape (6, h, w), got {self.channels.shape}")

    def __getitem__(self, name):
        return self.channels[CHANNELS.index(name)]

    @property
    def shape(self):
        return self.channels.shape[1:]


def load_image(path, size=WORKING_SIZE, center_crop=1.0):
    """Decode a PNG/JPEG file into three float planes (R, G, B).

    The image is optionally centre-cropped to ``center_crop`` of each side and
    then resized bilinearly to ``size`` x ``size`` (``size=None`` keeps the
    native resolution).
    """
    path = Path(path)
    if not path.is_file():
        raise ImageError(f"{path}: no such file")
    try:
        with Image.open(path) as im:
            fmt = im.format
            if fmt not in SUPPORTED_FORMATS:
                raise ImageError(f"{path}: unsupported format {fmt}")
            if im.mode != "RGB":
                raise ImageError(f"{path}: expected a 3-channel RGB image, got mode {im.mode}")
            im.load()
            rgb = im.copy()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageError(f"{path}: cannot decode image ({exc})") from exc

    if not 0.0 < center_crop <= 1.0:
        raise ImageError(f"center_crop must be in (0, 1], got {center_crop}")
    if center_crop < 1.0:
        w, h = rgb.size
        cw, ch = max(1, round(w * center_crop)), max(1, round(h * center_crop))
        left, top = (w - cw) // 2, (h - ch) // 2
        rgb = rgb.crop((left, top, left + cw, top + ch))
    if size is not None and rgb.size != (size, size):
        rgb = rgb.resize((size, size), Image.BILINEAR)

    arr = np.asarray(rgb, dtype=np.float64) / 255.0
    return arr[..., 0].copy(), arr[..., 1].copy(), arr[..., 2].copy()


def _check_planes(*planes):
    shape = planes[0].shape
    for p in planes[1:]:
        if p.shape != shape:
            raise ValueError(f"plane dimensions differ: {shape} vs {p.shape}")


def rgb_to_hsv(r, g, b):
    """Hexcone HSV with hue scaled to [0, 1). Achromatic pixels get hue 0."""
    _check_planes(r, g, b)
    r, g, b = (np.asarray(p, dtype=np.float64) for p in (r, g, b))
    v = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    delta = v - mn
    chroma = delta > 0
    safe = np.where(chroma, delta, 1.0)
    s = np.where(v > 0, delta / np.where(v > 0, v, 1.0), 0.0)

    h = np.zeros_like(v)
    rmax = chroma & (v == r)
    gmax = chroma & (v == g) & ~rmax
    bmax = chroma & ~rmax & ~gmax
    h = np.where(rmax, np.mod((g - b) / safe, 6.0), h)
    h = np.where(gmax, (b - r) / safe + 2.0, h)
    h = np.where(bmax, (r - g) / safe + 4.0, h)
    h = h / 6.0
    h = np.where(h >= 1.0, h - 1.0, h)
    return np.clip(h, 0.0, 1.0), np.clip(s, 0.0, 1.0), np.clip(v, 0.0, 1.0)


def rgb_to_ycbcr(r, g, b):
    """Full-range BT.601 (JFIF) with chroma offset 0.5."""
    _check_planes(r, g, b)
    r, g, b = (np.asarray(p, dtype=np.float64) for p in (r, g, b))
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 0.5 + (b - y) / 1.772
    cr = 0.5 + (r - y) / 1.402
    return np.clip(y, 0.0, 1.0), np.clip(cb, 0.0, 1.0), np.clip(cr, 0.0, 1.0)


def decompose_color_spaces(rgb, source_id=""):
    r, g, b = rgb
    h, s, v = rgb_to_hsv(r, g, b)
    y, cb, cr = rgb_to_ycbcr(r, g, b)
    return ColorStack(np.stack([h, s, v, y, cb, cr]), source_id=source_id)


def hsv_to_rgb(h, s, v):
    """Inverse hexcone transform, used by the round-trip tests."""
    h6 = np.asarray(h, dtype=np.float64) * 6.0
    i = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return r, g, b
