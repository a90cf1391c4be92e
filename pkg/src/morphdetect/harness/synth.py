"""Procedural face-like images for exercising the pipeline end to end.

Bona fide samples render one subject plus its own sensor grain. Morphs
render the landmark-averaged geometry of two contributors. Inside a mask
over the face interior they blend in the pixel average of the two
misaligned renderings, which leaves double contours. Over the whole frame
the grain is the average of two warped contributor grains, so it is weaker
and smoother than a single photograph's. ``ghost`` scales both effects;
with ``ghost=0`` a morph is statistically identical to a bona fide sample.
"""

import csv
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

MEDIA = ("digital", "ps1", "ps2")
POSTS = ("before", "after")

# name: (population mean, population std)
_GEOMETRY = {
    "face_cx": (0.500, 0.012),
    "face_cy": (0.540, 0.012),
    "face_rx": (0.300, 0.014),
    "face_ry": (0.380, 0.014),
    "eye_y": (0.450, 0.014),
    "eye_dx": (0.115, 0.010),
    "eye_rx": (0.048, 0.005),
    "eye_ry": (0.022, 0.003),
    "brow_gap": (0.050, 0.006),
    "nose_y": (0.600, 0.014),
    "nose_w": (0.030, 0.004),
    "mouth_y": (0.720, 0.014),
    "mouth_w": (0.085, 0.008),
    "mouth_h": (0.018, 0.003),
    "hair_y": (0.250, 0.020),
}
_COLOR = {
    "skin": ((0.80, 0.62, 0.52), 0.05),
    "hair": ((0.22, 0.16, 0.11), 0.05),
    "iris": ((0.28, 0.20, 0.14), 0.06),
    "lips": ((0.66, 0.34, 0.33), 0.04),
    "bg": ((0.86, 0.88, 0.90), 0.02),
}
_MORPH_SHIFT = ("eye_y", "eye_dx", "face_cx", "nose_y", "mouth_y", "mouth_w", "nose_w")


@dataclass(frozen=True)
class SynthOptions:
    size: int = 320
    ghost: float = 1.0  # amplitude of the double-exposure blend inside the feature mask
    post_factor: float = 0.35  # ghost multiplier for "after" post-processing morphs
    min_shift_px: float = 5.0  # minimum contributor eye displacement
    noise: float = 0.008
    grain: float = 0.03  # sensor grain of the source photographs a morph is blended from
    jpeg_quality: int = 75
    train_fraction: float = 0.5


@dataclass(frozen=True)
class _Subject:
    geom: dict
    colors: dict
    texture_seed: int


def _draw_subject(rng):
    geom = {k: m + s * rng.standard_normal() for k, (m, s) in _GEOMETRY.items()}
    colors = {k: np.clip(np.array(m) + s * rng.standard_normal(3), 0.0, 1.0) for k, (m, s) in _COLOR.items()}
    return _Subject(geom, colors, int(rng.integers(2 ** 31)))


def _standardized_mid(a, b, mean, std):
    # (a+b)/2 has std/sqrt(2); rescaling the deviation keeps the population law.
    return mean + ((a + b) / 2.0 - mean) * np.sqrt(2.0)


def _morph_subject(sa, sb):
    geom = {k: _standardized_mid(sa.geom[k], sb.geom[k], *_GEOMETRY[k]) for k in _GEOMETRY}
    colors = {
        k: np.clip(_standardized_mid(sa.colors[k], sb.colors[k], np.array(m), s), 0.0, 1.0)
        for k, (m, s) in _COLOR.items()
    }
    return _Subject(geom, colors, sa.texture_seed ^ sb.texture_seed)


def _soft(d, px):
    """1 inside (d < 1), 0 outside, with a ~``px``-wide edge."""
    return 1.0 / (1.0 + np.exp(np.clip((d - 1.0) / px, -60, 60)))


def _ellipse(yy, xx, cy, cx, ry, rx):
    return np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)


def _over(img, mask, color):
    return img * (1.0 - mask[..., None]) + mask[..., None] * np.asarray(color)[None, None, :]


def _skin_texture(seed, size):
    rng = np.random.default_rng(seed)
    t = ndimage.gaussian_filter(rng.standard_normal((size, size)), size / 24.0)
    return t / (np.abs(t).max() + 1e-12)


def render(subject: _Subject, size=320):
    g, c = subject.geom, subject.colors
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    edge = 1.2 / size
    img = np.broadcast_to(c["bg"], (size, size, 3)).copy()

    hair = _soft(_ellipse(yy, xx, g["face_cy"] - 0.04, g["face_cx"], g["face_ry"] + 0.03, g["face_rx"] + 0.03), edge / 0.33)
    hair *= _soft(yy / (g["hair_y"] + 0.25), edge / 0.5)
    img = _over(img, hair, c["hair"])

    face_d = _ellipse(yy, xx, g["face_cy"], g["face_cx"], g["face_ry"], g["face_rx"])
    face = _soft(face_d, edge / 0.3) * (1.0 - _soft(yy / g["hair_y"], edge / 0.25))
    skin = c["skin"][None, None, :] * (1.0 + 0.04 * _skin_texture(subject.texture_seed, size)[..., None])
    shade = 1.0 - 0.10 * np.clip(face_d, 0.0, 1.0) ** 2
    img = img * (1.0 - face[..., None]) + face[..., None] * skin * shade[..., None]

    for side in (-1.0, 1.0):
        ex = g["face_cx"] + side * g["eye_dx"]
        brow = _soft(_ellipse(yy, xx, g["eye_y"] - g["brow_gap"], ex, 0.008, g["eye_rx"] * 1.15), edge / 0.008)
        img = _over(img, 0.85 * brow, c["hair"])
        white = _soft(_ellipse(yy, xx, g["eye_y"], ex, g["eye_ry"], g["eye_rx"]), edge / g["eye_ry"])
        img = _over(img, white, (0.95, 0.95, 0.93))
        iris = _soft(_ellipse(yy, xx, g["eye_y"], ex, g["eye_ry"] * 0.95, g["eye_ry"] * 0.95), edge / g["eye_ry"])
        img = _over(img, iris * white, c["iris"])
        pupil = _soft(_ellipse(yy, xx, g["eye_y"], ex, g["eye_ry"] * 0.4, g["eye_ry"] * 0.4), edge / (g["eye_ry"] * 0.4))
        img = _over(img, pupil * white, (0.05, 0.05, 0.05))

    nose_len = g["nose_y"] - g["eye_y"]
    ridge = _soft(np.abs(xx - g["face_cx"]) / 0.006, 0.3) * ((yy > g["eye_y"] + 0.2 * nose_len) & (yy < g["nose_y"]))
    img = img * (1.0 - 0.12 * ridge[..., None])
    nostrils = sum(
        _soft(_ellipse(yy, xx, g["nose_y"], g["face_cx"] + s * g["nose_w"], 0.008, 0.012), edge / 0.008) for s in (-1.0, 1.0)
    )
    img = _over(img, 0.7 * nostrils, c["skin"] * 0.45)

    mouth = _soft(_ellipse(yy, xx, g["mouth_y"], g["face_cx"], g["mouth_h"], g["mouth_w"]), edge / g["mouth_h"])
    img = _over(img, mouth, c["lips"])
    line = _soft(_ellipse(yy, xx, g["mouth_y"], g["face_cx"], 0.0025, g["mouth_w"] * 0.95), 0.4)
    img = _over(img, 0.8 * line, c["lips"] * 0.4)
    return np.clip(img, 0.0, 1.0)


def _feature_mask(subject, size):
    """Soft face-interior mask where a poorly aligned blend leaves a double exposure."""
    g = subject.geom
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    face = _ellipse(yy, xx, g["face_cy"], g["face_cx"], g["face_ry"] * 0.92, g["face_rx"] * 0.92)
    return _soft(face, 0.08) * (1.0 - _soft(yy / g["hair_y"], 0.05))


def _shifted(subject, delta, texture_seed):
    geom = {k: v + delta.get(k, 0.0) for k, v in subject.geom.items()}
    return replace(subject, geom=geom, texture_seed=texture_seed)


def _grain(rng, size, amount):
    return amount * rng.standard_normal((size, size, 3))


def _warped_grain(rng, size, amount, dy, dx, jitter_px=1.5):
    """Grain of a contributor photo after warping onto the morph geometry.

    The warp is a translation by (dy, dx) pixels plus a smooth non-rigid
    field; bilinear resampling at the resulting sub-pixel positions low-passes
    the grain the way landmark-driven image warping does.
    """
    g = _grain(rng, size, amount)
    field = [ndimage.gaussian_filter(rng.standard_normal((size, size)), size / 16.0) for _ in range(2)]
    field = [f / (np.abs(f).max() + 1e-12) * jitter_px for f in field]
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    coords = [yy + dy + field[0], xx + dx + field[1]]
    return np.stack(
        [ndimage.map_coordinates(g[..., k], coords, order=1, mode="mirror") for k in range(3)], axis=-1
    )


def render_bona(subject, size=320, grain=0.0, rng=None):
    """One source photograph: the rendering plus its own sensor grain."""
    img = render(subject, size)
    if grain > 0:
        img = img + _grain(rng, size, grain)
    return np.clip(img, 0.0, 1.0)


def render_morph(sa, sb, ghost, size=320, min_shift_px=5.0, grain=0.0, rng=None):
    """Morph of two subjects; ``ghost`` scales the blending artefacts.

    At ghost=0 the result is distributed exactly like ``render_bona`` of a
    population subject. Otherwise the frame is blended towards the average of
    the two contributor photographs. Each carries its own grain, resampled by
    the warp onto the morph geometry, so the blended grain is smoother and
    weaker everywhere; inside the face mask they
    also carry their own skin texture and are displaced by half the
    contributors' landmark difference, which leaves double contours.
    """
    mid = _morph_subject(sa, sb)
    base = render(mid, size)
    g0 = _grain(rng, size, grain) if grain > 0 else 0.0
    if ghost == 0:
        return np.clip(base + g0, 0.0, 1.0)
    delta = {k: (sa.geom[k] - sb.geom[k]) / 2.0 for k in _MORPH_SHIFT}
    shift = np.hypot(delta["eye_y"], delta["eye_dx"] + delta["face_cx"]) * size
    if shift < min_shift_px / 2.0:
        # force a visible misalignment along the contributors' own direction
        scale = (min_shift_px / 2.0) / max(shift, 1e-9)
        delta = {k: v * scale for k, v in delta.items()} if shift > 1e-9 else {"eye_y": min_shift_px / 2.0 / size}
    neg = {k: -v for k, v in delta.items()}
    double = 0.5 * (render(_shifted(mid, delta, sa.texture_seed), size) + render(_shifted(mid, neg, sb.texture_seed), size))
    m = ghost * _feature_mask(mid, size)[..., None]
    img = (1.0 - m) * base + m * double
    if grain > 0:
        dy, dx = delta.get("eye_y", 0.0) * size, (delta.get("eye_dx", 0.0) + delta.get("face_cx", 0.0)) * size
        g_avg = 0.5 * (_warped_grain(rng, size, grain, dy, dx) + _warped_grain(rng, size, grain, -dy, -dx))
        img = img + (1.0 - ghost) * g0 + ghost * g_avg
    return np.clip(img, 0.0, 1.0)


def _capture(img, rng, noise):
    yy = np.linspace(-1.0, 1.0, img.shape[0])[:, None, None]
    light = 1.0 + 0.03 * rng.standard_normal() * yy
    return np.clip(img * light + noise * rng.standard_normal(img.shape), 0.0, 1.0)


def _print_scan(img, medium, rng):
    if medium == "digital":
        return img
    blur, noise, gamma, tint = {"ps1": (0.7, 0.010, 1.08, 0.01), "ps2": (1.3, 0.022, 0.92, 0.03)}[medium]
    out = np.stack([ndimage.gaussian_filter(img[..., k], blur) for k in range(3)], axis=-1)
    out = np.clip(out, 0.0, 1.0) ** gamma
    out = out * (1.0 + tint * rng.standard_normal(3))[None, None, :]
    return np.clip(out + noise * rng.standard_normal(out.shape), 0.0, 1.0)


def _to_uint8(img):
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def _save(img, path, compressed, quality):
    path.parent.mkdir(parents=True, exist_ok=True)
    im = Image.fromarray(_to_uint8(img), mode="RGB")
    if compressed:
        im.save(path, format="JPEG", quality=quality, optimize=False, progressive=False)
    else:
        im.save(path, format="PNG", optimize=False)


def generate_synthetic_dataset(out_dir, n_per_class=10, seed=0, media=("digital",), posts=("before",),
                               compression=(False,), options: SynthOptions = SynthOptions()):
    """Write images plus ``manifest.csv`` under ``out_dir``; returns the manifest path.

    ``n_per_class`` bona fide and morph samples are written for every
    (medium, post, compression) cell; the same underlying subjects and morphs
    appear in every cell. Subjects are split into disjoint train/test groups.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"{out_dir}: directory is not writable ({exc})") from exc
    for m in media:
        if m not in MEDIA:
            raise ValueError(f"unknown medium {m!r}")
    for p in posts:
        if p not in POSTS:
            raise ValueError(f"unknown post-processing state {p!r}")

    ss = np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss.spawn(1)[0])
    n_train = max(1, int(round(n_per_class * options.train_fraction)))
    if n_per_class - n_train < 1:
        raise ValueError("n_per_class too small for a train/test split")

    samples = []  # (partition, label, subject_id, recipe)
    next_subject = 0
    for partition, count in (("train", n_train), ("test", n_per_class - n_train)):
        n_subj = max(2, -(-count // 2))
        ids = [f"s{next_subject + i:04d}" for i in range(n_subj)]
        next_subject += n_subj
        subjects = {sid: _draw_subject(rng) for sid in ids}
        for i in range(count):
            sid = ids[i % n_subj]
            samples.append((partition, "bonafide", sid, ("bona", subjects[sid])))
        for i in range(count):
            a, b = rng.choice(n_subj, 2, replace=False)
            sa, sb = subjects[ids[a]], subjects[ids[b]]
            samples.append((partition, "morph", f"{ids[a]}+{ids[b]}", ("morph", sa, sb)))

    rows = []
    capture_seeds = ss.spawn(len(samples))
    for idx, (partition, label, sid, recipe) in enumerate(samples):
        base_cache = {}
        for post in posts:
            src_rng = np.random.default_rng([seed, idx, 99])
            if recipe[0] == "bona":
                clean = base_cache.get("bona")
                if clean is None:
                    clean = base_cache["bona"] = render_bona(recipe[1], options.size, options.grain, src_rng)
            else:
                amp = options.ghost * (options.post_factor if post == "after" else 1.0)
                clean = base_cache.get(amp)
                if clean is None:
                    clean = base_cache[amp] = render_morph(
                        recipe[1], recipe[2], amp, options.size, options.min_shift_px, options.grain, src_rng
                    )
            # identical capture noise for every post/medium variant of a sample
            cap_rng = np.random.default_rng(capture_seeds[idx])
            captured = _capture(clean, cap_rng, options.noise)
            for mi, medium in enumerate(media):
                med_rng = np.random.default_rng([seed, idx, MEDIA.index(medium)])
                printed = _print_scan(captured, medium, med_rng)
                for comp in compression:
                    ext = "jpg" if comp else "png"
                    rel = Path(medium) / post / ("jpeg" if comp else "raw") / f"{label}_{idx:05d}.{ext}"
                    _save(printed, out_dir / rel, comp, options.jpeg_quality)
                    rows.append({
                        "path": rel.as_posix(),
                        "label": label,
                        "medium": medium,
                        "post": post,
                        "compressed": "yes" if comp else "no",
                        "partition": partition,
                        "subject_id": sid,
                    })

    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return manifest


def options_from_dict(d):
    known = {f.name for f in fields(SynthOptions)}
    bad = set(d) - known
    if bad:
        raise ValueError(f"unknown synth option(s): {sorted(bad)}")
    return SynthOptions(**d)
