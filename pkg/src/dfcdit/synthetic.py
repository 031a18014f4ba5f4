"""Deterministic synthetic inputs: a desk-scale training corpus, HDR radiance
maps with a prescribed dynamic range, and an iso-luminant probe image."""

from __future__ import annotations

import numpy as np

from .imageio import LUMA_WEIGHTS


def _pattern(rng, size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    kind = rng.integers(0, 5)
    colors = rng.uniform(0, 255, size=(2, 3))
    if kind == 0:  # oriented stripes
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(3, size / 4)
        t = 0.5 + 0.5 * np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)))
    elif kind == 1:  # checkerboard
        cells = rng.integers(2, size // 4 + 1)
        t = ((np.floor(xx * cells) + np.floor(yy * cells)) % 2).astype(np.float64)
    elif kind == 2:  # discs on a gradient
        t = xx * rng.uniform(0, 1) + yy * rng.uniform(0, 1)
        for _ in range(rng.integers(3, 8)):
            cx, cy, r = rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.05, 0.25)
            t = np.where((xx - cx) ** 2 + (yy - cy) ** 2 < r * r, rng.uniform(0, 1), t)
        t = (t - t.min()) / (np.ptp(t) + 1e-12)
    elif kind == 3:  # rectangles
        t = np.zeros_like(xx)
        for _ in range(rng.integers(3, 8)):
            x0, y0 = rng.uniform(0, 0.8, size=2)
            w, h = rng.uniform(0.05, 0.5, size=2)
            t = np.where((xx >= x0) & (xx < x0 + w) & (yy >= y0) & (yy < y0 + h), rng.uniform(0, 1), t)
    else:  # smoothed noise texture
        coarse = rng.uniform(0, 1, size=(size // 4, size // 4))
        t = np.kron(coarse, np.ones((4, 4)))[:size, :size]
        t = 0.7 * t + 0.3 * rng.uniform(0, 1, size=(size, size))
    img = colors[0][:, None, None] * (1 - t) + colors[1][:, None, None] * t
    img += rng.normal(0, 4, size=img.shape)  # sensor-like grain
    return np.clip(img, 0, 255)


def synthetic_corpus(n=20, size=64, seed=0) -> np.ndarray:
    """``n`` textured RGB images as an (n, 3, size, size) float32 array on [0, 255]."""
    rng = np.random.default_rng(seed)
    return np.stack([_pattern(rng, size) for _ in range(n)]).astype(np.float32)


def synthetic_hdr(size=128, dynamic_range=1e4, seed=0) -> np.ndarray:
    """(size, size, 3) radiance map whose positive luminance spans at least ``dynamic_range``.

    A diagonal log-luminance ramp sets the range exactly; textured, tinted
    patches ride on top of it.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / (size - 1)
    ramp = (xx + yy) / 2  # 0 at top-left, 1 at bottom-right
    detail = 0.15 * np.sin(2 * np.pi * 6 * xx) * np.sin(2 * np.pi * 4 * yy)
    blobs = np.zeros_like(xx)
    for _ in range(6):
        cx, cy, r = rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.15)
        blobs += rng.uniform(-0.3, 0.3) * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r * r))
    logl = ramp + detail * (0.2 < ramp) * (ramp < 0.8) + blobs * (0.1 < ramp) * (ramp < 0.9)
    logl = (logl - logl.min()) / np.ptp(logl)
    # small headroom so float32 rounding cannot pull the range below the request
    lum = 1e-2 * (dynamic_range * (1 + 1e-5)) ** logl
    tint = np.stack([
        1.0 + 0.4 * np.sin(2 * np.pi * xx),
        1.0 + 0.3 * np.cos(2 * np.pi * yy),
        1.0 + 0.4 * np.sin(2 * np.pi * (xx + yy) + 1.0),
    ], axis=-1)
    wr, wg, wb = (w / 1000 for w in LUMA_WEIGHTS)
    tint /= (wr * tint[..., 0] + wg * tint[..., 1] + wb * tint[..., 2])[..., None]
    return (lum[..., None] * tint).astype(np.float32)


def isoluminant_pair(first=(200, 60, 60), red=60):
    """Two integer RGB colors with identical Rec. 601 luma but different hue.

    The second color keeps its red channel at or just above ``red`` and
    solves ``299 R + 587 G + 114 B = const`` for integer G, B.
    """
    wr, wg, wb = LUMA_WEIGHTS
    total = wr * first[0] + wg * first[1] + wb * first[2]
    for r in range(red, 256):
        for blue in range(255, -1, -1):
            rest = total - wr * r - wb * blue
            if rest >= 0 and rest % wg == 0 and rest // wg <= 255:
                return tuple(first), (r, rest // wg, blue)
    raise ValueError(f"no iso-luminant partner for {first} with red >= {red}")


def isoluminant_probe(size=64, first=(200, 60, 60), red=60):
    """(size, size, 3) uint8 image: left half ``c1``, right half the iso-luminant ``c2``."""
    c1, c2 = isoluminant_pair(first, red)
    img = np.empty((size, size, 3), dtype=np.uint8)
    img[:, : size // 2] = c1
    img[:, size // 2 :] = c2
    return img
