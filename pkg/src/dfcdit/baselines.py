"""Classical comparison operators and the SSIM metric."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .imageio import luminance, quantize

DOWNSCALE_KINDS = ("subsample", "box", "bilinear", "bicubic", "lanczos3")


def _box(x):
    return ((x >= -0.5) & (x < 0.5)).astype(np.float64)


def _triangle(x):
    return np.maximum(0.0, 1.0 - np.abs(x))


def _keys_cubic(x, a=-0.5):
    x = np.abs(x)
    out = np.zeros_like(x)
    near = x <= 1
    far = (x > 1) & (x < 2)
    out[near] = (a + 2) * x[near] ** 3 - (a + 3) * x[near] ** 2 + 1
    out[far] = a * x[far] ** 3 - 5 * a * x[far] ** 2 + 8 * a * x[far] - 4 * a
    return out


def _lanczos3(x):
    return np.where(np.abs(x) < 3, np.sinc(x) * np.sinc(x / 3), 0.0)


# kind -> (kernel, support radius in output-pixel units)
KERNELS = {
    "box": (_box, 0.5),
    "bilinear": (_triangle, 1.0),
    "bicubic": (_keys_cubic, 2.0),
    "lanczos3": (_lanczos3, 3.0),
}


@dataclass(frozen=True)
class DownscaleMethod:
    kind: str = "bicubic"
    factor: int = 4

    def __post_init__(self):
        if self.kind not in DOWNSCALE_KINDS:
            raise ValueError(f"unknown downscale method {self.kind!r}; expected one of {', '.join(DOWNSCALE_KINDS)}")
        if self.factor < 2:
            raise ValueError(f"downscale factor must be >= 2, got {self.factor}")


def resample_matrix(n_in, factor, kind):
    """(n_in // factor, n_in) matrix whose rows are normalized kernel taps.

    Output sample ``i`` is centered at input coordinate ``(i + 0.5) * factor - 0.5``;
    the kernel is stretched by ``factor`` and out-of-range taps clamp to the edge.
    """
    kernel, radius = KERNELS[kind]
    n_out = n_in // factor
    mat = np.zeros((n_out, n_in))
    support = radius * factor
    for i in range(n_out):
        center = (i + 0.5) * factor - 0.5
        j = np.arange(math.floor(center - support), math.ceil(center + support) + 1)
        w = kernel((j - center) / factor)
        np.add.at(mat[i], np.clip(j, 0, n_in - 1), w)
        mat[i] /= w.sum()
    return mat


def downscale_baseline(image, method: DownscaleMethod | str = "bicubic", factor=None) -> np.ndarray:
    """Downscale an (H, W) or (H, W, C) image; returns float64 values (not quantized)."""
    if isinstance(method, str):
        method = DownscaleMethod(method, 4 if factor is None else factor)
    elif factor is not None and factor != method.factor:
        method = DownscaleMethod(method.kind, factor)
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    h, w = img.shape[:2]
    f = method.factor
    if h % f or w % f:
        raise ShapeError(f"{method.kind} downscale by {f} needs extents divisible by {f}, got {h}x{w}")
    if method.kind == "subsample":
        out = img[::f, ::f].copy()
    else:
        my = resample_matrix(h, f, method.kind)
        mx = resample_matrix(w, f, method.kind)
        out = np.einsum("ij,jkc,lk->ilc", my, img, mx)
    return out[:, :, 0] if squeeze else out


def decolorize_baseline(image) -> np.ndarray:
    """Luminance channel, quantized to uint8."""
    return quantize(luminance(image))


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, g):
    k = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim(a, b, data_range=255.0) -> float:
    """Mean SSIM over all 11x11 Gaussian windows lying fully inside the image."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim: extent mismatch {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ShapeError(f"ssim expects grayscale (H, W) images, got shape {a.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ShapeError(f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
