"""Image decoding/encoding and color conversions.

LDR images are ``uint8`` arrays shaped (H, W) for grayscale or (H, W, 3)
for RGB. HDR images are ``float32`` arrays shaped (H, W, 3) holding linear,
non-negative radiance.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import _kernels as K
from .autodiff import DTYPE
from .errors import FormatError, ShapeError

# Rec. 601 weights as integers per mille so integer colors with equal
# weighted sums give bitwise-equal luminance.
LUMA_WEIGHTS = (299, 587, 114)
LUMA_COEFFS = tuple(w / 1000 for w in LUMA_WEIGHTS)

PPM_SUFFIXES = (".ppm", ".pgm", ".pnm")


# ---------------------------------------------------------------------------
# Luminance and tensor conversion
# ---------------------------------------------------------------------------

def luminance(rgb, axis=-1) -> np.ndarray:
    """Rec. 601 luma ``0.299 R + 0.587 G + 0.114 B`` along ``axis``, as float64."""
    rgb = np.asarray(rgb)
    if rgb.ndim == 0 or rgb.shape[axis] != 3:
        raise ShapeError(f"luminance needs exactly 3 channels on axis {axis}, got shape {rgb.shape}")
    r, g, b = (np.take(rgb, i, axis=axis).astype(np.float64) for i in range(3))
    wr, wg, wb = LUMA_WEIGHTS
    return (wr * r + wg * g + wb * b) / 1000.0


def quantize(values) -> np.ndarray:
    """Clamp to [0, 255] and round half away from zero to ``uint8``."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 255.0)
    return np.floor(v + 0.5).astype(np.uint8)


def to_tensor(image) -> np.ndarray:
    """(H, W) or (H, W, C) samples -> (1, C, H, W) float32 tensor on [0, 255]."""
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ShapeError(f"expected an (H, W), (H, W, 1) or (H, W, 3) image, got shape {arr.shape}")
    return np.ascontiguousarray(arr.transpose(2, 0, 1)[None], dtype=DTYPE)


def from_tensor(tensor) -> np.ndarray:
    """(1, C, H, W) tensor -> uint8 image ((H, W) for C=1, (H, W, 3) for C=3)."""
    t = np.asarray(tensor)
    if t.ndim == 3:
        t = t[None]
    if t.ndim != 4 or t.shape[0] != 1:
        raise ShapeError(f"expected a single-image (1, C, H, W) tensor, got shape {t.shape}")
    if t.shape[1] not in (1, 3):
        raise ShapeError(f"tensor must have 1 or 3 channels, got {t.shape[1]}")
    img = quantize(t[0].transpose(1, 2, 0))
    return img[:, :, 0] if img.shape[2] == 1 else img


# ---------------------------------------------------------------------------
# LDR files
# ---------------------------------------------------------------------------

def _read_ppm(data: bytes, source):
    pos = 0
    tokens = []
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError(f"{source}: malformed PPM header")
        tokens.append(data[start:pos])
    if pos >= n or not data[pos : pos + 1].isspace():
        raise FormatError(f"{source}: malformed PPM header")
    pos += 1
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{source}: unsupported PNM variant {magic!r} (binary P5/P6 only)")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{source}: malformed PPM header") from None
    if width < 1 or height < 1:
        raise FormatError(f"{source}: invalid PPM extent {width}x{height}")
    if maxval != 255:
        raise FormatError(f"{source}: unsupported bit depth (maxval {maxval}, only 255 is supported)")
    channels = 3 if magic == b"P6" else 1
    size = width * height * channels
    payload = data[pos : pos + size]
    if len(payload) < size:
        raise FormatError(f"{source}: truncated PPM payload ({len(payload)} of {size} bytes)")
    img = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels).copy()
    return img[:, :, 0] if channels == 1 else img


def load_image(path) -> np.ndarray:
    """Read an 8-bit PNG or binary PPM/PGM."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from None
    if data[:2] in (b"P5", b"P6", b"P1", b"P2", b"P3", b"P4"):
        return _read_ppm(data, path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I", "F"):
                raise FormatError(f"{path}: unsupported bit depth (mode {mode}); only 8-bit images are supported")
            if mode in ("L", "RGB"):
                arr = np.asarray(im, dtype=np.uint8)
            elif mode in ("1", "LA"):
                arr = np.asarray(im.convert("L"), dtype=np.uint8)
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from None
    return arr.copy()


def save_image(image, path):
    """Write an 8-bit image; the suffix picks PNG or binary PPM/PGM."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        raise ShapeError(f"save_image expects uint8 samples, got {arr.dtype}")
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if not (arr.ndim == 2 or (arr.ndim == 3 and arr.shape[2] == 3)):
        raise ShapeError(f"save_image expects (H, W) or (H, W, 3), got shape {arr.shape}")
    path = Path(path)
    if path.suffix.lower() in PPM_SUFFIXES:
        magic = b"P5" if arr.ndim == 2 else b"P6"
        h, w = arr.shape[:2]
        path.write_bytes(magic + f"\n{w} {h}\n255\n".encode() + np.ascontiguousarray(arr).tobytes())
    else:
        Image.fromarray(arr).save(path, format="PNG")


# ---------------------------------------------------------------------------
# Radiance RGBE
# ---------------------------------------------------------------------------

_RES_RE = re.compile(rb"^([-+])([XY]) (\d+) ([-+])([XY]) (\d+)$")


def rgbe_to_float(rgbe) -> np.ndarray:
    """Decode (..., 4) RGBE bytes: ``(m + 0.5) / 256 * 2**(e - 128)``; e == 0 -> 0."""
    rgbe = np.asarray(rgbe, dtype=np.uint8)
    e = rgbe[..., 3].astype(np.int32)
    scale = np.where(e > 0, np.ldexp(1.0, e - (128 + 8)), 0.0)
    return ((rgbe[..., :3].astype(np.float64) + 0.5) * scale[..., None]).astype(np.float32)


def float_to_rgbe(rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    v = rgb.max(axis=-1)
    mant, exp = np.frexp(v)
    ok = v >= 1e-32
    scale = np.where(ok, np.ldexp(1.0, 8 - exp), 0.0)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    out[..., :3] = np.clip(np.floor(rgb * scale[..., None]), 0, 255).astype(np.uint8)
    out[..., 3] = np.where(ok, np.clip(exp + 128, 0, 255), 0).astype(np.uint8)
    return out


def _parse_hdr_header(data: bytes, source):
    lines_end = data.find(b"\n")
    first = data[:lines_end].rstrip(b"\r") if lines_end >= 0 else b""
    if first not in (b"#?RADIANCE", b"#?RGBE"):
        raise FormatError(f"{source}: bad signature (expected #?RADIANCE)")
    pos = lines_end + 1
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise FormatError(f"{source}: truncated header")
        line = data[pos:nl].rstrip(b"\r")
        pos = nl + 1
        if not line:
            break
        if line.startswith(b"FORMAT="):
            fmt = line[7:].strip()
            if fmt == b"32-bit_rle_xyze":
                raise FormatError(f"{source}: XYZE Radiance files are not supported (RGBE only)")
            if fmt != b"32-bit_rle_rgbe":
                raise FormatError(f"{source}: unsupported pixel format {fmt.decode(errors='replace')}")
    nl = data.find(b"\n", pos)
    if nl < 0:
        raise FormatError(f"{source}: missing resolution line")
    m = _RES_RE.match(data[pos:nl].rstrip(b"\r"))
    if not m:
        raise FormatError(f"{source}: malformed resolution line")
    if (m.group(1), m.group(2), m.group(4), m.group(5)) != (b"-", b"Y", b"+", b"X"):
        raise FormatError(f"{source}: unsupported orientation {data[pos:nl].decode(errors='replace')!r} (only -Y H +X W)")
    height, width = int(m.group(3)), int(m.group(6))
    if height < 1 or width < 1:
        raise FormatError(f"{source}: invalid extent {width}x{height}")
    return width, height, nl + 1


def decode_hdr(data: bytes, source="<bytes>"):
    width, height, pos = _parse_hdr_header(data, source)
    buf = np.frombuffer(data, dtype=np.uint8)
    rgbe, status, where = K.decode_rgbe_scanlines(buf, pos, width, height)
    if status == K.RLE_TRUNCATED:
        raise FormatError(f"{source}: truncated pixel data at scanline {where}")
    if status == K.RLE_DESYNC:
        raise FormatError(f"{source}: RLE desync at scanline {where}")
    if status == K.RLE_WIDTH_MISMATCH:
        raise FormatError(f"{source}: RLE scanline {where} declares a width other than {width}")
    return rgbe_to_float(rgbe)


def load_hdr(path) -> np.ndarray:
    """Read a Radiance RGBE file into an (H, W, 3) float32 radiance map."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from None
    return decode_hdr(data, str(path))


def _rle_component(row: bytes) -> bytes:
    out = bytearray()
    n = len(row)
    cur = 0
    while cur < n:
        beg = cur
        run = 0
        old = 0
        while run < 4 and beg < n:
            beg += run
            old = run
            run = 1
            while beg + run < n and run < 127 and row[beg] == row[beg + run]:
                run += 1
        if 1 < old == beg - cur:
            out += bytes((128 + old, row[cur]))
            cur = beg
        while cur < beg:
            k = min(128, beg - cur)
            out.append(k)
            out += row[cur : cur + k]
            cur += k
        if run >= 4:
            out += bytes((128 + run, row[beg]))
            cur += run
    return bytes(out)


def encode_hdr(hdr, rle=True) -> bytes:
    hdr = np.asarray(hdr, dtype=np.float32)
    if hdr.ndim != 3 or hdr.shape[2] != 3:
        raise ShapeError(f"HDR image must be (H, W, 3), got shape {hdr.shape}")
    if not np.isfinite(hdr).all() or (hdr < 0).any():
        raise ValueError("HDR radiance must be finite and non-negative")
    h, w = hdr.shape[:2]
    rgbe = float_to_rgbe(hdr)
    parts = [b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n", f"-Y {h} +X {w}\n".encode()]
    use_rle = rle and 8 <= w < 32768
    for y in range(h):
        if use_rle:
            parts.append(bytes((2, 2, w >> 8, w & 0xFF)))
            for c in range(4):
                parts.append(_rle_component(rgbe[y, :, c].tobytes()))
        else:
            parts.append(rgbe[y].tobytes())
    return b"".join(parts)


def save_hdr(hdr, path, rle=True):
    Path(path).write_bytes(encode_hdr(hdr, rle))
