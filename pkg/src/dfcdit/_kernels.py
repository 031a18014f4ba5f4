"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy (or pure-Python) twin. The compiled path is
used unless numba is missing or the environment sets ``DFC_DIT_NUMBA=0``.
Both paths are kept importable under explicit names so tests and the
benchmark can compare them in one process.
"""

import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None


def _numba_requested():
    flag = os.environ.get("DFC_DIT_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


HAVE_NUMBA = njit is not None
USE_NUMBA = HAVE_NUMBA and _numba_requested()


# ---------------------------------------------------------------------------
# im2col / col2im
# ---------------------------------------------------------------------------

def im2col_numpy(xp, kh, kw, sh, sw):
    """Gather (N, C*kh*kw, Ho*Wo) patches from an already padded input."""
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * sh + 1 : sh, : (wo - 1) * sw + 1 : sw]
    # (N, C, Ho, Wo, kh, kw) -> (N, C, kh, kw, Ho, Wo)
    cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3))
    return cols.reshape(n, c * kh * kw, ho * wo)


def col2im_numpy(cols, padded_shape, kh, kw, sh, sw):
    """Scatter-add patch gradients back onto the padded input grid."""
    n, c, hp, wp = padded_shape
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    out = np.zeros(padded_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += cols[:, :, i, j]
    return out


# The loop kernels write into caller-allocated buffers: numba's own allocator
# page-faults large fresh arrays on every call.

def _im2col_loops(xp, kh, kw, sh, sw, cols):
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for oy in range(ho):
                        y = oy * sh + i
                        base = oy * wo
                        if sw == 1:  # unit stride vectorizes
                            for ox in range(wo):
                                cols[b, row, base + ox] = xp[b, ch, y, ox + j]
                        else:
                            for ox in range(wo):
                                cols[b, row, base + ox] = xp[b, ch, y, ox * sw + j]
    return cols


def _col2im_loops(cols, kh, kw, sh, sw, out):
    n, c, hp, wp = out.shape
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for oy in range(ho):
                        y = oy * sh + i
                        base = oy * wo
                        if sw == 1:
                            for ox in range(wo):
                                out[b, ch, y, ox + j] += cols[b, row, base + ox]
                        else:
                            for ox in range(wo):
                                out[b, ch, y, ox * sw + j] += cols[b, row, base + ox]
    return out


# ---------------------------------------------------------------------------
# 2x2 / stride-2 max pooling
# ---------------------------------------------------------------------------

def maxpool2x2_numpy(x):
    """Return pooled values and the flat in-window argmax (0..3) per output."""
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    win = x[:, :, : 2 * h2, : 2 * w2].reshape(n, c, h2, 2, w2, 2)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = win.argmax(axis=-1).astype(np.int8)
    out = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2x2_backward_numpy(gout, idx, in_shape):
    n, c, h, w = in_shape
    h2, w2 = gout.shape[2], gout.shape[3]
    onehot = idx[..., None] == np.arange(4, dtype=np.int8)
    g = np.where(onehot, gout[..., None], np.float32(0)).astype(gout.dtype)
    g = g.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
    dx = np.zeros(in_shape, dtype=gout.dtype)
    dx[:, :, : 2 * h2, : 2 * w2] = g
    return dx


def _maxpool_loops(x):
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    out = np.empty((n, c, h2, w2), dtype=x.dtype)
    idx = np.empty((n, c, h2, w2), dtype=np.int8)
    for b in range(n):
        for ch in range(c):
            for y in range(h2):
                for xx in range(w2):
                    best = x[b, ch, 2 * y, 2 * xx]
                    k = 0
                    v = x[b, ch, 2 * y, 2 * xx + 1]
                    if v > best:
                        best = v
                        k = 1
                    v = x[b, ch, 2 * y + 1, 2 * xx]
                    if v > best:
                        best = v
                        k = 2
                    v = x[b, ch, 2 * y + 1, 2 * xx + 1]
                    if v > best:
                        best = v
                        k = 3
                    out[b, ch, y, xx] = best
                    idx[b, ch, y, xx] = k
    return out, idx


def _maxpool_backward_loops(gout, idx, n, c, h, w):
    dx = np.zeros((n, c, h, w), dtype=gout.dtype)
    h2, w2 = gout.shape[2], gout.shape[3]
    for b in range(n):
        for ch in range(c):
            for y in range(h2):
                for xx in range(w2):
                    k = idx[b, ch, y, xx]
                    dx[b, ch, 2 * y + k // 2, 2 * xx + k % 2] = gout[b, ch, y, xx]
    return dx


# ---------------------------------------------------------------------------
# Radiance RGBE scanline decoding
# ---------------------------------------------------------------------------

# status codes returned by the scanline decoder
RLE_OK = 0
RLE_TRUNCATED = 1
RLE_DESYNC = 2
RLE_WIDTH_MISMATCH = 3


def _decode_rgbe_scanlines(data, pos, width, height, out):
    """Decode ``height`` scanlines of ``width`` RGBE pixels into ``out``.

    Handles flat, old-style (1,1,1,n) repeat and adaptive per-component
    RLE scanlines. Returns ``(RLE_OK, end_position)`` on success and
    ``(status, failing_row)`` otherwise.
    """
    size = data.shape[0]
    for y in range(height):
        if pos + 4 > size:
            return RLE_TRUNCATED, y
        b0 = int(data[pos])
        b1 = int(data[pos + 1])
        b2 = int(data[pos + 2])
        b3 = int(data[pos + 3])
        is_rle = width >= 8 and width < 32768 and b0 == 2 and b1 == 2 and b2 < 128
        if is_rle:
            if (b2 << 8) | b3 != width:
                return RLE_WIDTH_MISMATCH, y
            pos += 4
            for comp in range(4):
                x = 0
                while x < width:
                    if pos >= size:
                        return RLE_TRUNCATED, y
                    count = int(data[pos])
                    pos += 1
                    if count > 128:
                        count -= 128
                        if count == 0 or x + count > width:
                            return RLE_DESYNC, y
                        if pos >= size:
                            return RLE_TRUNCATED, y
                        val = data[pos]
                        pos += 1
                        for k in range(count):
                            out[y, x + k, comp] = val
                        x += count
                    else:
                        if count == 0 or x + count > width:
                            return RLE_DESYNC, y
                        if pos + count > size:
                            return RLE_TRUNCATED, y
                        for k in range(count):
                            out[y, x + k, comp] = data[pos + k]
                        pos += count
                        x += count
        else:
            x = 0
            shift = 0
            while x < width:
                if pos + 4 > size:
                    return RLE_TRUNCATED, y
                if data[pos] == 1 and data[pos + 1] == 1 and data[pos + 2] == 1:
                    if x == 0:
                        return RLE_DESYNC, y
                    count = int(data[pos + 3]) << shift
                    if x + count > width:
                        return RLE_DESYNC, y
                    for k in range(count):
                        for comp in range(4):
                            out[y, x + k, comp] = out[y, x - 1, comp]
                    x += count
                    shift += 8
                else:
                    for comp in range(4):
                        out[y, x, comp] = data[pos + comp]
                    x += 1
                    shift = 0
                pos += 4
    return RLE_OK, pos


def decode_rgbe_scanlines_python(data, pos, width, height):
    out = np.zeros((height, width, 4), dtype=np.uint8)
    status, where = _decode_rgbe_scanlines(data, pos, width, height, out)
    return out, status, where


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _im2col_nb = njit(cache=True)(_im2col_loops)
    _col2im_nb = njit(cache=True)(_col2im_loops)
    _maxpool_nb = njit(cache=True)(_maxpool_loops)
    _maxpool_bw_nb = njit(cache=True)(_maxpool_backward_loops)
    _rgbe_nb = njit(cache=True)(_decode_rgbe_scanlines)

    def im2col_numba(xp, kh, kw, sh, sw):
        n, c, hp, wp = xp.shape
        ho, wo = (hp - kh) // sh + 1, (wp - kw) // sw + 1
        cols = np.empty((n, c * kh * kw, ho * wo), dtype=xp.dtype)
        return _im2col_nb(np.ascontiguousarray(xp), kh, kw, sh, sw, cols)

    def col2im_numba(cols, padded_shape, kh, kw, sh, sw):
        out = np.zeros(padded_shape, dtype=cols.dtype)
        return _col2im_nb(np.ascontiguousarray(cols), kh, kw, sh, sw, out)

    def maxpool2x2_numba(x):
        return _maxpool_nb(np.ascontiguousarray(x))

    def maxpool2x2_backward_numba(gout, idx, in_shape):
        n, c, h, w = in_shape
        return _maxpool_bw_nb(np.ascontiguousarray(gout), idx, n, c, h, w)

    def decode_rgbe_scanlines_numba(data, pos, width, height):
        out = np.zeros((height, width, 4), dtype=np.uint8)
        status, where = _rgbe_nb(data, pos, width, height, out)
        return out, status, where


def set_backend(use_numba):
    """Switch the dispatching names between compiled and numpy kernels."""
    global USE_NUMBA, im2col, col2im, maxpool2x2, maxpool2x2_backward, decode_rgbe_scanlines
    USE_NUMBA = bool(use_numba) and HAVE_NUMBA
    if USE_NUMBA:
        im2col = im2col_numba
        col2im = col2im_numba
        maxpool2x2 = maxpool2x2_numba
        maxpool2x2_backward = maxpool2x2_backward_numba
        decode_rgbe_scanlines = decode_rgbe_scanlines_numba
    else:
        im2col = im2col_numpy
        col2im = col2im_numpy
        maxpool2x2 = maxpool2x2_numpy
        maxpool2x2_backward = maxpool2x2_backward_numpy
        decode_rgbe_scanlines = decode_rgbe_scanlines_python


im2col = col2im = maxpool2x2 = maxpool2x2_backward = decode_rgbe_scanlines = None
set_backend(USE_NUMBA)
