"""Slow reference implementations used only as test oracles.

Everything here is written with explicit Python loops over float64 values
and never calls into the package's kernels.
"""

import numpy as np


def pad_index(i, n, kind):
    """Map a padded coordinate to a source index, or None for zero padding."""
    if 0 <= i < n:
        return i
    if kind == "zero":
        return None
    return min(max(i, 0), n - 1)


def conv2d_loops(x, w, b, stride=(1, 1), pad=0, kind="zero"):
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    sh, sw = stride
    ho = (h + 2 * pad - kh) // sh + 1
    wo = (wd + 2 * pad - kw) // sw + 1
    out = np.zeros((n, o, ho, wo))
    for bi in range(n):
        for f in range(o):
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0 if b is None else float(b[f])
                    for ch in range(c):
                        for ky in range(kh):
                            iy = pad_index(oy * sh + ky - pad, h, kind)
                            if iy is None:
                                continue
                            for kx in range(kw):
                                ix = pad_index(ox * sw + kx - pad, wd, kind)
                                if ix is None:
                                    continue
                                acc += x[bi, ch, iy, ix] * w[f, ch, ky, kx]
                    out[bi, f, oy, ox] = acc
    return out


def maxpool_loops(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c, h // 2, w // 2))
    for bi in range(n):
        for ch in range(c):
            for y in range(h // 2):
                for xx in range(w // 2):
                    out[bi, ch, y, xx] = max(
                        x[bi, ch, 2 * y + dy, 2 * xx + dx] for dy in (0, 1) for dx in (0, 1)
                    )
    return out


def sq_distance_loops(a, b):
    """Per-item (1/(C*H*W)) * triple sum of squared differences, averaged over the batch."""
    n, c, h, w = a.shape
    total = 0.0
    for bi in range(n):
        s = 0.0
        for ch in range(c):
            for y in range(h):
                for x in range(w):
                    d = float(a[bi, ch, y, x]) - float(b[bi, ch, y, x])
                    s += d * d
        total += s / (c * h * w)
    return total / n


def lossnet_features_loops(net, image, taps):
    """Run a LossNetwork's layer list with the loop oracles (float64)."""
    h = np.asarray(image, dtype=np.float64) - np.asarray(net.means, dtype=np.float64)[None, :, None, None]
    wanted = set(taps)
    out = {}
    for layer in net.layers:
        if layer[0] == "conv":
            name = layer[1]
            h = conv2d_loops(h, net.params[f"{name}.weight"], net.params[f"{name}.bias"], (1, 1), 1, "zero")
            if name in wanted:
                out[name] = h
                if len(out) == len(wanted):
                    break
        elif layer[0] == "relu":
            h = np.maximum(h, 0.0)
        else:
            h = maxpool_loops(h)
    return out


def perceptual_loss_loops(net, x, x_hat, taps):
    fx = lossnet_features_loops(net, x, taps)
    fy = lossnet_features_loops(net, x_hat, taps)
    return sum(sq_distance_loops(fx[t], fy[t]) for t in taps)


def finite_difference(f, x, h=1e-3):
    """Central differences of scalar ``f`` at float32 ``x``.

    The step actually taken is measured after float32 rounding, so large
    input magnitudes do not bias the quotient.
    """
    x = np.array(x, dtype=np.float32)
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        plus = np.float32(orig + np.float32(h))
        minus = np.float32(orig - np.float32(h))
        flat[i] = plus
        fp = f(x)
        flat[i] = minus
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (float(plus) - float(minus))
    return grad


def grad_errors(analytic, numeric):
    """(max-norm relative error, mean relative error) of two gradients."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(n).max(), np.abs(a).max(), 1e-12)
    max_rel = np.abs(a - n).max() / scale
    typical = np.abs(a - n).mean() / max(np.abs(n).mean(), 1e-12)
    return max_rel, typical
