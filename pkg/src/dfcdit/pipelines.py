"""End-to-end procedures: offline training of the downscaler and decolorizer,
online per-image HDR tone mapping, and inference.

Offline training minimizes, per batch, the perceptual loss between the
input and the network output brought back to the input's shape:
nearest-neighbor upsampling for the downscaler, channel replication for the
decolorizer. Tone mapping trains a fresh network on one image; the network
input and the loss target are both the rescaled log-compressed radiance map.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import lossnet as ln
from .autodiff import DTYPE, AdamState, Graph, adam_step, as_tensor
from .config import TaskConfig
from .errors import NumericError, ShapeError, TaskMismatchError
from .imageio import from_tensor, load_image, luminance, quantize, to_tensor
from .transformnets import TransformNet, build_net, check_input, forward, forward_node

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm", ".jpg", ".jpeg", ".bmp")


@dataclass
class TrainReport:
    task: str
    losses: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    checksum: str = ""
    lossnet_checksum: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def iterations(self):
        return len(self.losses)

    @property
    def initial_loss(self):
        return self.losses[0] if self.losses else None

    @property
    def final_loss(self):
        return self.losses[-1] if self.losses else None

    def to_dict(self):
        return {
            "task": self.task,
            "iterations": self.iterations,
            "losses": [float(v) for v in self.losses],
            "epoch_seconds": [float(v) for v in self.epoch_seconds],
            "checksum": self.checksum,
            "lossnet_checksum": self.lossnet_checksum,
            "extra": self.extra,
        }


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------

def prepare_image(image, size) -> np.ndarray:
    """Center-crop to a square and resize to ``size``; returns (3, size, size) float32."""
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    h, w = arr.shape[:2]
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    crop = np.ascontiguousarray(arr[top : top + s, left : left + s])
    if s != size:
        crop = np.asarray(Image.fromarray(crop).resize((size, size), Image.Resampling.BICUBIC))
    return crop.transpose(2, 0, 1).astype(DTYPE)


def load_corpus(directory, size) -> np.ndarray:
    """All images in ``directory`` (sorted by name) as an (N, 3, size, size) array."""
    paths = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise ValueError(f"{directory}: corpus contains no images")
    return np.stack([prepare_image(load_image(p), size) for p in paths])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _restore_shape(graph, task, net, out):
    if task == "downscale":
        return graph.nn_upsample(out, net.scale_divisor)
    if task == "decolorize":
        return graph.replicate3(out)
    return out


def _train_offline(task, corpus, config: TaskConfig, lossnet: ln.LossNetwork, net=None):
    corpus = np.asarray(corpus, dtype=DTYPE)
    if corpus.ndim != 4 or corpus.shape[0] == 0:
        raise ValueError("training corpus is empty")
    if corpus.shape[1] != 3:
        raise ShapeError(f"training corpus must hold 3-channel images, got shape {corpus.shape}")
    taps = ln._check_taps(lossnet, config.taps_for(task))
    if net is None:
        net = build_net(task, config.seed, config.hidden, config.depth)
    check_input(net, (1,) + corpus.shape[1:])
    lossnet_sum = lossnet.checksum()
    report = TrainReport(task, lossnet_checksum=lossnet_sum)
    state = AdamState.for_params(net.params, lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    n = corpus.shape[0]
    per_epoch = -(-n // config.batch_size)
    total = config.iterations if config.iterations > 0 else config.epochs * per_epoch
    step = 0
    while step < total:
        t0 = time.perf_counter()
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            if step >= total:
                break
            batch = corpus[order[start : start + config.batch_size]]
            g = Graph()
            x = g.constant(batch)
            out, pnodes = forward_node(g, net, x)
            x_hat = _restore_shape(g, task, net, out)
            if x_hat.shape != x.shape:
                raise ShapeError(f"loss inputs differ in shape: {x.shape} vs {x_hat.shape}")
            loss = ln.perceptual_loss_node(g, lossnet, x, x_hat, taps)
            value = float(loss.value.reshape(()))
            if not np.isfinite(value):
                raise NumericError(f"{task} training: loss became {value} at iteration {step}")
            grads = g.backward(loss)
            net.params = adam_step(state, net.params, {k: grads[v] for k, v in pnodes.items()})
            report.losses.append(value)
            step += 1
        report.epoch_seconds.append(time.perf_counter() - t0)
        log.info("%s epoch %d: %d iterations, last loss %.4f", task, len(report.epoch_seconds), step, report.final_loss or 0.0)
    report.checksum = net.checksum()
    if lossnet.checksum() != lossnet_sum:
        raise RuntimeError("loss network parameters changed during training")
    return net, report


def train_downscaler(corpus, config: TaskConfig, lossnet: ln.LossNetwork, net=None):
    """Train T_W so that nn_upsample(T_W(x)) matches x in loss-network features."""
    return _train_offline("downscale", corpus, config, lossnet, net)


def train_decolorizer(corpus, config: TaskConfig, lossnet: ln.LossNetwork, net=None):
    """Train T_W so that the gray output, replicated to 3 channels, matches x."""
    return _train_offline("decolorize", corpus, config, lossnet, net)


# ---------------------------------------------------------------------------
# HDR tone mapping
# ---------------------------------------------------------------------------

def _check_hdr(hdr):
    hdr = np.asarray(hdr, dtype=np.float32)
    if hdr.ndim != 3 or hdr.shape[2] != 3:
        raise ShapeError(f"HDR image must be (H, W, 3), got shape {hdr.shape}")
    if not np.isfinite(hdr).all():
        raise ValueError("HDR radiance contains NaN or infinite values")
    if (hdr < 0).any():
        raise ValueError("HDR radiance contains negative values (corrupt input)")
    return hdr


def log_compress(hdr, alpha=0.5, eps_log=1e-6) -> np.ndarray:
    """``alpha * ln(radiance + eps_log)`` per channel."""
    hdr = np.asarray(hdr, dtype=np.float64)
    if (hdr < 0).any():
        raise ValueError("log_compress: negative radiance (corrupt input)")
    return alpha * np.log(hdr + eps_log)


def rescale_for_loss(compressed):
    """Affine min-max map onto [0, 255]. Returns ``(values, (lo, hi))``.

    A constant map (no dynamic range) becomes mid-gray.
    """
    lo, hi = float(np.min(compressed)), float(np.max(compressed))
    if hi - lo <= 0:
        return np.full(np.shape(compressed), 127.5), (lo, hi)
    return (compressed - lo) * (255.0 / (hi - lo)), (lo, hi)


def render_display(hdr, net_output, gamma=0.5, clamp=True) -> np.ndarray:
    """Recolor the network luminance: ``C_out = (C_in / L_in) ** gamma * L_out``.

    ``net_output`` is a (1, 3, H, W) tensor or an (H, W, 3) array. Pixels with
    zero input luminance render black. Returns float64 (H, W, 3) display
    values, clamped to [0, 255] unless ``clamp`` is false.
    """
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    hdr = np.asarray(hdr, dtype=np.float64)
    out = np.asarray(net_output, dtype=np.float64)
    if out.ndim == 4:
        if out.shape[0] != 1:
            raise ShapeError("render_display takes a single image")
        out = out[0].transpose(1, 2, 0)
    if out.shape != hdr.shape:
        raise ShapeError(f"render_display: HDR shape {hdr.shape} vs network output {out.shape}")
    l_in = luminance(hdr)
    l_out = luminance(out)
    safe = np.where(l_in > 0, l_in, 1.0)
    ratio = np.where((l_in > 0)[..., None], hdr / safe[..., None], 0.0)
    rendered = ratio ** gamma * l_out[..., None]
    return np.clip(rendered, 0.0, 255.0) if clamp else rendered


def tonemap_online(hdr, config: TaskConfig, lossnet: ln.LossNetwork):
    """Fit a fresh tonemapper to one radiance map.

    Returns ``(ldr_uint8, report, net)``.
    """
    hdr = _check_hdr(hdr)
    taps = ln._check_taps(lossnet, config.taps_for("tonemap"))
    compressed = log_compress(hdr, config.alpha, config.eps_log)
    z_img, (lo, hi) = rescale_for_loss(compressed)
    z = to_tensor(z_img)
    net = build_net("tonemap", config.seed, config.hidden, config.depth)
    lossnet_sum = lossnet.checksum()
    report = TrainReport("tonemap", lossnet_checksum=lossnet_sum)
    report.extra["rescale"] = {"log_min": lo, "log_max": hi}
    target = ln.extract_features(lossnet, z, taps)
    state = AdamState.for_params(net.params, lr=config.learning_rate)
    t0 = time.perf_counter()
    for step in range(config.tonemap_steps):
        g = Graph()
        x = g.constant(z)
        out, pnodes = forward_node(g, net, x)
        loss = ln.perceptual_loss_node(g, lossnet, target, out, taps)
        value = float(loss.value.reshape(()))
        if not np.isfinite(value):
            raise NumericError(f"tone mapping: loss became {value} at step {step}")
        grads = g.backward(loss)
        net.params = adam_step(state, net.params, {k: grads[v] for k, v in pnodes.items()})
        report.losses.append(value)
    report.epoch_seconds.append(time.perf_counter() - t0)
    y = forward(net, z)
    report.extra["final_loss_after_update"] = ln.perceptual_loss(lossnet, z, y, taps)
    report.checksum = net.checksum()
    ldr = quantize(render_display(hdr, y, config.gamma))
    return ldr, report, net


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def apply(net: TransformNet, image) -> np.ndarray:
    """Run a trained downscaler or decolorizer on an 8-bit RGB image."""
    arr = np.asarray(image)
    if net.task == "tonemap":
        raise TaskMismatchError("tone-mapping nets are fitted to one HDR image; use the tonemap command")
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise TaskMismatchError(f"{net.task} net needs an RGB image, got shape {arr.shape}")
    x = to_tensor(arr)
    if net.task == "downscale":
        d = net.scale_divisor
        h, w = arr.shape[:2]
        ph, pw = -h % d, -w % d
        if ph or pw:
            x = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="edge")
        y = forward(net, x)[:, :, : -(-h // d), : -(-w // d)]
    else:
        y = forward(net, x)
    return from_tensor(y)
