"""Fixed loss network with named convolution taps and the feature perceptual loss.

The network follows the 19-layer VGG layout (3x3 convolutions with zero
padding 1, ReLU, 2x2 max pooling) but is only instantiated up to conv5_1.
Taps read the convolution output *before* its ReLU.

Three architectures are understood by the archive loader:

``vgg19``
    canonical widths 64/128/256/512/512
``vgg19-narrow``
    same depth, widths listed in the archive config (desk-scale runs)
``tiny``
    conv1_1 -> relu -> pool -> conv2_1 with at most 8 filters per layer
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import archive
from .autodiff import DTYPE, Graph, Node, as_tensor, zero_pad
from .errors import ArchiveError, ShapeError

VGG19_WIDTHS = (64, 128, 256, 512, 512)
VGG19_BLOCKS = (2, 2, 4, 4, 1)  # convs per block, truncated after conv5_1
TINY_BLOCKS = (1, 1)
TINY_MAX_WIDTH = 8
# ImageNet RGB means on the [0, 255] scale
IMAGENET_MEANS = (123.68, 116.779, 103.939)
ARCHITECTURES = ("vgg19", "vgg19-narrow", "tiny")


def architecture_layers(architecture, widths=None):
    """Return the ordered layer descriptors for an architecture.

    Descriptors are ``("conv", name, in_channels, out_channels)``,
    ``("relu",)`` and ``("pool",)``.
    """
    if architecture == "vgg19":
        if widths is not None and tuple(widths) != VGG19_WIDTHS:
            raise ArchiveError(f"vgg19: widths must be {list(VGG19_WIDTHS)}, got {list(widths)}")
        widths, blocks = VGG19_WIDTHS, VGG19_BLOCKS
    elif architecture == "vgg19-narrow":
        if widths is None or len(widths) != len(VGG19_BLOCKS):
            raise ArchiveError(f"vgg19-narrow: config needs {len(VGG19_BLOCKS)} widths, got {widths!r}")
        blocks = VGG19_BLOCKS
    elif architecture == "tiny":
        if widths is None or len(widths) != len(TINY_BLOCKS):
            raise ArchiveError(f"tiny: config needs {len(TINY_BLOCKS)} widths, got {widths!r}")
        if max(widths) > TINY_MAX_WIDTH:
            raise ArchiveError(f"tiny: at most {TINY_MAX_WIDTH} filters per layer, got {list(widths)}")
        blocks = TINY_BLOCKS
    else:
        raise ArchiveError(f"unknown loss-network architecture {architecture!r}")
    layers = []
    cin = 3
    for b, (count, width) in enumerate(zip(blocks, widths), start=1):
        if b > 1:
            layers.append(("pool",))
        for i in range(1, count + 1):
            layers.append(("conv", f"conv{b}_{i}", cin, int(width)))
            layers.append(("relu",))
            cin = int(width)
    return tuple(layers)


@dataclass(frozen=True, eq=False)
class LossNetwork:
    architecture: str
    widths: tuple
    layers: tuple
    params: dict
    means: np.ndarray

    @property
    def conv_names(self):
        return [l[1] for l in self.layers if l[0] == "conv"]

    @property
    def taps(self):
        """Names of the first convolution of every block (conv1_1, conv2_1, ...)."""
        return [n for n in self.conv_names if n.endswith("_1")]

    def tap_channels(self, tap):
        for layer in self.layers:
            if layer[0] == "conv" and layer[1] == tap:
                return layer[3]
        raise KeyError(tap)

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(self.params[name].tobytes())
        h.update(self.means.tobytes())
        return h.hexdigest()


def _freeze(arr):
    arr = np.array(arr, dtype=DTYPE, copy=True)
    arr.setflags(write=False)
    return arr


def _make(architecture, widths, params, means, source="archive"):
    layers = architecture_layers(architecture, widths)
    frozen = {}
    for layer in layers:
        if layer[0] != "conv":
            continue
        _, name, cin, cout = layer
        frozen[f"{name}.weight"] = _freeze(archive.require(params, f"{name}.weight", (cout, cin, 3, 3), source))
        frozen[f"{name}.bias"] = _freeze(archive.require(params, f"{name}.bias", (cout,), source))
    means = _freeze(means if means is not None else np.zeros(3))
    if means.shape != (3,):
        raise ArchiveError(f"{source}: preprocessing means must have 3 entries, got {means.shape}")
    widths = tuple(l[3] for l in layers if l[0] == "conv" and l[1].endswith("_1"))
    return LossNetwork(architecture, widths, layers, frozen, means)


def load_weights(path) -> LossNetwork:
    header, tensors = archive.load(path)
    return from_archive(header, tensors, str(path))


def from_archive(header, tensors, source="archive") -> LossNetwork:
    arch = header.get("architecture")
    widths = header.get("config", {}).get("widths")
    if arch == "vgg19" and widths is None:
        widths = VGG19_WIDTHS
    return _make(arch, widths, tensors, header.get("means"), source)


def save_weights(net: LossNetwork, path):
    tensors = {k: net.params[k] for k in _param_order(net)}
    archive.save(path, net.architecture, tensors, {"widths": list(net.widths)}, net.means)


def _param_order(net):
    for name in net.conv_names:
        yield f"{name}.weight"
        yield f"{name}.bias"


def header_template(architecture="vgg19", widths=None) -> dict:
    """Archive header skeleton (zero-sized payload) for external exporters."""
    layers = architecture_layers(architecture, widths)
    tensors = {}
    for layer in layers:
        if layer[0] == "conv":
            _, name, cin, cout = layer
            tensors[f"{name}.weight"] = np.empty((cout, cin, 3, 3), dtype=DTYPE)
            tensors[f"{name}.bias"] = np.empty((cout,), dtype=DTYPE)
    w = [l[3] for l in layers if l[0] == "conv" and l[1].endswith("_1")]
    return archive.build_header(architecture, tensors, {"widths": w}, IMAGENET_MEANS)


def random_lossnet(architecture="vgg19-narrow", widths=(8, 16, 32, 64, 64), seed=0, means=IMAGENET_MEANS,
                   input_scale=1.0) -> LossNetwork:
    """Seeded He-initialized loss network for desk-scale runs and tests.

    ``input_scale`` multiplies the first convolution's weights. Converted
    pretrained weights fold the pixel normalization in the same place; 1/255
    gives unit-scale features for [0, 255] inputs.
    """
    if architecture == "vgg19":
        widths = VGG19_WIDTHS
    layers = architecture_layers(architecture, widths)
    rng = np.random.default_rng(seed)
    params = {}
    for layer in layers:
        if layer[0] != "conv":
            continue
        _, name, cin, cout = layer
        std = np.sqrt(2.0 / (cin * 9)) * (input_scale if name == "conv1_1" else 1.0)
        params[f"{name}.weight"] = (rng.standard_normal((cout, cin, 3, 3)) * std).astype(DTYPE)
        params[f"{name}.bias"] = np.zeros(cout, dtype=DTYPE)
    return _make(architecture, widths, params, np.asarray(means, dtype=DTYPE))


# ---------------------------------------------------------------------------
# Feature extraction and loss
# ---------------------------------------------------------------------------

def _check_taps(net, taps):
    taps = list(dict.fromkeys(taps))
    if not taps:
        raise ValueError("perceptual loss needs at least one tap")
    known = set(net.conv_names)
    for t in taps:
        if t not in known:
            raise KeyError(f"unknown tap {t!r}; available: {', '.join(net.taps)}")
    return taps


def features(graph: Graph, net: LossNetwork, image: Node, taps) -> dict:
    """Run the layer stack on ``image`` inside ``graph``; return tap -> Node."""
    taps = _check_taps(net, taps)
    if image.value.shape[1] != 3:
        raise ShapeError(f"loss network expects 3-channel input, got {image.value.shape[1]} channels")
    wanted = set(taps)
    out = {}
    h = graph.affine(image, 1.0, -net.means)
    for layer in net.layers:
        if layer[0] == "conv":
            name = layer[1]
            w = graph.constant(net.params[f"{name}.weight"], f"{name}.weight")
            b = graph.constant(net.params[f"{name}.bias"], f"{name}.bias")
            h = graph.conv2d(h, w, b, (1, 1), zero_pad(1))
            if name in wanted:
                out[name] = h
                if len(out) == len(wanted):
                    break
        elif layer[0] == "relu":
            h = graph.relu(h)
        else:
            if min(h.value.shape[2:]) < 2:
                raise ShapeError(f"input too small for the loss network: feature map {h.value.shape[2:]} cannot be pooled")
            h = graph.maxpool2x2(h)
    return {t: out[t] for t in taps}


def extract_features(net: LossNetwork, image, taps) -> dict:
    """Tap name -> feature array of shape (batch, C_i, H_i, W_i)."""
    g = Graph()
    nodes = features(g, net, g.constant(as_tensor(image, "image")), taps)
    return {k: n.value for k, n in nodes.items()}


def perceptual_loss_node(graph: Graph, net: LossNetwork, target, x_hat: Node, taps) -> Node:
    """Sum over taps of the normalized squared feature distance.

    ``target`` is either a Node holding the reference image or a dict of
    precomputed reference features (tap -> array).
    """
    taps = _check_taps(net, taps)
    if isinstance(target, Node):
        if target.value.shape != x_hat.value.shape:
            raise ShapeError(f"perceptual loss: shape mismatch {target.value.shape} vs {x_hat.value.shape}")
        ref = features(graph, net, target, taps)
    else:
        ref = {t: graph.constant(target[t]) for t in taps}
    out = features(graph, net, x_hat, taps)
    terms = [graph.sq_distance(ref[t], out[t]) for t in taps]
    return terms[0] if len(terms) == 1 else graph.add(*terms)


def perceptual_loss(net: LossNetwork, x, x_hat, taps) -> float:
    x = as_tensor(x, "x")
    x_hat = as_tensor(x_hat, "x_hat")
    g = Graph()
    loss = perceptual_loss_node(g, net, g.constant(x), g.constant(x_hat), taps)
    return float(loss.value.reshape(()))
