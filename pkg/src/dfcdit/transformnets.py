"""The three trainable transformation networks.

downscale
    ``depth`` convolutions with 4x4 kernels, stride 2 and zero padding 1;
    ReLU between them. Each convolution halves the extent, so the default
    depth of 2 gives x1/4.
decolorize
    3x3 convolutions, stride 1, replication padding 1, ReLU between them;
    the last convolution has a single filter.
tonemap
    as decolorize but the last convolution has 3 filters and is followed by
    a tanh scaled to (0, 255).

All nets see their input mapped from [0, 255] onto [-1, 1]. The downscaler
and decolorizer map their last convolution back with the inverse affine map,
so outputs live on the display scale.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import archive
from .autodiff import DTYPE, Graph, Node, as_tensor, replication_pad, zero_pad
from .errors import ArchiveError, ShapeError

TASKS = ("downscale", "decolorize", "tonemap")
DEFAULT_HIDDEN = 32
DEFAULT_DEPTH = 2
HALF_RANGE = 127.5
TANH_RANGE = (0.0, 255.0)


def net_layers(task, hidden=DEFAULT_HIDDEN, depth=DEFAULT_DEPTH):
    """Ordered conv descriptors ``(name, in, out, kernel, stride, padding)``."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {', '.join(TASKS)}")
    min_depth = 1 if task == "downscale" else 2
    if depth < min_depth:
        raise ValueError(f"{task} net needs depth >= {min_depth}, got {depth}")
    if hidden < 1:
        raise ValueError("hidden width must be >= 1")
    out_ch = 1 if task == "decolorize" else 3
    layers = []
    for i in range(depth):
        cin = 3 if i == 0 else hidden
        cout = out_ch if i == depth - 1 else hidden
        if task == "downscale":
            layers.append((f"conv{i + 1}", cin, cout, 4, 2, zero_pad(1)))
        else:
            layers.append((f"conv{i + 1}", cin, cout, 3, 1, replication_pad(1)))
    return tuple(layers)


@dataclass(eq=False)
class TransformNet:
    task: str
    hidden: int
    depth: int
    seed: int
    params: dict = field(default_factory=dict)

    @property
    def layers(self):
        return net_layers(self.task, self.hidden, self.depth)

    @property
    def out_channels(self):
        return 1 if self.task == "decolorize" else 3

    @property
    def scale_divisor(self):
        """Spatial reduction factor (1 for the extent-preserving nets)."""
        return 2 ** self.depth if self.task == "downscale" else 1

    def copy(self) -> "TransformNet":
        return TransformNet(self.task, self.hidden, self.depth, self.seed, {k: v.copy() for k, v in self.params.items()})

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name], dtype=DTYPE).tobytes())
        return h.hexdigest()


def build_net(task, seed=0, hidden=DEFAULT_HIDDEN, depth=DEFAULT_DEPTH) -> TransformNet:
    """Fresh network with He-style fan-in initialization drawn from ``seed``."""
    layers = net_layers(task, hidden, depth)
    rng = np.random.default_rng(seed)
    params = {}
    for name, cin, cout, k, _, _ in layers:
        std = np.sqrt(2.0 / (cin * k * k))
        params[f"{name}.weight"] = (rng.standard_normal((cout, cin, k, k)) * std).astype(DTYPE)
        params[f"{name}.bias"] = np.zeros(cout, dtype=DTYPE)
    return TransformNet(task, hidden, depth, seed, params)


def check_input(net: TransformNet, shape):
    if len(shape) != 4 or shape[1] != 3:
        raise ShapeError(f"{net.task} net expects a 3-channel image tensor, got shape {tuple(shape)}")
    d = net.scale_divisor
    if d > 1 and (shape[2] % d or shape[3] % d):
        raise ShapeError(f"downscale net needs height and width divisible by {d}, got {shape[2]}x{shape[3]}")
    if net.task != "downscale" and min(shape[2:]) < 1:
        raise ShapeError("empty image")


def forward_node(graph: Graph, net: TransformNet, x: Node, trainable=True):
    """Add the network to ``graph``. Returns ``(output_node, {param name: node})``."""
    check_input(net, x.value.shape)
    leaf = graph.parameter if trainable else graph.constant
    pnodes = {k: leaf(v, k) for k, v in net.params.items()}
    layers = net.layers
    h = graph.affine(x, 1.0 / HALF_RANGE, np.full(3, -1.0))
    for i, (name, _, _, _, stride, pad) in enumerate(layers):
        h = graph.conv2d(h, pnodes[f"{name}.weight"], pnodes[f"{name}.bias"], (stride, stride), pad)
        if i < len(layers) - 1:
            h = graph.relu(h)
    if net.task == "tonemap":
        h = graph.scaled_tanh(h, *TANH_RANGE)
    else:
        h = graph.affine(h, HALF_RANGE, np.full(net.out_channels, HALF_RANGE))
    return h, pnodes


def forward(net: TransformNet, image) -> np.ndarray:
    image = as_tensor(image, "image")
    g = Graph()
    out, _ = forward_node(g, net, g.constant(image), trainable=False)
    return out.value


def save_net(net: TransformNet, path, extra=None):
    tensors = {}
    for name, *_ in net.layers:
        tensors[f"{name}.weight"] = net.params[f"{name}.weight"]
        tensors[f"{name}.bias"] = net.params[f"{name}.bias"]
    config = {"task": net.task, "hidden": net.hidden, "depth": net.depth, "seed": net.seed}
    archive.save(path, f"transform-{net.task}", tensors, config, extra=extra)


def load_net(path) -> TransformNet:
    header, tensors = archive.load(path)
    return net_from_archive(header, tensors, str(path))


def net_from_archive(header, tensors, source="archive") -> TransformNet:
    arch = header.get("architecture", "")
    cfg = header.get("config", {})
    task = cfg.get("task")
    if not arch.startswith("transform-") or task not in TASKS or arch != f"transform-{task}":
        raise ArchiveError(f"{source}: not a transformation-network archive (architecture {arch!r})")
    try:
        hidden, depth, seed = int(cfg["hidden"]), int(cfg["depth"]), int(cfg.get("seed", 0))
        layers = net_layers(task, hidden, depth)
    except (KeyError, ValueError) as exc:
        raise ArchiveError(f"{source}: bad transformation-network config ({exc})") from None
    params = {}
    for name, cin, cout, k, _, _ in layers:
        params[f"{name}.weight"] = archive.require(tensors, f"{name}.weight", (cout, cin, k, k), source).copy()
        params[f"{name}.bias"] = archive.require(tensors, f"{name}.bias", (cout,), source).copy()
    return TransformNet(task, hidden, depth, seed, params)
