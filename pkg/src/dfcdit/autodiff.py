"""Dense float32 tensors, the operators the three transformation networks and
the loss network need, a tape-style reverse-mode graph, and Adam.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 laid out as
(batch, channel, row, column). Operator forward/backward pairs are plain
functions; :class:`Graph` records them in execution order and replays the
backward halves in reverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import NumericError, ShapeError

DTYPE = np.float32


@dataclass(frozen=True)
class Padding:
    """Spatial padding applied on all four sides before a convolution."""

    kind: str = "zero"  # "zero" or "replicate"
    size: int = 0

    def __post_init__(self):
        if self.kind not in ("zero", "replicate"):
            raise ValueError(f"unknown padding kind {self.kind!r}")
        if self.size < 0:
            raise ValueError("padding size must be >= 0")


def zero_pad(n: int) -> Padding:
    return Padding("zero", n)


def replication_pad(n: int) -> Padding:
    return Padding("replicate", n)


def as_tensor(value, name="tensor") -> np.ndarray:
    """Validate and convert to a contiguous 4-D float32 array."""
    arr = np.ascontiguousarray(value, dtype=DTYPE)
    if arr.ndim != 4:
        raise ShapeError(f"{name}: expected a 4-D (batch, channel, height, width) tensor, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ShapeError(f"{name}: every extent must be >= 1, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# Operator forward/backward pairs
# ---------------------------------------------------------------------------

def _pad(x, padding):
    p = padding.size
    if p == 0:
        return x
    mode = "constant" if padding.kind == "zero" else "edge"
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode=mode)


def _unpad_grad(gp, padding, h, w):
    """Adjoint of :func:`_pad`."""
    p = padding.size
    if p == 0:
        return gp
    if padding.kind == "zero":
        return np.ascontiguousarray(gp[:, :, p : p + h, p : p + w])
    # edge replication: fold padded rows/cols back onto the boundary pixels
    g = gp[:, :, p : p + h, :].copy()
    g[:, :, 0, :] += gp[:, :, :p, :].sum(axis=2)
    g[:, :, h - 1, :] += gp[:, :, p + h :, :].sum(axis=2)
    out = g[:, :, :, p : p + w].copy()
    out[:, :, :, 0] += g[:, :, :, :p].sum(axis=3)
    out[:, :, :, w - 1] += g[:, :, :, p + w :].sum(axis=3)
    return out


def conv2d_forward(x, w, b, stride=(1, 1), padding=Padding(), keep_cols=True):
    n, c, h, wd = x.shape
    if w.ndim != 4:
        raise ShapeError(f"conv2d: weights must be (out, in, kh, kw), got shape {w.shape}")
    o, ci, kh, kw = w.shape
    if ci != c:
        raise ShapeError(f"conv2d: weights expect {ci} input channels but input has {c} (input shape {x.shape}, weight shape {w.shape})")
    if b is not None and b.shape != (o,):
        raise ShapeError(f"conv2d: bias shape {b.shape} does not match {o} filters")
    sh, sw = stride
    if sh < 1 or sw < 1:
        raise ShapeError(f"conv2d: stride must be >= 1, got {stride}")
    hp, wp = h + 2 * padding.size, wd + 2 * padding.size
    if kh > hp or kw > wp:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp} "
            f"(input {h}x{wd}, padding {padding.size})"
        )
    xp = _pad(x, padding)
    cols = K.im2col(xp, kh, kw, sh, sw)
    ho, wo = (hp - kh) // sh + 1, (wp - kw) // sw + 1
    wmat = w.reshape(o, -1)
    out = np.matmul(wmat, cols)
    if b is not None:
        out += b[None, :, None]
    out = out.reshape(n, o, ho, wo)
    cache = (cols if keep_cols else None, w, xp.shape, (h, wd), stride, padding)
    return out, cache


def conv2d_backward(gout, cache, need_x=True, need_w=True, need_b=True):
    cols, w, padded_shape, (h, wd), (sh, sw), padding = cache
    n, o = gout.shape[:2]
    _, _, kh, kw = w.shape
    g = gout.reshape(n, o, -1)
    dx = dw = db = None
    if need_b:
        db = g.sum(axis=(0, 2), dtype=np.float64).astype(DTYPE)
    if need_w:
        dw = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    if need_x:
        dcols = np.matmul(w.reshape(o, -1).T, g)
        dxp = K.col2im(dcols, padded_shape, kh, kw, sh, sw)
        dx = _unpad_grad(dxp, padding, h, wd)
    return dx, dw, db


def relu_forward(x):
    return np.maximum(x, DTYPE(0)), x > 0


def relu_backward(gout, mask):
    return gout * mask


def scaled_tanh_forward(x, lo, hi):
    if not hi > lo:
        raise ValueError(f"scaled_tanh: upper bound {hi} must exceed lower bound {lo}")
    t = np.tanh(x)
    out = (lo + (hi - lo) * (t + 1) * 0.5).astype(DTYPE)
    return out, (t, lo, hi)


def scaled_tanh_backward(gout, cache):
    t, lo, hi = cache
    return (gout * (0.5 * (hi - lo)) * (1 - t * t)).astype(DTYPE)


def nn_upsample_forward(x, factor):
    if factor < 1:
        raise ValueError(f"nn_upsample: factor must be >= 1, got {factor}")
    n, c, h, w = x.shape
    out = np.broadcast_to(x[:, :, :, None, :, None], (n, c, h, factor, w, factor))
    return np.ascontiguousarray(out).reshape(n, c, h * factor, w * factor)


def nn_upsample_backward(gout, factor):
    n, c, hf, wf = gout.shape
    return gout.reshape(n, c, hf // factor, factor, wf // factor, factor).sum(axis=(3, 5))


def replicate3_forward(x):
    if x.shape[1] != 1:
        raise ShapeError(f"replicate3: expected a single-channel tensor, got {x.shape[1]} channels")
    return np.repeat(x, 3, axis=1)


def replicate3_backward(gout):
    return gout.sum(axis=1, keepdims=True)


def sq_distance_forward(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"normalized_sq_distance: shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    # per-item mean over C*H*W, then mean over the batch == mean over all
    value = np.mean(np.square(d, dtype=np.float64))
    return np.full((1, 1, 1, 1), value, dtype=DTYPE), d


def sq_distance_backward(gout, d):
    scale = DTYPE(2.0 / d.size) * gout.reshape(())
    g = d * scale
    return g, -g


# ---------------------------------------------------------------------------
# Array-level conveniences
# ---------------------------------------------------------------------------

def conv2d(x, weights, bias=None, stride=(1, 1), padding=Padding()):
    x = as_tensor(x, "conv2d input")
    w = np.ascontiguousarray(weights, dtype=DTYPE)
    b = None if bias is None else np.ascontiguousarray(bias, dtype=DTYPE)
    return conv2d_forward(x, w, b, tuple(stride), padding, keep_cols=False)[0]


def activation(x, kind="relu", lo=0.0, hi=255.0):
    x = as_tensor(x, "activation input")
    if kind == "relu":
        return relu_forward(x)[0]
    if kind == "scaled_tanh":
        return scaled_tanh_forward(x, lo, hi)[0]
    raise ValueError(f"unknown activation {kind!r}")


def nn_upsample(x, factor):
    return nn_upsample_forward(as_tensor(x, "nn_upsample input"), int(factor))


def replicate3(x):
    return replicate3_forward(as_tensor(x, "replicate3 input"))


def maxpool2x2(x):
    return K.maxpool2x2(as_tensor(x, "maxpool input"))[0]


def normalized_sq_distance(a, b) -> float:
    """Mean of squared differences, normalized per item by C*H*W and averaged over the batch."""
    a = as_tensor(a, "a")
    b = as_tensor(b, "b")
    return float(sq_distance_forward(a, b)[0][0, 0, 0, 0])


# ---------------------------------------------------------------------------
# Graph
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Node:
    id: int
    op: str
    inputs: tuple
    value: np.ndarray
    requires_grad: bool
    cache: object = None
    name: str | None = None

    @property
    def shape(self):
        return self.value.shape


class Graph:
    """Execution tape for one forward pass and its backward pass.

    Nodes are appended as operators run, so inputs always precede their
    consumers. A graph belongs to one training step; build a new one per step.
    """

    def __init__(self, check_finite=True):
        self.nodes: list[Node] = []
        self.grads: list[np.ndarray | None] = []
        self.check_finite = check_finite

    def _add(self, op, inputs, value, cache=None, requires_grad=None, name=None):
        if self.check_finite and not np.isfinite(value).all():
            raise NumericError(f"non-finite values produced by {op}")
        if requires_grad is None:
            requires_grad = any(i.requires_grad for i in inputs)
        node = Node(len(self.nodes), op, tuple(inputs), value, requires_grad, cache, name)
        self.nodes.append(node)
        self.grads.append(None)
        return node

    # leaves ---------------------------------------------------------------
    def constant(self, value, name=None) -> Node:
        return self._add("constant", (), np.ascontiguousarray(value, dtype=DTYPE), requires_grad=False, name=name)

    def parameter(self, value, name=None) -> Node:
        return self._add("parameter", (), np.ascontiguousarray(value, dtype=DTYPE), requires_grad=True, name=name)

    # operators ------------------------------------------------------------
    def conv2d(self, x: Node, w: Node, b: Node | None = None, stride=(1, 1), padding=Padding()) -> Node:
        inputs = (x, w) if b is None else (x, w, b)
        out, cache = conv2d_forward(
            x.value, w.value, None if b is None else b.value, tuple(stride), padding, keep_cols=w.requires_grad
        )
        return self._add("conv2d", inputs, out, cache)

    def relu(self, x: Node) -> Node:
        out, mask = relu_forward(x.value)
        return self._add("relu", (x,), out, mask)

    def scaled_tanh(self, x: Node, lo=0.0, hi=255.0) -> Node:
        out, cache = scaled_tanh_forward(x.value, lo, hi)
        return self._add("scaled_tanh", (x,), out, cache)

    def nn_upsample(self, x: Node, factor: int) -> Node:
        return self._add("nn_upsample", (x,), nn_upsample_forward(x.value, factor), factor)

    def replicate3(self, x: Node) -> Node:
        return self._add("replicate3", (x,), replicate3_forward(x.value))

    def maxpool2x2(self, x: Node) -> Node:
        out, idx = K.maxpool2x2(x.value)
        return self._add("maxpool2x2", (x,), out, (idx, x.value.shape))

    def affine(self, x: Node, scale=1.0, shift=None) -> Node:
        """``x * scale + shift`` with a scalar scale and an optional per-channel shift."""
        out = x.value * DTYPE(scale)
        if shift is not None:
            shift = np.asarray(shift, dtype=DTYPE)
            if shift.shape != (x.value.shape[1],):
                raise ShapeError(f"affine: shift needs {x.value.shape[1]} entries, got {shift.shape}")
            out = out + shift[None, :, None, None]
        return self._add("affine", (x,), out.astype(DTYPE, copy=False), DTYPE(scale))

    def sq_distance(self, a: Node, b: Node) -> Node:
        out, d = sq_distance_forward(a.value, b.value)
        return self._add("sq_distance", (a, b), out, d)

    def add(self, *terms: Node) -> Node:
        if not terms:
            raise ValueError("add needs at least one term")
        out = terms[0].value.copy()
        for t in terms[1:]:
            if t.value.shape != out.shape:
                raise ShapeError(f"add: shape mismatch {t.value.shape} vs {out.shape}")
            out = out + t.value
        return self._add("add", terms, out)

    # backward -------------------------------------------------------------
    def backward(self, loss: Node, keep_intermediate=False) -> dict[Node, np.ndarray]:
        """Propagate d(loss)/d(node) to every reachable parameter.

        Returns a mapping from parameter node to its gradient. Gradients of
        intermediate nodes are dropped once consumed unless
        ``keep_intermediate`` is set.
        """
        if loss.value.size != 1:
            raise ShapeError(f"backward: loss node must be scalar (1x1x1x1), got shape {loss.value.shape}")
        if not np.isfinite(loss.value).all():
            raise NumericError("backward: loss is not finite")
        self.grads = [None] * len(self.nodes)
        self.grads[loss.id] = np.ones_like(loss.value)
        for node in reversed(self.nodes[: loss.id + 1]):
            g = self.grads[node.id]
            if g is None or not node.requires_grad or not node.inputs:
                continue
            in_grads = self._backward_op(node, g)
            for inp, ig in zip(node.inputs, in_grads):
                if ig is None or not inp.requires_grad:
                    continue
                if self.grads[inp.id] is None:
                    self.grads[inp.id] = ig
                else:
                    self.grads[inp.id] = self.grads[inp.id] + ig
            if not keep_intermediate:
                self.grads[node.id] = None
        result = {}
        for node in self.nodes:
            if node.op == "parameter":
                g = self.grads[node.id]
                if g is None:
                    g = np.zeros_like(node.value)
                if self.check_finite and not np.isfinite(g).all():
                    raise NumericError(f"non-finite gradient for parameter {node.name or node.id}")
                result[node] = g
        return result

    def grad(self, node: Node) -> np.ndarray | None:
        return self.grads[node.id]

    @staticmethod
    def _backward_op(node, g):
        op, ins = node.op, node.inputs
        if op == "conv2d":
            x, w = ins[0], ins[1]
            has_b = len(ins) == 3
            dx, dw, db = conv2d_backward(
                g, node.cache, need_x=x.requires_grad, need_w=w.requires_grad,
                need_b=has_b and ins[2].requires_grad,
            )
            return (dx, dw, db) if has_b else (dx, dw)
        if op == "relu":
            return (relu_backward(g, node.cache),)
        if op == "scaled_tanh":
            return (scaled_tanh_backward(g, node.cache),)
        if op == "nn_upsample":
            return (nn_upsample_backward(g, node.cache),)
        if op == "replicate3":
            return (replicate3_backward(g),)
        if op == "maxpool2x2":
            idx, shape = node.cache
            return (K.maxpool2x2_backward(g, idx, shape),)
        if op == "affine":
            return (g * node.cache,)
        if op == "sq_distance":
            return sq_distance_backward(g, node.cache)
        if op == "add":
            return tuple(g for _ in ins)
        raise NotImplementedError(op)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

DEFAULT_LEARNING_RATE = 0.0002


@dataclass
class AdamState:
    lr: float = DEFAULT_LEARNING_RATE
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict, **kwargs) -> "AdamState":
        state = cls(**kwargs)
        for k, p in params.items():
            state.m[k] = np.zeros_like(p, dtype=DTYPE)
            state.v[k] = np.zeros_like(p, dtype=DTYPE)
        return state


def adam_step(state: AdamState, params: dict, grads: dict) -> dict:
    """One bias-corrected Adam update. Returns new parameter arrays; advances ``state``."""
    for k, p in params.items():
        g = grads.get(k)
        if g is None or g.shape != p.shape:
            raise ShapeError(f"adam_step: gradient for {k!r} has shape {None if g is None else g.shape}, parameter {p.shape}")
        if k not in state.m or state.m[k].shape != p.shape:
            raise ShapeError(f"adam_step: optimizer state for {k!r} does not match parameter shape {p.shape}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    new = {}
    for k, p in params.items():
        g = grads[k].astype(DTYPE, copy=False)
        m = state.m[k] = (state.beta1 * state.m[k] + (1.0 - state.beta1) * g).astype(DTYPE)
        v = state.v[k] = (state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g).astype(DTYPE)
        update = (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(DTYPE)
        new[k] = (p - update).astype(DTYPE)
    return new
