"""Minimal reverse-mode automatic differentiation on fp64 numpy arrays.

Every differentiable operation the detector, the domain discriminators and
the losses need lives here. Graphs are built eagerly: calling an op runs the
forward computation immediately and records a backward closure, so by the
time ``backward`` is invoked the forward pass has already happened.

All math is float64. Dropout uses inverted scaling (division by keep
probability at train time) so inference needs no rescue factor.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

# Flip off to skip finiteness validation on hot paths; tests keep it on.
finite_checks = True

_node_counter = 0


def _next_node_id(op_kind: str) -> str:
    global _node_counter
    _node_counter += 1
    return f"{op_kind}#{_node_counter}"


class ShapeError(ValueError):
    """An op received tensors whose shapes it cannot combine."""


class NonFiniteError(FloatingPointError):
    """A tensor contains NaN or Inf; the message names the producing node."""


class GraphError(RuntimeError):
    """Backward was asked to do something the graph cannot support."""


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse mode.

    ``data`` is always a C-contiguous float64 ndarray. ``grad`` stays None
    until backward reaches this tensor; fan-out accumulates additively.
    """

    __slots__ = ("data", "requires_grad", "grad", "op_kind", "node_id",
                 "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, op_kind: str = "leaf",
                 parents: tuple = (), backward_fn=None, node_id: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op_kind = op_kind
        self.node_id = node_id if node_id is not None else _next_node_id(op_kind)
        self._parents = parents
        self._backward_fn = backward_fn
        if finite_checks and not np.all(np.isfinite(self.data)):
            raise NonFiniteError(f"non-finite values in {self.node_id}")

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor({self.node_id}, shape={self.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False, op_kind="const")


def _make(op_kind: str, out_data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(out_data, requires_grad=req, op_kind=op_kind,
                  parents=parents, backward_fn=backward_fn)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise ops


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}")

    def backward_fn(g):
        ga = _unbroadcast(g, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g, b.shape) if b.requires_grad else None
        return ga, gb

    return _make("add", out, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}")

    def backward_fn(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make("mul", out, (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """a - b, composed from add and mul so the op set stays primitive."""
    return add(a, mul(b, constant(-1.0)))


def scale(a: Tensor, s: float) -> Tensor:
    """a * scalar constant."""
    return mul(a, constant(float(s)))


def square(x: Tensor) -> Tensor:
    out = x.data * x.data

    def backward_fn(g):
        return (g * (2.0 * x.data),)

    return _make("square", out, (x,), backward_fn)


def sqrt_clamped(x: Tensor, clamp_eps: float = 1e-12) -> Tensor:
    """sqrt(max(x, clamp_eps)); gradient is zero in the clamped region."""
    if clamp_eps <= 0:
        raise ValueError("sqrt_clamped: clamp_eps must be > 0")
    clamped = np.maximum(x.data, clamp_eps)
    out = np.sqrt(clamped)

    def backward_fn(g):
        live = x.data > clamp_eps
        return (g * np.where(live, 0.5 / out, 0.0),)

    return _make("sqrt_clamped", out, (x,), backward_fn)


def log_clamped(x: Tensor, clamp_eps: float = 1e-7) -> Tensor:
    """log(clamp(x, eps, 1 - eps)); gradient is zero outside the live band."""
    if clamp_eps <= 0:
        raise ValueError("log_clamped: clamp_eps must be > 0")
    clamped = np.clip(x.data, clamp_eps, 1.0 - clamp_eps)
    out = np.log(clamped)

    def backward_fn(g):
        live = (x.data > clamp_eps) & (x.data < 1.0 - clamp_eps)
        return (g * np.where(live, 1.0 / clamped, 0.0),)

    return _make("log_clamped", out, (x,), backward_fn)


def exp_clamped(x: Tensor, clamp_max: float = 1e4) -> Tensor:
    """exp(x) clamped above at clamp_max; gradient is zero once clamped.

    Needed by the box-size decode inside the detection loss, which the rest
    of the op set cannot express.
    """
    if clamp_max <= 0:
        raise ValueError("exp_clamped: clamp_max must be > 0")
    raw = np.exp(np.minimum(x.data, np.log(clamp_max) + 1.0))
    out = np.minimum(raw, clamp_max)

    def backward_fn(g):
        live = raw < clamp_max
        return (g * np.where(live, out, 0.0),)

    return _make("exp_clamped", out, (x,), backward_fn)


def leaky_relu(x: Tensor, negative_slope: float = 0.1) -> Tensor:
    out = np.where(x.data >= 0.0, x.data, negative_slope * x.data)

    def backward_fn(g):
        return (g * np.where(x.data >= 0.0, 1.0, negative_slope),)

    return _make("leaky_relu", out, (x,), backward_fn)


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid_raw(x.data)

    def backward_fn(g):
        return (g * out * (1.0 - out),)

    return _make("sigmoid", out, (x,), backward_fn)


def _sigmoid_raw(x: np.ndarray) -> np.ndarray:
    # Stable in both tails.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def dropout(x: Tensor, dropout_rate: float, rng: np.random.Generator | None = None,
            mask: np.ndarray | None = None) -> Tensor:
    """Inverted dropout: surviving activations are divided by keep-prob.

    Either an ``rng`` to draw the keep mask from or an explicit ``mask``
    must be supplied; the explicit form exists so finite-difference checks
    can re-evaluate the same realization.
    """
    if not (0.0 <= dropout_rate < 1.0):
        raise ValueError(f"dropout: rate must be in [0, 1), got {dropout_rate}")
    if dropout_rate == 0.0:
        keep = np.ones(x.shape)
    elif mask is not None:
        keep = np.asarray(mask, dtype=np.float64)
        if keep.shape != x.shape:
            raise ShapeError(f"dropout: mask shape {keep.shape} != input {x.shape}")
    else:
        if rng is None:
            raise ValueError("dropout: need an rng or an explicit mask")
        keep = (rng.random(x.shape) >= dropout_rate).astype(np.float64)
    scale_factor = 1.0 / (1.0 - dropout_rate)
    out = x.data * keep * scale_factor

    def backward_fn(g):
        return (g * keep * scale_factor,)

    return _make("dropout", out, (x,), backward_fn)


def grl(x: Tensor, grl_lambda: float) -> Tensor:
    """Gradient reversal: identity forward, -lambda * upstream backward."""
    out = x.data  # exact identity, no copy

    def backward_fn(g):
        return ((-grl_lambda) * g,)

    return _make("grl", out, (x,), backward_fn)


# ---------------------------------------------------------------------------
# reductions and shape ops


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum())

    def backward_fn(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make("sum", out, (x,), backward_fn)


def global_avg_pool(x: Tensor) -> Tensor:
    """(n, h, w, c) -> (n, c) spatial mean."""
    if x.data.ndim != 4:
        raise ShapeError(f"global_avg_pool: want 4-d NHWC, got {x.shape}")
    n, h, w, c = x.shape
    out = x.data.mean(axis=(1, 2))

    def backward_fn(g):
        gx = np.broadcast_to(g[:, None, None, :] / (h * w), (n, h, w, c)).copy()
        return (gx,)

    return _make("global_avg_pool", out, (x,), backward_fn)


def concat_channels(tensors: list[Tensor]) -> Tensor:
    """Concatenate along the trailing (channel) axis."""
    if not tensors:
        raise ShapeError("concat_channels: empty input list")
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise ShapeError(
                f"concat_channels: leading dims differ, {tensors[0].shape} vs {t.shape}")
    out = np.concatenate([t.data for t in tensors], axis=-1)
    widths = [t.shape[-1] for t in tensors]

    def backward_fn(g):
        grads = []
        start = 0
        for t, w in zip(tensors, widths):
            grads.append(g[..., start:start + w] if t.requires_grad else None)
            start += w
        return tuple(grads)

    return _make("concat_channels", out, tuple(tensors), backward_fn)


def upsample_nearest2x(x: Tensor) -> Tensor:
    if x.data.ndim != 4:
        raise ShapeError(f"upsample_nearest2x: want 4-d NHWC, got {x.shape}")
    out = x.data.repeat(2, axis=1).repeat(2, axis=2)
    n, h, w, c = x.shape

    def backward_fn(g):
        gx = g.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4))
        return (gx,)

    return _make("upsample_nearest2x", out, (x,), backward_fn)


def max_pool2x(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; ties resolve to the first window slot."""
    if x.data.ndim != 4:
        raise ShapeError(f"max_pool2x: want 4-d NHWC, got {x.shape}")
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max_pool2x: spatial dims must be even, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    windows = (x.data.reshape(n, h2, 2, w2, 2, c)
               .transpose(0, 1, 3, 5, 2, 4)
               .reshape(n, h2, w2, c, 4))
    argmax = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]

    def backward_fn(g):
        gw = np.zeros((n, h2, w2, c, 4))
        np.put_along_axis(gw, argmax[..., None], g[..., None], axis=-1)
        gx = (gw.reshape(n, h2, w2, c, 2, 2)
              .transpose(0, 1, 4, 2, 5, 3)
              .reshape(n, h, w, c))
        return (gx,)

    return _make("max_pool2x", out, (x,), backward_fn)


def gather_cells(x: Tensor, indices: np.ndarray) -> Tensor:
    """Pick grid-cell channel vectors: (n, h, w, c) + m rows of (batch, i, j) -> (m, c).

    Duplicated indices accumulate gradient additively on backward.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"gather_cells: want 4-d NHWC, got {x.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 2 or idx.shape[1] != 3:
        raise ShapeError(f"gather_cells: indices must be (m, 3), got {idx.shape}")
    bi, ii, jj = idx[:, 0], idx[:, 1], idx[:, 2]
    out = x.data[bi, ii, jj, :]

    def backward_fn(g):
        gx = np.zeros(x.shape)
        np.add.at(gx, (bi, ii, jj), g)
        return (gx,)

    return _make("gather_cells", out, (x,), backward_fn)


def group_mean(x: Tensor, groups: list[tuple[int, ...]]) -> Tensor:
    """Mean the rows of (m, c) within each index group -> (k, c)."""
    if x.data.ndim != 2:
        raise ShapeError(f"group_mean: want 2-d (m, c), got {x.shape}")
    if not groups or any(len(g) == 0 for g in groups):
        raise ShapeError("group_mean: groups must be non-empty")
    out = np.stack([x.data[list(g)].mean(axis=0) for g in groups])

    def backward_fn(g):
        gx = np.zeros(x.shape)
        for gi, members in enumerate(groups):
            contrib = g[gi] / len(members)
            for m in members:
                gx[m] += contrib
        return (gx,)

    return _make("group_mean", out, (x,), backward_fn)


# ---------------------------------------------------------------------------
# dense and convolution


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x (n, d) @ w (d, dout) + b (dout,)."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise ShapeError(f"dense: want 2-d operands, got x {x.shape}, w {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense: inner dims differ, x {x.shape} vs w {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"dense: bias shape {b.shape} != ({w.shape[1]},)")
    out = x.data @ w.data + b.data

    def backward_fn(g):
        gx = g @ w.data.T if x.requires_grad else None
        gw = x.data.T @ g if w.requires_grad else None
        gb = g.sum(axis=0) if b.requires_grad else None
        return gx, gw, gb

    return _make("dense", out, (x, w, b), backward_fn)


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    n, h, w, c = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    hp, wp = x.shape[1], x.shape[2]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    sn, sh, sw, sc = x.strides
    view = np.lib.stride_tricks.as_strided(
        x, (n, ho, wo, kh, kw, c),
        (sn, sh * stride, sw * stride, sh, sw, sc), writeable=False)
    return np.ascontiguousarray(view).reshape(n * ho * wo, kh * kw * c), ho, wo


def _col2im(cols: np.ndarray, x_shape: tuple, kh: int, kw: int,
            stride: int, padding: int, ho: int, wo: int) -> np.ndarray:
    n, h, w, c = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    xp = np.zeros((n, hp, wp, c))
    cols6 = cols.reshape(n, ho, wo, kh, kw, c)
    for ki in range(kh):
        for kj in range(kw):
            xp[:, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride, :] += \
                cols6[:, :, :, ki, kj, :]
    if padding:
        return xp[:, padding:padding + h, padding:padding + w, :]
    return xp


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """NHWC convolution: x (n, h, w, cin), w (kh, kw, cin, cout), b (cout,)."""
    if stride < 1:
        raise ValueError(f"conv2d: stride must be >= 1, got {stride}")
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: want 4-d operands, got x {x.shape}, w {w.shape}")
    n, h, wd, cin = x.shape
    kh, kw, wcin, cout = w.shape
    if cin != wcin:
        raise ShapeError(f"conv2d: input channels {cin} != kernel channels {wcin}")
    if b.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({cout},)")
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{wd + 2 * padding}")

    cols, ho, wo = _im2col(x.data, kh, kw, stride, padding)
    w_mat = w.data.reshape(kh * kw * cin, cout)
    out = (cols @ w_mat + b.data).reshape(n, ho, wo, cout)

    def backward_fn(g):
        g_mat = g.reshape(n * ho * wo, cout)
        gx = None
        if x.requires_grad:
            gcols = g_mat @ w_mat.T
            gx = _col2im(gcols, x.shape, kh, kw, stride, padding, ho, wo)
        gw = (cols.T @ g_mat).reshape(w.shape) if w.requires_grad else None
        gb = g_mat.sum(axis=0) if b.requires_grad else None
        return gx, gw, gb

    return _make("conv2d", out, (x, w, b), backward_fn)


# ---------------------------------------------------------------------------
# backward pass


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> dict[str, np.ndarray]:
    """Propagate d(loss)/d(x) to every requires_grad tensor reachable from loss.

    Gradients land in each tensor's ``.grad`` (accumulating additively over
    fan-out) and the map node_id -> grad for leaf tensors is returned.
    """
    if loss.size != 1:
        raise GraphError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("backward: loss does not depend on any requires_grad tensor")

    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    leaf_grads: dict[str, np.ndarray] = {}
    for node in reversed(order):
        if node.grad is None:
            continue
        if node._backward_fn is None:
            leaf_grads[node.node_id] = node.grad
            continue
        parent_grads = node._backward_fn(node.grad)
        for parent, g in zip(node._parents, parent_grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros(parent.shape)
            parent.grad += g
    return leaf_grads


def zero_grads(params) -> None:
    for p in (params.values() if isinstance(params, dict) else params):
        p.grad = None


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Bias-corrected Adam bookkeeping for a named parameter set."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState) -> AdamState:
    """One Adam update over every parameter present in ``params``.

    ``grads`` must carry an identically shaped gradient for each parameter.
    Parameters are updated in place; the state is returned for chaining.
    """
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        if name not in grads:
            raise KeyError(f"adam_step: no gradient for parameter '{name}'")
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.data.shape:
            raise ShapeError(
                f"adam_step: gradient shape {g.shape} != parameter shape {p.data.shape} for '{name}'")
        m = state.first_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.first_moment[name] = m
            state.second_moment[name] = np.zeros_like(p.data)
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return state


# ---------------------------------------------------------------------------
# checkpoint file format


CHECKPOINT_MAGIC = b"TFCKPT01"


class CheckpointError(IOError):
    """Checkpoint file is missing, truncated or malformed."""


def save_checkpoint(params: dict, path) -> None:
    """Write named fp64 arrays: magic, u32-LE header length, JSON header
    of (name, shape, offset) entries, then raw little-endian payloads.

    Round-trips bit-exactly with :func:`load_checkpoint`.
    """
    entries = []
    payloads = []
    offset = 0
    for name, value in params.items():
        arr = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps(entries).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for raw in payloads:
            fh.write(raw)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        (header_len,) = struct.unpack("<I", fh.read(4))
        try:
            entries = json.loads(fh.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
        payload = fh.read()
    out: dict[str, np.ndarray] = {}
    for entry in entries:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + count * 8
        if end > len(payload):
            raise CheckpointError(f"{path}: payload truncated at '{entry['name']}'")
        arr = np.frombuffer(payload[start:end], dtype="<f8").reshape(shape)
        out[entry["name"]] = arr.astype(np.float64)
    return out
