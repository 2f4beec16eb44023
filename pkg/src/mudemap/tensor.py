"""Dense real tensors with reverse-mode automatic differentiation.

Just enough machinery for the demapper networks: elementwise arithmetic,
matmul, shape ops, 2-D convolutions (full and depthwise), batch
normalization, softmax, the LLR binary cross-entropy loss, and SGD/Adam
steps. Forward values are numpy arrays; every op records a closure that
accumulates vector-Jacobian products into its parents' grads. Reductions run
in a fixed order, so forward and backward passes are reproducible bit-for-bit
for fixed inputs.
"""

from __future__ import annotations

import itertools
import struct
from contextlib import contextmanager

import numpy as np

_LN2 = float(np.log(2.0))
_node_ids = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """An n-dimensional real array in a reverse-mode differentiation graph."""

    __slots__ = ("data", "grad", "node_id", "_parents", "_backward")

    def __init__(self, data):
        self.data = np.asarray(data)
        self.grad = None
        self.node_id = next(_node_ids)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def _acc(self, g, owned=False):
        # owned means g is a freshly allocated array the caller relinquishes,
        # so a first accumulation can adopt it without copying
        if self.grad is None:
            self.grad = g if owned else g.copy()
        else:
            self.grad += g

    def backward(self):
        """Accumulate gradients of this scalar into every graph leaf."""
        if self.data.size != 1:
            raise ValueError(f"backward root must be scalar, got shape {self.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other if isinstance(other, Tensor) else Tensor(np.asarray(other, self.dtype)))

    def __sub__(self, other):
        o = other if isinstance(other, Tensor) else Tensor(np.asarray(other, self.dtype))
        return add(self, scale(o, -1.0))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


def _attach(out: Tensor, parents, bw) -> Tensor:
    if _grad_enabled:
        out._parents = tuple(parents)
        out._backward = bw
    return out


def _unbroadcast(g, shape):
    """Reduce a gradient back down to the shape it was broadcast from."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def bw(g):
        ga = _unbroadcast(g, a.shape)
        a._acc(ga, owned=ga is not g)
        gb = _unbroadcast(g, b.shape)
        b._acc(gb, owned=gb is not g)

    return _attach(out, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def bw(g):
        a._acc(_unbroadcast(g * b.data, a.shape), owned=True)
        b._acc(_unbroadcast(g * a.data, b.shape), owned=True)

    return _attach(out, (a, b), bw)


def scale(a: Tensor, s: float) -> Tensor:
    out = Tensor(a.data * s)

    def bw(g):
        a._acc(g * s, owned=True)

    return _attach(out, (a,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(np.matmul(a.data, b.data))

    def bw(g):
        a._acc(_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape), owned=True)
        if b.ndim == 2 and g.ndim > 2:
            # stacked inputs against a plain weight matrix: one flat gemm
            # instead of a long loop of tiny batched products
            lead = list(range(g.ndim - 1))
            b._acc(np.tensordot(a.data, g, axes=(lead, lead)), owned=True)
        else:
            b._acc(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape), owned=True)

    return _attach(out, (a, b), bw)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def bw(g):
        a._acc(g.reshape(a.shape))

    return _attach(out, (a,), bw)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = Tensor(np.transpose(a.data, axes))
    inv = tuple(np.argsort(axes))

    def bw(g):
        a._acc(np.transpose(g, inv))

    return _attach(out, (a,), bw)


def concat(tensors, axis: int) -> Tensor:
    tensors = tuple(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._acc(piece)

    return _attach(out, tensors, bw)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0))

    def bw(g):
        a._acc(g * (a.data > 0), owned=True)

    return _attach(out, (a,), bw)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def bw(g):
        a._acc(y * (g - np.sum(g * y, axis=axis, keepdims=True)), owned=True)

    return _attach(out, (a,), bw)


def tsum(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.sum(), dtype=a.dtype))

    def bw(g):
        a._acc(np.broadcast_to(g, a.shape))

    return _attach(out, (a,), bw)


def _same_pad(k: int, d: int) -> int:
    eff = d * (k - 1) + 1
    if eff % 2 == 0:
        raise ValueError("same padding requires odd effective kernel extent")
    return eff // 2


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, dilation: int = 1) -> Tensor:
    """Cross-correlation with zero same-padding, NHWC layout.

    x: (N, H, W, C_in); w: (kh, kw, C_in, C_out); b: (C_out,). Output spatial
    dims equal input dims.
    """
    kh, kw, cin, cout = w.shape
    n, h, wd, c = x.shape
    if c != cin:
        raise ValueError(f"channel mismatch: input {c}, weight {cin}")
    ph, pw = _same_pad(kh, dilation), _same_pad(kw, dilation)
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    y = np.zeros((n, h, wd, cout), dtype=x.data.dtype)
    for u in range(kh):
        for v in range(kw):
            y += xp[:, u * dilation:u * dilation + h, v * dilation:v * dilation + wd, :] @ w.data[u, v]
    if b is not None:
        y += b.data
    parents = (x, w) if b is None else (x, w, b)
    out = Tensor(y)

    def bw(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        for u in range(kh):
            for v in range(kw):
                sl = (slice(None), slice(u * dilation, u * dilation + h),
                      slice(v * dilation, v * dilation + wd), slice(None))
                gw[u, v] = np.tensordot(xp[sl], g, axes=([0, 1, 2], [0, 1, 2]))
                gxp[sl] += g @ w.data[u, v].T
        x._acc(np.ascontiguousarray(gxp[:, ph:ph + h, pw:pw + wd, :]), owned=True)
        w._acc(gw, owned=True)
        if b is not None:
            b._acc(g.sum(axis=(0, 1, 2)), owned=True)

    return _attach(out, parents, bw)


def depthwise_conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, dilation: int = 1) -> Tensor:
    """Per-channel convolution: w has shape (kh, kw, C); same padding."""
    kh, kw, c = w.shape
    n, h, wd, cx = x.shape
    if cx != c:
        raise ValueError(f"channel mismatch: input {cx}, weight {c}")
    ph, pw = _same_pad(kh, dilation), _same_pad(kw, dilation)
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    y = np.zeros_like(x.data)
    for u in range(kh):
        for v in range(kw):
            y += xp[:, u * dilation:u * dilation + h, v * dilation:v * dilation + wd, :] * w.data[u, v]
    if b is not None:
        y += b.data
    parents = (x, w) if b is None else (x, w, b)
    out = Tensor(y)

    def bw(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        for u in range(kh):
            for v in range(kw):
                sl = (slice(None), slice(u * dilation, u * dilation + h),
                      slice(v * dilation, v * dilation + wd), slice(None))
                gw[u, v] = (xp[sl] * g).sum(axis=(0, 1, 2))
                gxp[sl] += g * w.data[u, v]
        x._acc(np.ascontiguousarray(gxp[:, ph:ph + h, pw:pw + wd, :]), owned=True)
        w._acc(gw, owned=True)
        if b is not None:
            b._acc(g.sum(axis=(0, 1, 2)), owned=True)

    return _attach(out, parents, bw)


def separable_conv2d(x: Tensor, w_depth: Tensor, w_point: Tensor, b: Tensor | None = None) -> Tensor:
    """Depthwise kxk convolution followed by pointwise 1x1 channel mixing."""
    return conv2d(depthwise_conv2d(x, w_depth), w_point, b)


def batchnorm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.99,
    eps: float = 1e-5,
) -> Tensor:
    """Normalize over all axes but the last (channels-last convention).

    Train mode uses batch statistics and updates the running arrays in place;
    inference mode normalizes with the running statistics.
    """
    if x.data.size == 0:
        raise ValueError("batchnorm on an empty batch")
    axes = tuple(range(x.ndim - 1))
    if train:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean = running_mean
        var = running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    out = Tensor(gamma.data * xhat + beta.data)

    def bw(g):
        gamma._acc((g * xhat).sum(axis=axes), owned=True)
        beta._acc(g.sum(axis=axes), owned=True)
        if train:
            gm = np.mean(g, axis=axes)
            gxm = np.mean(g * xhat, axis=axes)
            x._acc(gamma.data * inv * (g - gm - xhat * gxm), owned=True)
        else:
            x._acc(g * (gamma.data * inv), owned=True)

    return _attach(out, (x, gamma, beta), bw)


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map on the last axis: x @ w + b."""
    return add(matmul(x, w), b)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_from_llr(llr: Tensor, bits: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Mean binary cross-entropy in bits between LLRs and transmitted bits.

    Positive LLR favors bit 0. mask (broadcastable to llr) selects the
    entries that count; the mean is taken over the selected entries. All-zero
    LLRs give exactly 1 bit.
    """
    if bits.shape != llr.shape:
        raise ValueError(f"bits shape {bits.shape} != llr shape {llr.shape}")
    if mask is None:
        maskf = np.ones(llr.shape, dtype=llr.dtype)
    else:
        maskf = np.broadcast_to(mask, llr.shape).astype(llr.dtype)
    count = maskf.sum()
    if count == 0:
        raise ValueError("mask selects no bits")
    sign = np.where(bits == 0, 1.0, -1.0).astype(llr.dtype)
    z = sign * llr.data
    per_bit = np.logaddexp(0.0, -z) / _LN2
    out = Tensor(np.asarray((per_bit * maskf).sum() / count, dtype=llr.dtype))

    def bw(g):
        dz = -_sigmoid(-z) / (_LN2 * count)
        llr._acc(g * sign * dz * maskf, owned=True)

    return _attach(out, (llr,), bw)


class ParamStore:
    """Named parameter tensors plus non-trainable state (running statistics)."""

    def __init__(self):
        self._entries: dict[str, Tensor] = {}
        self._trainable: dict[str, bool] = {}

    def add(self, name: str, array: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(array))
        self._entries[name] = t
        self._trainable[name] = trainable
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def names(self):
        return list(self._entries)

    def tensors(self, trainable_only: bool = False):
        for name, t in self._entries.items():
            if not trainable_only or self._trainable[name]:
                yield name, t

    def num_params(self, trainable_only: bool = True) -> int:
        return sum(t.data.size for _, t in self.tensors(trainable_only))

    def zero_grad(self):
        for _, t in self.tensors():
            t.grad = None

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def load_state(self, arrays: dict[str, np.ndarray]):
        """In-place load so layers holding array references stay valid."""
        missing = set(self._entries) - set(arrays)
        if missing:
            raise ValueError(f"checkpoint missing parameters: {sorted(missing)}")
        for name, t in self._entries.items():
            src = arrays[name]
            if tuple(src.shape) != t.data.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: checkpoint {tuple(src.shape)}, "
                    f"model {t.data.shape}"
                )
            t.data[...] = src


def sgd_step(store: ParamStore, lr: float) -> None:
    """Plain gradient step on every trainable parameter with a gradient."""
    if lr < 0:
        raise ValueError("lr must be >= 0")
    for _, t in store.tensors(trainable_only=True):
        if t.grad is not None:
            t.data -= lr * t.grad


class AdamState:
    """First/second moment accumulators for adam_step."""

    def __init__(self, store: ParamStore):
        self.m = {name: np.zeros_like(t.data) for name, t in store.tensors(trainable_only=True)}
        self.v = {name: np.zeros_like(t.data) for name, t in store.tensors(trainable_only=True)}
        self.t = 0


def adam_step(
    store: ParamStore,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for name, t in store.tensors(trainable_only=True):
        if t.grad is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * t.grad
        v *= beta2
        v += (1.0 - beta2) * t.grad**2
        t.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


# -- checkpoint container -----------------------------------------------------

_CKPT_MAGIC = b"MUDC"
_CKPT_VERSION = 1


def save_checkpoint(store: ParamStore, path: str) -> None:
    """Versioned little-endian container: name/shape table then float32 body."""
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<II", _CKPT_VERSION, len(store.names())))
        for name, t in store.tensors():
            enc = name.encode("utf-8")
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(struct.pack("<BB", int(store.is_trainable(name)), t.data.ndim))
            f.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        for _, t in store.tensors():
            f.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def load_checkpoint_arrays(path: str) -> dict[str, np.ndarray]:
    """Read a checkpoint back into a name -> float32 array mapping."""
    with open(path, "rb") as f:
        if f.read(4) != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a parameter checkpoint")
        version, count = struct.unpack("<II", f.read(8))
        if version != _CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        table = []
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            _, ndim = struct.unpack("<BB", f.read(2))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim)) if ndim else ()
            table.append((name, shape))
        arrays = {}
        for name, shape in table:
            size = int(np.prod(shape)) if shape else 1
            arrays[name] = (
                np.frombuffer(f.read(4 * size), dtype="<f4", count=size).reshape(shape).copy()
            )
    return arrays


def load_checkpoint(store: ParamStore, path: str) -> None:
    """Load a checkpoint into an existing store; shapes must match exactly."""
    store.load_state(load_checkpoint_arrays(path))
