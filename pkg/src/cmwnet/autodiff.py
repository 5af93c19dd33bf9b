"""Minimal reverse-mode autodiff over numpy arrays.

Single-sample CHW tensors, eager graph construction, scalar-seeded
backward. Convolution/pool forward and backward go through the kernel
backend; everything else is plain numpy. Gradients accumulate into
`Tensor.grad`, so several backward passes add up (used for gradient
accumulation across samples).
"""

import contextlib

import numpy as np

from . import backend
from .errors import InputError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def item(self):
        return float(self.data)

    def backward(self, seed=None):
        """Reverse-mode sweep from this (scalar) tensor."""
        if seed is None:
            if self.data.size != 1:
                raise InputError("backward() without seed requires a scalar tensor")
            seed = np.ones_like(self.data)
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        # Backward closures may hand the same gradient buffer to several
        # parents (add, concat views), so a stored gradient is only mutated
        # in place once this sweep owns a private copy of it.
        grads = {id(self): np.array(seed, dtype=self.data.dtype)}
        owned = {id(self)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            owned.discard(id(node))
            if g is None:
                continue
            if node.requires_grad:
                if node.grad is None:
                    node.grad = g.copy()
                else:
                    node.grad += g
            if node._backward is not None:
                for parent, pg in node._backward(g):
                    if not (parent.requires_grad or parent._backward is not None):
                        continue
                    pid = id(parent)
                    if pid not in grads:
                        grads[pid] = pg
                    elif pid in owned:
                        grads[pid] += pg
                    else:
                        grads[pid] = grads[pid] + pg
                        owned.add(pid)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    data = np.asarray(x, dtype=dtype)
    return Tensor(data)


def _needs_graph(*tensors):
    if not _grad_enabled:
        return False
    for t in tensors:
        if t is not None and (t.requires_grad or t._backward is not None):
            return True
    return False


def _node(data, parents, backward_fn):
    out = Tensor(data)
    out._parents = tuple(parents)
    out._backward = backward_fn
    return out


def conv2d(x, w, b=None, stride=1, pad=0, dilation=1):
    k = backend.kernels()
    y = k.conv2d_fwd(x.data, w.data, stride, pad, dilation)
    if b is not None:
        y += b.data[:, None, None]
    if not _needs_graph(x, w, b):
        return Tensor(y)

    def backward_fn(gy):
        kb = backend.kernels()
        out = [(x, kb.conv2d_bwd_x(gy, w.data, x.data.shape, stride, pad, dilation)),
               (w, kb.conv2d_bwd_w(gy, x.data, w.data.shape, stride, pad, dilation))]
        if b is not None:
            out.append((b, gy.sum(axis=(1, 2))))
        return out

    parents = (x, w) if b is None else (x, w, b)
    return _node(y, parents, backward_fn)


def conv_transpose2d(x, w, b=None, stride=2):
    k = backend.kernels()
    y = k.convt2d_fwd(x.data, w.data, stride)
    if b is not None:
        y += b.data[:, None, None]
    if not _needs_graph(x, w, b):
        return Tensor(y)

    def backward_fn(gy):
        kb = backend.kernels()
        out = [(x, kb.convt2d_bwd_x(gy, w.data, stride)),
               (w, kb.convt2d_bwd_w(gy, x.data, w.data.shape, stride))]
        if b is not None:
            out.append((b, gy.sum(axis=(1, 2))))
        return out

    parents = (x, w) if b is None else (x, w, b)
    return _node(y, parents, backward_fn)


def maxpool2x2(x):
    if x.data.shape[1] % 2 or x.data.shape[2] % 2:
        raise InputError(f"maxpool2x2 needs even spatial dims, got {x.data.shape}")
    k = backend.kernels()
    y, idx = k.maxpool2_fwd(x.data)
    if not _needs_graph(x):
        return Tensor(y)

    def backward_fn(gy):
        kb = backend.kernels()
        return [(x, kb.maxpool2_bwd(gy, idx, x.data.shape))]

    return _node(y, (x,), backward_fn)


def relu(x):
    y = np.maximum(x.data, 0)
    if not _needs_graph(x):
        return Tensor(y)
    mask = x.data > 0

    def backward_fn(gy):
        return [(x, gy * mask)]

    return _node(y, (x,), backward_fn)


def sigmoid(x):
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    y[~pos] = ex / (1.0 + ex)
    if not _needs_graph(x):
        return Tensor(y)

    def backward_fn(gy):
        return [(x, gy * y * (1.0 - y))]

    return _node(y, (x,), backward_fn)


def add(a, b):
    if a.data.shape != b.data.shape:
        raise InputError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    y = a.data + b.data
    if not _needs_graph(a, b):
        return Tensor(y)

    def backward_fn(gy):
        return [(a, gy), (b, gy)]

    return _node(y, (a, b), backward_fn)


def mul(a, b):
    if a.data.shape != b.data.shape:
        raise InputError(f"mul shape mismatch: {a.data.shape} vs {b.data.shape}")
    y = a.data * b.data
    if not _needs_graph(a, b):
        return Tensor(y)

    def backward_fn(gy):
        return [(a, gy * b.data), (b, gy * a.data)]

    return _node(y, (a, b), backward_fn)


def scale(a, c):
    c = float(c)
    y = a.data * c
    if not _needs_graph(a):
        return Tensor(y)

    def backward_fn(gy):
        return [(a, gy * c)]

    return _node(y, (a,), backward_fn)


def concat_channels(tensors):
    y = np.concatenate([t.data for t in tensors], axis=0)
    if not _needs_graph(*tensors):
        return Tensor(y)
    sizes = [t.data.shape[0] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(gy):
        return [(t, gy[offsets[i]:offsets[i + 1]]) for i, t in enumerate(tensors)]

    return _node(y, tuple(tensors), backward_fn)


def weighted_sum(x, weights):
    """Scalar readout sum(x * weights); weights are constant."""
    w = np.asarray(weights, dtype=x.data.dtype)
    if w.shape != x.data.shape:
        raise InputError(f"weighted_sum shape mismatch: {x.data.shape} vs {w.shape}")
    y = np.asarray((x.data * w).sum(), dtype=x.data.dtype)
    if not _needs_graph(x):
        return Tensor(y)

    def backward_fn(gy):
        return [(x, gy * w)]

    return _node(y, (x,), backward_fn)


def softmax_cross_entropy_mean(logits, target):
    """Mean 2-class softmax cross entropy.

    logits: Tensor (2, H, W) with channel 0 = foreground; target: binary
    array (H, W) or (1, H, W), 1 = foreground.
    """
    t = np.asarray(target)
    if t.ndim == 3:
        t = t[0]
    if logits.data.shape[0] != 2 or logits.data.shape[1:] != t.shape:
        raise InputError(
            f"loss shape mismatch: logits {logits.data.shape} vs target {t.shape}")
    z = logits.data
    m = z.max(axis=0)
    zs = z - m
    lse = np.log(np.exp(zs[0]) + np.exp(zs[1]))
    logp_fg = zs[0] - lse
    logp_bg = zs[1] - lse
    t = t.astype(z.dtype)
    n = t.size
    loss = -(t * logp_fg + (1.0 - t) * logp_bg).sum() / n
    y = np.asarray(loss, dtype=z.dtype)
    if not _needs_graph(logits):
        return Tensor(y)
    p_fg = np.exp(logp_fg)

    def backward_fn(gy):
        g = np.empty_like(z)
        g[0] = (p_fg - t) / n
        g[1] = -g[0]
        return [(logits, g * gy)]

    return _node(y, (logits,), backward_fn)
