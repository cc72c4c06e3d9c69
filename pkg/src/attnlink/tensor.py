"""Minimal dense-tensor engine with reverse-mode differentiation.

Tensors wrap contiguous numpy buffers (float32 for training, float64 for
gradient checking). Every primitive that participates in training records a
backward closure; calling ``backward()`` on a scalar replays them in reverse
topological order. Reductions inherit numpy's deterministic order, so two
runs with the same seed produce bit-identical trajectories.
"""

import numpy as np

from . import kernels
from .errors import ConfigurationError, DimensionError, InputError, NumericError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- graph traversal -------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise DimensionError(f"backward() needs a scalar, got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise NumericError("backward() called on a non-finite loss")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def constant(data, dtype=None):
    """Wrap an array as a non-differentiable leaf."""
    arr = np.asarray(data, dtype=dtype)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    # ascontiguousarray promotes rank-0 arrays to shape (1,); keep the rank
    return Tensor(np.ascontiguousarray(arr).reshape(arr.shape))


def parameter(data, dtype=None):
    """Wrap an array as a trainable leaf."""
    t = constant(data, dtype)
    t.requires_grad = True
    return t


def _ensure(x):
    return x if isinstance(x, Tensor) else constant(x)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _accum(t, g, own=False):
    # own=True promises g is a freshly allocated array no closure re-reads,
    # so the first accumulation can take it without copying.
    if not t.requires_grad:
        return
    if g.shape != t.data.shape:
        g = _unbroadcast(g, t.data.shape)
        own = True
    if t.grad is None:
        t.grad = g if own else g.copy()
    else:
        t.grad += g


def _node(data, parents):
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents)), True
    return Tensor(data), False


# -- elementwise and structural primitives ------------------------------


def add(a, b):
    a, b = _ensure(a), _ensure(b)
    out, rec = _node(a.data + b.data, (a, b))
    if rec:
        def _bw():
            _accum(a, out.grad)
            _accum(b, out.grad)
        out._backward = _bw
    return out


def sub(a, b):
    a, b = _ensure(a), _ensure(b)
    out, rec = _node(a.data - b.data, (a, b))
    if rec:
        def _bw():
            _accum(a, out.grad)
            _accum(b, -out.grad, own=True)
        out._backward = _bw
    return out


def mul(a, b):
    a, b = _ensure(a), _ensure(b)
    out, rec = _node(a.data * b.data, (a, b))
    if rec:
        def _bw():
            _accum(a, out.grad * b.data, own=True)
            _accum(b, out.grad * a.data, own=True)
        out._backward = _bw
    return out


def div(a, b):
    a, b = _ensure(a), _ensure(b)
    out, rec = _node(a.data / b.data, (a, b))
    if rec:
        def _bw():
            _accum(a, out.grad / b.data, own=True)
            _accum(b, -out.grad * a.data / (b.data * b.data), own=True)
        out._backward = _bw
    return out


def scale(a, s):
    a = _ensure(a)
    s = float(s)
    out, rec = _node(a.data * a.data.dtype.type(s), (a,))
    if rec:
        def _bw():
            _accum(a, out.grad * a.data.dtype.type(s), own=True)
        out._backward = _bw
    return out


def sqrt(a):
    a = _ensure(a)
    y = np.sqrt(a.data)
    out, rec = _node(y, (a,))
    if rec:
        def _bw():
            _accum(a, out.grad * 0.5 / y, own=True)
        out._backward = _bw
    return out


def exp(a):
    a = _ensure(a)
    y = np.exp(a.data)
    out, rec = _node(y, (a,))
    if rec:
        def _bw():
            _accum(a, out.grad * y, own=True)
        out._backward = _bw
    return out


def log(a):
    a = _ensure(a)
    out, rec = _node(np.log(a.data), (a,))
    if rec:
        def _bw():
            _accum(a, out.grad / a.data, own=True)
        out._backward = _bw
    return out


def tanh(a):
    a = _ensure(a)
    y = np.tanh(a.data)
    out, rec = _node(y, (a,))
    if rec:
        def _bw():
            _accum(a, out.grad * (1.0 - y * y), own=True)
        out._backward = _bw
    return out


def relu(a):
    a = _ensure(a)
    out, rec = _node(np.maximum(a.data, 0), (a,))
    if rec:
        mask = a.data > 0
        def _bw():
            _accum(a, out.grad * mask, own=True)
        out._backward = _bw
    return out


def reshape(a, shape):
    a = _ensure(a)
    out, rec = _node(a.data.reshape(shape), (a,))
    if rec:
        def _bw():
            _accum(a, out.grad.reshape(a.data.shape))
        out._backward = _bw
    return out


def transpose(a, axes):
    a = _ensure(a)
    out, rec = _node(a.data.transpose(axes), (a,))
    if rec:
        inv = np.argsort(axes)
        def _bw():
            _accum(a, out.grad.transpose(inv))
        out._backward = _bw
    return out


def getitem(a, key):
    a = _ensure(a)
    out, rec = _node(np.ascontiguousarray(a.data[key]), (a,))
    if rec:
        def _bw():
            g = np.zeros_like(a.data)
            np.add.at(g, key, out.grad)
            _accum(a, g, own=True)
        out._backward = _bw
    return out


def concat(tensors, axis):
    tensors = [_ensure(t) for t in tensors]
    out, rec = _node(np.concatenate([t.data for t in tensors], axis=axis), tensors)
    if rec:
        sizes = [t.data.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]
        def _bw():
            for t, g in zip(tensors, np.split(out.grad, splits, axis=axis)):
                _accum(t, g)
        out._backward = _bw
    return out


def broadcast_to(a, shape):
    a = _ensure(a)
    out, rec = _node(np.ascontiguousarray(np.broadcast_to(a.data, shape)), (a,))
    if rec:
        def _bw():
            _accum(a, out.grad)
        out._backward = _bw
    return out


def tsum(a, axis=None, keepdims=False):
    a = _ensure(a)
    out, rec = _node(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,))
    if rec:
        def _bw():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(g, a.data.shape))
        out._backward = _bw
    return out


def tmean(a, axis=None, keepdims=False):
    a = _ensure(a)
    n = a.data.size if axis is None else np.prod([a.data.shape[ax] for ax in np.atleast_1d(axis)])
    return scale(tsum(a, axis, keepdims), 1.0 / float(n))


# -- linear algebra -----------------------------------------------------


def matmul(a, b):
    a, b = _ensure(a), _ensure(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}")
    out, rec = _node(a.data @ b.data, (a, b))
    if rec:
        def _bw():
            _accum(a, out.grad @ np.swapaxes(b.data, -1, -2), own=True)
            _accum(b, np.swapaxes(a.data, -1, -2) @ out.grad, own=True)
        out._backward = _bw
    return out


def linear(x, w, b):
    """x @ w + b with the leading axes of x flattened into one GEMM."""
    x, w, b = _ensure(x), _ensure(w), _ensure(b)
    if x.data.shape[-1] != w.data.shape[0]:
        raise DimensionError(f"linear shapes disagree: {x.data.shape} x {w.data.shape}")
    lead = x.data.shape[:-1]
    xf = x.data.reshape(-1, x.data.shape[-1])
    y = (xf @ w.data + b.data).reshape(lead + (w.data.shape[1],))
    out, rec = _node(y, (x, w, b))
    if rec:
        def _bw():
            dyf = out.grad.reshape(-1, w.data.shape[1])
            _accum(x, (dyf @ w.data.T).reshape(x.data.shape), own=True)
            _accum(w, xf.T @ dyf, own=True)
            _accum(b, dyf.sum(axis=0), own=True)
        out._backward = _bw
    return out


def softmax(x, axis=-1):
    x = _ensure(x)
    if np.isnan(x.data).any():
        raise NumericError("softmax received NaN input")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out, rec = _node(y, (x,))
    if rec:
        def _bw():
            g = out.grad
            _accum(x, y * (g - (g * y).sum(axis=axis, keepdims=True)), own=True)
        out._backward = _bw
    return out


def gelu(x):
    # tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
    x = _ensure(x)
    c = x.data.dtype.type(0.7978845608028654)
    k = x.data.dtype.type(0.044715)
    xd = x.data
    t = np.tanh(c * (xd + k * xd * xd * xd))
    out, rec = _node(0.5 * xd * (1.0 + t), (x,))
    if rec:
        def _bw():
            dydx = 0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * c * (1.0 + 3.0 * k * xd * xd)
            _accum(x, out.grad * dydx, own=True)
        out._backward = _bw
    return out


def layer_norm(x, gamma, beta, eps=1e-5):
    """Per-token normalization over the last axis with learnable scale/shift."""
    x, gamma, beta = _ensure(x), _ensure(gamma), _ensure(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = xc * inv
    out, rec = _node(xhat * gamma.data + beta.data, (x, gamma, beta))
    if rec:
        lead = tuple(range(x.data.ndim - 1))
        def _bw():
            dy = out.grad
            d1 = dy * gamma.data
            m1 = d1.mean(axis=-1, keepdims=True)
            m2 = (d1 * xhat).mean(axis=-1, keepdims=True)
            _accum(x, (d1 - m1 - xhat * m2) * inv, own=True)
            _accum(gamma, (dy * xhat).sum(axis=lead), own=True)
            _accum(beta, dy.sum(axis=lead), own=True)
        out._backward = _bw
    return out


def batch_norm(x, gamma, beta, running_mean, running_var, training, momentum=0.1, eps=1e-5):
    """Channel-wise batch normalization for [B, C, H, W] inputs.

    In training mode, batch statistics normalize the input and the running
    buffers (plain numpy arrays) are updated in place with the given momentum.
    """
    x, gamma, beta = _ensure(x), _ensure(gamma), _ensure(beta)
    g = reshape(gamma, (1, -1, 1, 1))
    b = reshape(beta, (1, -1, 1, 1))
    epsc = constant(np.array(eps, dtype=x.data.dtype))
    if training:
        mu = tmean(x, axis=(0, 2, 3), keepdims=True)
        xc = sub(x, mu)
        var = tmean(mul(xc, xc), axis=(0, 2, 3), keepdims=True)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.data.reshape(-1)
        running_var *= 1.0 - momentum
        running_var += momentum * var.data.reshape(-1)
        xhat = div(xc, sqrt(add(var, epsc)))
    else:
        rm = constant(running_mean.reshape(1, -1, 1, 1), dtype=x.data.dtype)
        rv = constant(running_var.reshape(1, -1, 1, 1), dtype=x.data.dtype)
        xhat = div(sub(x, rm), sqrt(add(rv, epsc)))
    return add(mul(xhat, g), b)


def l2_normalize(x, eps=1e-12):
    """x / (||x||_2 + eps), the norm taken over the last axis."""
    x = _ensure(x)
    norm = sqrt(tsum(mul(x, x), axis=-1, keepdims=True))
    return div(x, add(norm, constant(np.array(eps, dtype=x.data.dtype))))


# -- convolutional primitives ------------------------------------------


def conv2d(x, w, b, stride=1, padding=0):
    """Cross-correlation convolution over [B, Cin, H, W] with kernel [Cout, Cin, kh, kw]."""
    x, w, b = _ensure(x), _ensure(w), _ensure(b)
    bs, ci, h, ww = x.data.shape
    co, ciw, kh, kw = w.data.shape
    if ci != ciw:
        raise DimensionError(f"conv2d channel mismatch: input {x.data.shape} vs kernel {w.data.shape}")
    if h + 2 * padding < kh or ww + 2 * padding < kw:
        raise ConfigurationError(f"kernel {kh}x{kw} does not fit padded input {h}x{ww} (padding {padding})")
    if (h + 2 * padding - kh) % stride or (ww + 2 * padding - kw) % stride:
        raise ConfigurationError(
            f"conv2d output size is not integral for input {h}x{ww}, kernel {kh}x{kw}, "
            f"stride {stride}, padding {padding}")
    y = kernels.conv2d_forward(x.data, w.data, b.data, stride, padding)
    out, rec = _node(y, (x, w, b))
    if rec:
        def _bw():
            dx, dw, db = kernels.conv2d_backward(x.data, w.data, np.ascontiguousarray(out.grad),
                                                 stride, padding)
            _accum(x, dx, own=True)
            _accum(w, dw, own=True)
            _accum(b, db, own=True)
        out._backward = _bw
    return out


def max_pool2d(x):
    """2x2 max pooling with stride 2."""
    x = _ensure(x)
    if x.data.shape[2] % 2 or x.data.shape[3] % 2:
        raise DimensionError(f"max_pool2d needs even spatial dims, got {x.data.shape}")
    y, idx = kernels.maxpool2_forward(x.data)
    out, rec = _node(y, (x,))
    if rec:
        def _bw():
            _accum(x, kernels.maxpool2_backward(np.ascontiguousarray(out.grad), idx, x.data.shape),
                   own=True)
        out._backward = _bw
    return out


def global_avg_pool(x):
    """Mean over the spatial axes of [B, C, H, W]."""
    return tmean(x, axis=(2, 3))


def bicubic_resize(x, out_h, out_w):
    """Catmull-Rom bicubic resize of the two trailing axes (not differentiable).

    Half-pixel-center coordinates with clamp-to-edge sampling; applied to
    detached teacher maps only, so plain arrays go in and come out.
    """
    if out_h < 1 or out_w < 1:
        raise ConfigurationError(f"bicubic_resize target must be positive, got {out_h}x{out_w}")
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    lead = arr.shape[:-2]
    h, w = arr.shape[-2], arr.shape[-1]
    if out_h == h and out_w == w:
        return arr.copy()
    flat = np.ascontiguousarray(arr.reshape(-1, h, w))
    out = kernels.bicubic_resize_stack(flat, out_h, out_w)
    return out.reshape(lead + (out_h, out_w))


# -- losses -------------------------------------------------------------


def cross_entropy(logits, labels):
    """Mean over the batch of -log softmax(logits)[label]."""
    logits = _ensure(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.data.shape
    if labels.min(initial=0) < 0 or labels.max(initial=-1) >= k:
        raise InputError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    loss = -logp[np.arange(n), labels].mean()
    out, rec = _node(np.asarray(loss, dtype=logits.data.dtype), (logits,))
    if rec:
        def _bw():
            p = np.exp(logp)
            p[np.arange(n), labels] -= 1.0
            _accum(logits, out.grad * p / n, own=True)
        out._backward = _bw
    return out
