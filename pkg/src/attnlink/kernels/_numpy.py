"""Pure-numpy implementations of the hot kernels.

These are the fallback backend; `attnlink.kernels` picks between this module
and the numba-compiled twin at import time (see ATTNLINK_BACKEND).
"""

import numpy as np

BACKEND_NAME = "numpy"


def _im2col(xp, kh, kw, stride, out_h, out_w):
    b, ci, _, _ = xp.shape
    cols = np.empty((b, ci, kh, kw, out_h, out_w), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride]
    return cols


def conv2d_forward(x, w, b, stride, pad):
    kh, kw = w.shape[2], w.shape[3]
    out_h = (x.shape[2] + 2 * pad - kh) // stride + 1
    out_w = (x.shape[3] + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, kh, kw, stride, out_h, out_w)
    y = np.tensordot(cols, w, axes=([1, 2, 3], [1, 2, 3]))  # (B, Ho, Wo, Co)
    y = np.ascontiguousarray(y.transpose(0, 3, 1, 2))
    y += b[None, :, None, None]
    return y


def conv2d_backward(x, w, dy, stride, pad):
    kh, kw = w.shape[2], w.shape[3]
    out_h, out_w = dy.shape[2], dy.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, kh, kw, stride, out_h, out_w)
    db = dy.sum(axis=(0, 2, 3))
    dw = np.tensordot(dy, cols, axes=([0, 2, 3], [0, 4, 5]))
    dcols = np.tensordot(dy, w, axes=(1, 0))  # (B, Ho, Wo, Ci, kh, kw)
    dxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad:xp.shape[2] - pad, pad:xp.shape[3] - pad] if pad else dxp
    return np.ascontiguousarray(dx), dw, db


def maxpool2_forward(x):
    b, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    win = x.reshape(b, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, 4)
    idx = win.argmax(axis=-1).astype(np.int64)
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool2_backward(dy, idx, in_shape):
    b, c, h, w = in_shape
    ho, wo = h // 2, w // 2
    dwin = np.zeros((b, c, ho, wo, 4), dtype=dy.dtype)
    np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
    dx = dwin.reshape(b, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)
    return np.ascontiguousarray(dx)


def _catrom(d):
    # Catmull-Rom cubic kernel, a = -0.5, evaluated at |distance| d.
    d = np.abs(d)
    w = np.where(d <= 1.0, (1.5 * d - 2.5) * d * d + 1.0,
                 ((-0.5 * d + 2.5) * d - 4.0) * d + 2.0)
    return np.where(d < 2.0, w, 0.0)


def _resize_axis_weights(n_in, n_out, dtype):
    # Half-pixel-center source coordinates, clamped 4-tap support.
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    i0 = np.floor(src).astype(np.int64)
    offsets = np.array([-1, 0, 1, 2], dtype=np.int64)
    idx = np.clip(i0[:, None] + offsets[None, :], 0, n_in - 1)
    wgt = _catrom(src[:, None] - (i0[:, None] + offsets[None, :]).astype(np.float64))
    return idx, wgt.astype(dtype)


def bicubic_resize_stack(x, out_h, out_w):
    """Resize a stack of 2-D maps [K, h, w] -> [K, out_h, out_w] (separable bicubic)."""
    k, h, w = x.shape
    ridx, rwgt = _resize_axis_weights(h, out_h, x.dtype)
    tmp = np.einsum("kotw,ot->kow", x[:, ridx, :], rwgt)
    cidx, cwgt = _resize_axis_weights(w, out_w, x.dtype)
    out = np.einsum("kowt,wt->kow", tmp[:, :, cidx], cwgt)
    return np.ascontiguousarray(out)
