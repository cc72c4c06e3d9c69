"""Numba-compiled implementations of the hot kernels.

Loop nests mirror the pure-numpy backend in `_numba`'s sibling `_numpy`;
fastmath is left off so reductions stay deterministic.
"""

import numpy as np
from numba import njit, prange

BACKEND_NAME = "numba"


@njit(cache=True, parallel=True)
def _conv2d_forward(x, w, b, stride, pad, y):
    bs, ci, h, ww = x.shape
    co, _, kh, kw = w.shape
    out_h, out_w = y.shape[2], y.shape[3]
    for n in prange(bs):
        for oc in range(co):
            for oy in range(out_h):
                for ox in range(out_w):
                    acc = b[oc]
                    for ic in range(ci):
                        for i in range(kh):
                            iy = oy * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for j in range(kw):
                                ix = ox * stride + j - pad
                                if ix < 0 or ix >= ww:
                                    continue
                                acc += x[n, ic, iy, ix] * w[oc, ic, i, j]
                    y[n, oc, oy, ox] = acc


def conv2d_forward(x, w, b, stride, pad):
    kh, kw = w.shape[2], w.shape[3]
    out_h = (x.shape[2] + 2 * pad - kh) // stride + 1
    out_w = (x.shape[3] + 2 * pad - kw) // stride + 1
    y = np.empty((x.shape[0], w.shape[0], out_h, out_w), dtype=x.dtype)
    _conv2d_forward(x, w, b, stride, pad, y)
    return y


@njit(cache=True, parallel=True)
def _conv2d_backward_x(w, dy, stride, pad, dx):
    bs, ci, h, ww = dx.shape
    co, _, kh, kw = w.shape
    out_h, out_w = dy.shape[2], dy.shape[3]
    for n in prange(bs):
        for ic in range(ci):
            for iy in range(h):
                for ix in range(ww):
                    acc = 0.0
                    for oc in range(co):
                        for i in range(kh):
                            oy_num = iy + pad - i
                            if oy_num < 0 or oy_num % stride != 0:
                                continue
                            oy = oy_num // stride
                            if oy >= out_h:
                                continue
                            for j in range(kw):
                                ox_num = ix + pad - j
                                if ox_num < 0 or ox_num % stride != 0:
                                    continue
                                ox = ox_num // stride
                                if ox >= out_w:
                                    continue
                                acc += dy[n, oc, oy, ox] * w[oc, ic, i, j]
                    dx[n, ic, iy, ix] = acc


@njit(cache=True, parallel=True)
def _conv2d_backward_w(x, dy, stride, pad, dw):
    bs, ci, h, ww = x.shape
    co = dy.shape[1]
    kh, kw = dw.shape[2], dw.shape[3]
    out_h, out_w = dy.shape[2], dy.shape[3]
    for oc in prange(co):
        for ic in range(ci):
            for i in range(kh):
                for j in range(kw):
                    acc = 0.0
                    for n in range(bs):
                        for oy in range(out_h):
                            iy = oy * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for ox in range(out_w):
                                ix = ox * stride + j - pad
                                if ix < 0 or ix >= ww:
                                    continue
                                acc += dy[n, oc, oy, ox] * x[n, ic, iy, ix]
                    dw[oc, ic, i, j] = acc


def conv2d_backward(x, w, dy, stride, pad):
    dx = np.empty_like(x)
    dw = np.empty_like(w)
    _conv2d_backward_x(w, dy, stride, pad, dx)
    _conv2d_backward_w(x, dy, stride, pad, dw)
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db


@njit(cache=True, parallel=True)
def _maxpool2_forward(x, y, idx):
    bs, c, ho, wo = y.shape
    for n in prange(bs):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    best = x[n, ch, 2 * oy, 2 * ox]
                    besti = 0
                    k = 0
                    for i in range(2):
                        for j in range(2):
                            v = x[n, ch, 2 * oy + i, 2 * ox + j]
                            if v > best:
                                best = v
                                besti = k
                            k += 1
                    y[n, ch, oy, ox] = best
                    idx[n, ch, oy, ox] = besti


def maxpool2_forward(x):
    b, c, h, w = x.shape
    y = np.empty((b, c, h // 2, w // 2), dtype=x.dtype)
    idx = np.empty((b, c, h // 2, w // 2), dtype=np.int64)
    _maxpool2_forward(x, y, idx)
    return y, idx


@njit(cache=True, parallel=True)
def _maxpool2_backward(dy, idx, dx):
    bs, c, ho, wo = dy.shape
    for n in prange(bs):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    k = idx[n, ch, oy, ox]
                    dx[n, ch, 2 * oy + k // 2, 2 * ox + k % 2] = dy[n, ch, oy, ox]


def maxpool2_backward(dy, idx, in_shape):
    dx = np.zeros(in_shape, dtype=dy.dtype)
    _maxpool2_backward(dy, idx, dx)
    return dx


@njit(cache=True)
def _catrom1(d):
    if d < 0.0:
        d = -d
    if d <= 1.0:
        return (1.5 * d - 2.5) * d * d + 1.0
    if d < 2.0:
        return ((-0.5 * d + 2.5) * d - 4.0) * d + 2.0
    return 0.0


@njit(cache=True, parallel=True)
def _bicubic_resize_stack(x, out):
    k, h, w = x.shape
    out_h, out_w = out.shape[1], out.shape[2]
    sy = h / out_h
    sx = w / out_w
    for m in prange(k):
        for oy in range(out_h):
            srcy = (oy + 0.5) * sy - 0.5
            y0 = int(np.floor(srcy))
            for ox in range(out_w):
                srcx = (ox + 0.5) * sx - 0.5
                x0 = int(np.floor(srcx))
                acc = 0.0
                for i in range(-1, 3):
                    iy = y0 + i
                    if iy < 0:
                        iy = 0
                    elif iy > h - 1:
                        iy = h - 1
                    wy = _catrom1(srcy - (y0 + i))
                    if wy == 0.0:
                        continue
                    row = 0.0
                    for j in range(-1, 3):
                        ix = x0 + j
                        if ix < 0:
                            ix = 0
                        elif ix > w - 1:
                            ix = w - 1
                        row += _catrom1(srcx - (x0 + j)) * x[m, iy, ix]
                    acc += wy * row
                out[m, oy, ox] = acc


def bicubic_resize_stack(x, out_h, out_w):
    """Resize a stack of 2-D maps [K, h, w] -> [K, out_h, out_w] (direct 4x4 taps)."""
    out = np.empty((x.shape[0], out_h, out_w), dtype=x.dtype)
    _bicubic_resize_stack(x, out)
    return out
