"""Pure-numpy convolution/pool kernels (im2col + BLAS).

Fallback path used when numba is unavailable or CMWNET_BACKEND=numpy.
All arrays are CHW, kernels are square, padding is symmetric zero padding.
Weight layouts: conv (K, C, k, k); transposed conv (C_in, C_out, k, k).
"""

import numpy as np


def conv_out_size(size, k, stride, pad, dilation):
    return (size + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def _pad(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad)))


def _cols(xp, k, stride, dilation, ho, wo):
    # strided view (C, k, k, Ho, Wo); never written to
    c = xp.shape[0]
    s0, s1, s2 = xp.strides
    shape = (c, k, k, ho, wo)
    strides = (s0, s1 * dilation, s2 * dilation, s1 * stride, s2 * stride)
    return np.lib.stride_tricks.as_strided(xp, shape, strides)


def conv2d_fwd(x, w, stride=1, pad=0, dilation=1):
    kk = w.shape[2]
    ho = conv_out_size(x.shape[1], kk, stride, pad, dilation)
    wo = conv_out_size(x.shape[2], kk, stride, pad, dilation)
    xp = _pad(x, pad)
    cols = _cols(xp, kk, stride, dilation, ho, wo)
    return np.tensordot(w, cols, axes=([1, 2, 3], [0, 1, 2]))


def conv2d_bwd_x(gy, w, x_shape, stride=1, pad=0, dilation=1):
    kk = w.shape[2]
    _, h, wdt = x_shape
    ho, wo = gy.shape[1], gy.shape[2]
    gxp = np.zeros((x_shape[0], h + 2 * pad, wdt + 2 * pad), dtype=gy.dtype)
    for i in range(kk):
        for j in range(kk):
            contrib = np.tensordot(w[:, :, i, j], gy, axes=(0, 0))
            gxp[:, i * dilation : i * dilation + ho * stride : stride,
                j * dilation : j * dilation + wo * stride : stride] += contrib
    if pad == 0:
        return gxp
    return gxp[:, pad : pad + h, pad : pad + wdt].copy()


def conv2d_bwd_w(gy, x, w_shape, stride=1, pad=0, dilation=1):
    kk = w_shape[2]
    ho, wo = gy.shape[1], gy.shape[2]
    xp = _pad(x, pad)
    cols = _cols(xp, kk, stride, dilation, ho, wo)
    return np.tensordot(gy, cols, axes=([1, 2], [3, 4]))


def convt2d_fwd(x, w, stride):
    cin, cout, kk, _ = w.shape
    _, h, wdt = x.shape
    ho = (h - 1) * stride + kk
    wo = (wdt - 1) * stride + kk
    y = np.zeros((cout, ho, wo), dtype=x.dtype)
    for i in range(kk):
        for j in range(kk):
            y[:, i : i + h * stride : stride, j : j + wdt * stride : stride] += \
                np.tensordot(w[:, :, i, j], x, axes=(0, 0))
    return y


def convt2d_bwd_x(gy, w, stride):
    cin, cout, kk, _ = w.shape
    ho = gy.shape[1]
    h = (ho - kk) // stride + 1
    wdt = (gy.shape[2] - kk) // stride + 1
    gx = np.zeros((cin, h, wdt), dtype=gy.dtype)
    for i in range(kk):
        for j in range(kk):
            gx += np.tensordot(
                w[:, :, i, j],
                gy[:, i : i + h * stride : stride, j : j + wdt * stride : stride],
                axes=(1, 0))
    return gx


def convt2d_bwd_w(gy, x, w_shape, stride):
    kk = w_shape[2]
    _, h, wdt = x.shape
    gw = np.empty(w_shape, dtype=gy.dtype)
    for i in range(kk):
        for j in range(kk):
            gw[:, :, i, j] = np.tensordot(
                x,
                gy[:, i : i + h * stride : stride, j : j + wdt * stride : stride],
                axes=([1, 2], [1, 2]))
    return gw


def maxpool2_fwd(x):
    c, h, w = x.shape
    win = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
    idx = win.argmax(axis=3).astype(np.uint8)  # first max wins on ties
    y = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=3)[..., 0]
    return y, idx


def maxpool2_bwd(gy, idx, x_shape):
    c, h, w = x_shape
    scatter = np.zeros((c, h // 2, w // 2, 4), dtype=gy.dtype)
    np.put_along_axis(scatter, idx[..., None].astype(np.intp), gy[..., None], axis=3)
    return scatter.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h, w)
