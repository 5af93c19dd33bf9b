"""Numba-jitted convolution/pool kernels.

Same contracts as kernels_numpy. Loops are ordered so every output element
is written by exactly one prange thread: results are bitwise deterministic
regardless of thread count. fastmath stays off for the same reason.

The stride-1/dilation-1 case (most of the network) dispatches to dedicated
kernels with literal index arithmetic: LLVM only vectorizes the inner loop
when the access pattern is provably unit-stride.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True)
def _pad_input(x, pad):
    c, h, w = x.shape
    xp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    xp[:, pad : pad + h, pad : pad + w] = x
    return xp


@njit(parallel=True, cache=True)
def _conv2d_fwd_unit(xp, w, ho, wo):
    kc, c, kk, _ = w.shape
    y = np.zeros((kc, ho, wo), dtype=xp.dtype)
    for k in prange(kc):
        for ci in range(c):
            for i in range(kk):
                for j in range(kk):
                    wv = w[k, ci, i, j]
                    for oh in range(ho):
                        for ow in range(wo):
                            y[k, oh, ow] += wv * xp[ci, oh + i, ow + j]
    return y


@njit(parallel=True, cache=True)
def _conv2d_fwd_any(xp, w, stride, dilation, ho, wo):
    kc, c, kk, _ = w.shape
    y = np.zeros((kc, ho, wo), dtype=xp.dtype)
    for k in prange(kc):
        for ci in range(c):
            for i in range(kk):
                for j in range(kk):
                    wv = w[k, ci, i, j]
                    for oh in range(ho):
                        ih = oh * stride + i * dilation
                        for ow in range(wo):
                            y[k, oh, ow] += wv * xp[ci, ih, ow * stride + j * dilation]
    return y


def conv2d_fwd(x, w, stride=1, pad=0, dilation=1):
    kk = w.shape[2]
    ho = (x.shape[1] + 2 * pad - dilation * (kk - 1) - 1) // stride + 1
    wo = (x.shape[2] + 2 * pad - dilation * (kk - 1) - 1) // stride + 1
    xp = _pad_input(x, pad) if pad else x
    if stride == 1 and dilation == 1:
        return _conv2d_fwd_unit(xp, w, ho, wo)
    return _conv2d_fwd_any(xp, w, stride, dilation, ho, wo)


@njit(parallel=True, cache=True)
def _conv2d_bwd_x_unit(gy, w, c, hp, wp):
    kc, _, kk, _ = w.shape
    ho, wo = gy.shape[1], gy.shape[2]
    gxp = np.zeros((c, hp, wp), dtype=gy.dtype)
    for ci in prange(c):
        for k in range(kc):
            for i in range(kk):
                for j in range(kk):
                    wv = w[k, ci, i, j]
                    for oh in range(ho):
                        for ow in range(wo):
                            gxp[ci, oh + i, ow + j] += wv * gy[k, oh, ow]
    return gxp


@njit(parallel=True, cache=True)
def _conv2d_bwd_x_any(gy, w, c, hp, wp, stride, dilation):
    kc, _, kk, _ = w.shape
    ho, wo = gy.shape[1], gy.shape[2]
    gxp = np.zeros((c, hp, wp), dtype=gy.dtype)
    for ci in prange(c):
        for k in range(kc):
            for i in range(kk):
                for j in range(kk):
                    wv = w[k, ci, i, j]
                    for oh in range(ho):
                        ih = oh * stride + i * dilation
                        for ow in range(wo):
                            gxp[ci, ih, ow * stride + j * dilation] += wv * gy[k, oh, ow]
    return gxp


def conv2d_bwd_x(gy, w, x_shape, stride=1, pad=0, dilation=1):
    c, h, wdt = x_shape
    if stride == 1 and dilation == 1:
        gxp = _conv2d_bwd_x_unit(gy, w, c, h + 2 * pad, wdt + 2 * pad)
    else:
        gxp = _conv2d_bwd_x_any(gy, w, c, h + 2 * pad, wdt + 2 * pad, stride, dilation)
    if pad == 0:
        return gxp
    return np.ascontiguousarray(gxp[:, pad : pad + h, pad : pad + wdt])


@njit(parallel=True, cache=True)
def _conv2d_bwd_w_unit(gy, xp, kc, c, kk):
    # per-column partial sums keep the hot loop elementwise (a plain scalar
    # reduction cannot vectorize without fp reassociation); the final
    # accumulation order is fixed, so results stay deterministic
    ho, wo = gy.shape[1], gy.shape[2]
    gw = np.zeros((kc, c, kk, kk), dtype=gy.dtype)
    for k in prange(kc):
        acc = np.empty(wo, dtype=gy.dtype)
        for ci in range(c):
            for i in range(kk):
                for j in range(kk):
                    for ow in range(wo):
                        acc[ow] = 0.0
                    for oh in range(ho):
                        for ow in range(wo):
                            acc[ow] += gy[k, oh, ow] * xp[ci, oh + i, ow + j]
                    s = 0.0
                    for ow in range(wo):
                        s += acc[ow]
                    gw[k, ci, i, j] = s
    return gw


@njit(parallel=True, cache=True)
def _conv2d_bwd_w_any(gy, xp, kc, c, kk, stride, dilation):
    ho, wo = gy.shape[1], gy.shape[2]
    gw = np.zeros((kc, c, kk, kk), dtype=gy.dtype)
    for k in prange(kc):
        acc = np.empty(wo, dtype=gy.dtype)
        for ci in range(c):
            for i in range(kk):
                for j in range(kk):
                    for ow in range(wo):
                        acc[ow] = 0.0
                    for oh in range(ho):
                        ih = oh * stride + i * dilation
                        for ow in range(wo):
                            acc[ow] += gy[k, oh, ow] * xp[ci, ih, ow * stride + j * dilation]
                    s = 0.0
                    for ow in range(wo):
                        s += acc[ow]
                    gw[k, ci, i, j] = s
    return gw


def conv2d_bwd_w(gy, x, w_shape, stride=1, pad=0, dilation=1):
    xp = _pad_input(x, pad) if pad else x
    if stride == 1 and dilation == 1:
        return _conv2d_bwd_w_unit(gy, xp, w_shape[0], w_shape[1], w_shape[2])
    return _conv2d_bwd_w_any(gy, xp, w_shape[0], w_shape[1], w_shape[2], stride, dilation)


@njit(parallel=True, cache=True)
def _convt2d_fwd(x, w, stride):
    cin, cout, kk, _ = w.shape
    _, h, wdt = x.shape
    y = np.zeros((cout, (h - 1) * stride + kk, (wdt - 1) * stride + kk), dtype=x.dtype)
    for ko in prange(cout):
        for ci in range(cin):
            for i in range(kk):
                for j in range(kk):
                    wv = w[ci, ko, i, j]
                    for ih in range(h):
                        oh = ih * stride + i
                        for iw in range(wdt):
                            y[ko, oh, iw * stride + j] += wv * x[ci, ih, iw]
    return y


def convt2d_fwd(x, w, stride):
    return _convt2d_fwd(x, w, stride)


@njit(parallel=True, cache=True)
def _convt2d_bwd_x(gy, w, stride):
    cin, cout, kk, _ = w.shape
    h = (gy.shape[1] - kk) // stride + 1
    wdt = (gy.shape[2] - kk) // stride + 1
    gx = np.zeros((cin, h, wdt), dtype=gy.dtype)
    for ci in prange(cin):
        for ko in range(cout):
            for i in range(kk):
                for j in range(kk):
                    wv = w[ci, ko, i, j]
                    for ih in range(h):
                        oh = ih * stride + i
                        for iw in range(wdt):
                            gx[ci, ih, iw] += wv * gy[ko, oh, iw * stride + j]
    return gx


def convt2d_bwd_x(gy, w, stride):
    return _convt2d_bwd_x(gy, w, stride)


@njit(parallel=True, cache=True)
def _convt2d_bwd_w(gy, x, cin, cout, kk, stride):
    _, h, wdt = x.shape
    gw = np.zeros((cin, cout, kk, kk), dtype=gy.dtype)
    for ci in prange(cin):
        for ko in range(cout):
            for i in range(kk):
                for j in range(kk):
                    acc = 0.0
                    for ih in range(h):
                        oh = ih * stride + i
                        for iw in range(wdt):
                            acc += x[ci, ih, iw] * gy[ko, oh, iw * stride + j]
                    gw[ci, ko, i, j] = acc
    return gw


def convt2d_bwd_w(gy, x, w_shape, stride):
    return _convt2d_bwd_w(gy, x, w_shape[0], w_shape[1], w_shape[2], stride)


@njit(parallel=True, cache=True)
def _maxpool2_fwd(x):
    c, h, w = x.shape
    ho, wo = h // 2, w // 2
    y = np.empty((c, ho, wo), dtype=x.dtype)
    idx = np.empty((c, ho, wo), dtype=np.uint8)
    for ci in prange(c):
        for oh in range(ho):
            for ow in range(wo):
                best = x[ci, 2 * oh, 2 * ow]
                bi = np.uint8(0)
                for p in range(1, 4):
                    v = x[ci, 2 * oh + (p >> 1), 2 * ow + (p & 1)]
                    if v > best:  # strict: first max wins on ties
                        best = v
                        bi = np.uint8(p)
                y[ci, oh, ow] = best
                idx[ci, oh, ow] = bi
    return y, idx


def maxpool2_fwd(x):
    return _maxpool2_fwd(x)


@njit(parallel=True, cache=True)
def _maxpool2_bwd(gy, idx, c, h, w):
    gx = np.zeros((c, h, w), dtype=gy.dtype)
    ho, wo = gy.shape[1], gy.shape[2]
    for ci in prange(c):
        for oh in range(ho):
            for ow in range(wo):
                p = idx[ci, oh, ow]
                gx[ci, 2 * oh + (p >> 1), 2 * ow + (p & 1)] = gy[ci, oh, ow]
    return gx


def maxpool2_bwd(gy, idx, x_shape):
    return _maxpool2_bwd(gy, idx, x_shape[0], x_shape[1], x_shape[2])


def warmup(dtype=np.float64):
    """Compile every kernel for the given dtype on toy inputs."""
    x = np.ones((2, 8, 8), dtype=dtype)
    w = np.ones((3, 2, 3, 3), dtype=dtype)
    for stride, pad, dil in ((1, 1, 1), (2, 1, 1), (1, 5, 5)):
        y = conv2d_fwd(x, w, stride=stride, pad=pad, dilation=dil)
        conv2d_bwd_x(y, w, x.shape, stride=stride, pad=pad, dilation=dil)
        conv2d_bwd_w(y, x, w.shape, stride=stride, pad=pad, dilation=dil)
    wt = np.ones((2, 3, 2, 2), dtype=dtype)
    yt = convt2d_fwd(x, wt, 2)
    convt2d_bwd_x(yt, wt, 2)
    convt2d_bwd_w(yt, x, wt.shape, 2)
    yp, idx = maxpool2_fwd(x)
    maxpool2_bwd(yp, idx, x.shape)
