"""Pure-numpy implementations of the hot kernels (fallback backend).

Same call signatures and semantics as the compiled _kernels module.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x, w, b):
    win = sliding_window_view(x, (w.shape[2], w.shape[3]), axis=(2, 3))
    y = np.einsum("nchwkl,ockl->nohw", win, w, optimize=True)
    return (y + b[None, :, None, None]).astype(x.dtype, copy=False)


def conv2d_backward(x, w, gy):
    k = w.shape[2]
    win = sliding_window_view(x, (k, k), axis=(2, 3))
    gb = gy.sum(axis=(0, 2, 3))
    gw = np.einsum("nchwkl,nohw->ockl", win, gy, optimize=True)
    pad = k - 1
    gyp = np.pad(gy, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    gwin = sliding_window_view(gyp, (k, k), axis=(2, 3))
    wflip = w[:, :, ::-1, ::-1]
    gx = np.einsum("nohwkl,ockl->nchw", gwin, wflip, optimize=True)
    return (gx.astype(x.dtype, copy=False), gw.astype(x.dtype, copy=False),
            gb.astype(x.dtype, copy=False))


def maxpool2_forward(x):
    n, c, h, w = x.shape
    blocks = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    arg = blocks.argmax(axis=-1).astype(np.int8)  # first max wins ties
    y = np.take_along_axis(blocks, arg[..., None].astype(np.int64), axis=-1)[..., 0]
    return y, arg


def maxpool2_backward(gy, arg, h, w):
    n, c, ho, wo = gy.shape
    gblocks = np.zeros((n, c, ho, wo, 4), dtype=gy.dtype)
    np.put_along_axis(gblocks, arg[..., None].astype(np.int64), gy[..., None], axis=-1)
    return (
        gblocks.reshape(n, c, ho, wo, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h, w)
    )


def split_scan(xs, gs, hs, lam):
    m = xs.shape[0]
    G = gs[:, 0].sum()
    H = hs[:, 0].sum()
    gl = np.cumsum(gs[:-1], axis=0)
    hl = np.cumsum(hs[:-1], axis=0)
    valid = xs[:-1] < xs[1:]
    score = gl * gl / (hl + lam) + (G - gl) ** 2 / (H - hl + lam)
    score = np.where(valid, score, -np.inf)
    if m < 2 or not valid.any():
        return -1e308, -1, 0.0
    # feature-major argmax to match the compiled kernel's tie-break
    flat = int(np.argmax(score.T))
    j, i = divmod(flat, m - 1)
    return float(score[i, j]), int(j), float(0.5 * (xs[i, j] + xs[i + 1, j]))
