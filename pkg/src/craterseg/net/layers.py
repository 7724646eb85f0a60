"""Array-level building blocks for the U-Net: convolution, pooling, upsampling.

All activations use NCHW layout. Convolutions are stride-1 with SAME zero
padding, implemented as im2col + matmul so the heavy lifting happens inside
BLAS. Each forward returns the cache its backward needs.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, want_cache: bool = True):
    """Same-padding convolution. x: (N, C, H, W), w: (O, C, kh, kw), b: (O,)."""
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise ValueError(f"channel mismatch: input has {c}, kernel expects {ci}")
    ph, pw = kh // 2, kw // 2
    if ph or pw:
        xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    else:
        xp = x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    col = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * wd, c * kh * kw)
    out = col @ w.reshape(o, -1).T
    out += b
    out = np.ascontiguousarray(out.reshape(n, h, wd, o).transpose(0, 3, 1, 2))
    cache = (col, w, x.shape) if want_cache else None
    return out, cache


def conv2d_backward(dout: np.ndarray, cache):
    """Gradients of conv2d w.r.t. input, kernel, and bias."""
    col, w, x_shape = cache
    n, c, h, wd = x_shape
    o = w.shape[0]
    dout2 = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(n * h * wd, o)
    dw = (dout2.T @ col).reshape(w.shape)
    db = dout2.sum(axis=0)
    # dx of a stride-1 SAME conv is another SAME conv with the kernel
    # rotated 180 degrees and its channel axes swapped.
    w_flip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    dx, _ = conv2d(dout, w_flip, np.zeros(c, dtype=dout.dtype), want_cache=False)
    return dx, dw, db


def maxpool2(x: np.ndarray):
    """2x2 max pooling with stride 2; returns output and flat argmax indices."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"spatial dims must be even for 2x2 pooling, got {h}x{w}")
    v = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    v = np.ascontiguousarray(v).reshape(n, c, h // 2, w // 2, 4)
    idx = v.argmax(axis=-1)
    out = np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2_backward(dout: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Route pooled gradients back to the (first) max of each 2x2 window."""
    n, c, h2, w2 = dout.shape
    dv = np.zeros((n, c, h2, w2, 4), dtype=dout.dtype)
    np.put_along_axis(dv, idx[..., None], dout[..., None], axis=-1)
    dx = dv.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(dx).reshape(n, c, h2 * 2, w2 * 2)


def upsample2(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour 2x upsampling."""
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2_backward(dout: np.ndarray) -> np.ndarray:
    """Sum gradients over each 2x2 block."""
    n, c, h, w = dout.shape
    return dout.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dout * (x > 0)


def dropout_mask(rng: np.random.Generator, shape, rate: float, dtype) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability ``rate``, else 1/(1-rate)."""
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / dtype.type(1.0 - rate)
