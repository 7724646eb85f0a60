"""Compact U-Net: configuration, parameters, forward pass, and backpropagation.

The architecture follows the classic encoder/decoder shape: per level two 3x3
convolutions with ReLU, 2x2 max-pool on the way down, nearest-neighbour
upsampling plus a 3x3 convolution on the way up, skip concatenation, and a
final 1x1 convolution producing one logit per pixel. Dropout sits after the
second convolution of every encoder and decoder block and is active only in
training mode.

Everything is plain numpy. Parameters live in an ordered name -> array dict
so that initialization, checkpointing, and the optimizer all agree on
ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import (
    conv2d,
    conv2d_backward,
    dropout_mask,
    maxpool2,
    maxpool2_backward,
    relu,
    relu_backward,
    upsample2,
    upsample2_backward,
)


@dataclass(frozen=True)
class UNetConfig:
    """Shape of the network. ``input_size`` must be divisible by 2**depth."""

    input_size: int = 128
    depth: int = 3
    base_channels: int = 16
    dropout_rate: float = 0.15
    kernel_size: int = 3
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.input_size % (2**self.depth) != 0:
            raise ValueError(
                f"input_size {self.input_size} not divisible by 2**depth = {2**self.depth}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)


@dataclass
class Weights:
    """Ordered named parameter tensors plus optional ADAM moment state."""

    tensors: dict[str, np.ndarray]
    opt_m: dict[str, np.ndarray] | None = None
    opt_v: dict[str, np.ndarray] | None = None
    step: int = 0

    def copy(self) -> Weights:
        return Weights(
            tensors={k: v.copy() for k, v in self.tensors.items()},
            opt_m=None if self.opt_m is None else {k: v.copy() for k, v in self.opt_m.items()},
            opt_v=None if self.opt_v is None else {k: v.copy() for k, v in self.opt_v.items()},
            step=self.step,
        )


def _level_channels(config: UNetConfig, level: int) -> int:
    return config.base_channels * 2 ** (level - 1)


def tensor_shapes(config: UNetConfig) -> dict[str, tuple[int, ...]]:
    """Canonical tensor names and shapes, in forward-pass order."""
    k = config.kernel_size
    shapes: dict[str, tuple[int, ...]] = {}

    def conv(name: str, c_in: int, c_out: int, ksize: int) -> None:
        shapes[f"{name}/w"] = (c_out, c_in, ksize, ksize)
        shapes[f"{name}/b"] = (c_out,)

    c_prev = 1
    for i in range(1, config.depth + 1):
        c = _level_channels(config, i)
        conv(f"enc{i}/conv1", c_prev, c, k)
        conv(f"enc{i}/conv2", c, c, k)
        c_prev = c
    c_mid = config.base_channels * 2**config.depth
    conv("mid/conv1", c_prev, c_mid, k)
    conv("mid/conv2", c_mid, c_mid, k)
    for i in range(config.depth, 0, -1):
        c_in = config.base_channels * 2**i
        c_half = _level_channels(config, i)
        conv(f"dec{i}/up", c_in, c_half, k)
        conv(f"dec{i}/conv1", c_in, c_half, k)
        conv(f"dec{i}/conv2", c_half, c_half, k)
    conv("out", config.base_channels, 1, 1)
    return shapes


def init(config: UNetConfig, seed: int) -> Weights:
    """He-scaled random kernels, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    dtype = config.np_dtype
    tensors: dict[str, np.ndarray] = {}
    for name, shape in tensor_shapes(config).items():
        if name.endswith("/w"):
            fan_in = int(np.prod(shape[1:]))
            tensors[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape).astype(dtype)
        else:
            tensors[name] = np.zeros(shape, dtype=dtype)
    return Weights(tensors=tensors)


def _as_batch(config: UNetConfig, batch: np.ndarray) -> np.ndarray:
    x = np.asarray(batch, dtype=config.np_dtype)
    if x.ndim == 3:
        x = x[:, None, :, :]
    if x.ndim != 4 or x.shape[1] != 1:
        raise ValueError(f"expected batch shaped (N, H, W) or (N, 1, H, W), got {x.shape}")
    if x.shape[2] != config.input_size or x.shape[3] != config.input_size:
        raise ValueError(
            f"batch spatial dims {x.shape[2]}x{x.shape[3]} do not match "
            f"input_size {config.input_size}"
        )
    return x


def _run(
    weights: Weights,
    config: UNetConfig,
    x: np.ndarray,
    training: bool,
    seed: int,
    keep: bool,
):
    t = weights.tensors
    rate = config.dropout_rate if training else 0.0
    rng = np.random.default_rng(seed) if rate > 0.0 else None
    dtype = config.np_dtype

    def block(cur, name):
        o1, c1 = conv2d(cur, t[f"{name}/conv1/w"], t[f"{name}/conv1/b"], want_cache=keep)
        a1 = relu(o1)
        o2, c2 = conv2d(a1, t[f"{name}/conv2/w"], t[f"{name}/conv2/b"], want_cache=keep)
        a2 = relu(o2)
        return o1, c1, o2, c2, a2

    skips = []
    enc_caches = []
    cur = x
    for i in range(1, config.depth + 1):
        o1, c1, o2, c2, a2 = block(cur, f"enc{i}")
        mask = None
        if rng is not None:
            mask = dropout_mask(rng, a2.shape, rate, dtype)
            a2 = a2 * mask
        skips.append(a2)
        cur, idx = maxpool2(a2)
        if keep:
            enc_caches.append((c1, o1, c2, o2, mask, idx))

    m1, cm1, m2, cm2, cur = block(cur, "mid")

    dec_caches = []
    for i in range(config.depth, 0, -1):
        up = upsample2(cur)
        u1, cu = conv2d(up, t[f"dec{i}/up/w"], t[f"dec{i}/up/b"], want_cache=keep)
        au = relu(u1)
        cat = np.concatenate([au, skips[i - 1]], axis=1)
        o1, cd1 = conv2d(cat, t[f"dec{i}/conv1/w"], t[f"dec{i}/conv1/b"], want_cache=keep)
        a1 = relu(o1)
        o2, cd2 = conv2d(a1, t[f"dec{i}/conv2/w"], t[f"dec{i}/conv2/b"], want_cache=keep)
        cur = relu(o2)
        mask = None
        if rng is not None:
            mask = dropout_mask(rng, cur.shape, rate, dtype)
            cur = cur * mask
        if keep:
            dec_caches.append((cu, u1, cd1, o1, cd2, o2, mask, au.shape[1]))

    logits, cout = conv2d(cur, t["out/w"], t["out/b"], want_cache=keep)
    caches = (enc_caches, (cm1, m1, cm2, m2), dec_caches, cout) if keep else None
    return logits[:, 0, :, :], caches


def forward(
    weights: Weights,
    config: UNetConfig,
    batch: np.ndarray,
    training: bool = False,
    seed: int = 0,
) -> np.ndarray:
    """Per-pixel logits with the same spatial dims as the input batch."""
    x = _as_batch(config, batch)
    logits, _ = _run(weights, config, x, training, seed, keep=False)
    return logits


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def bce_with_logits(logits: np.ndarray, targets: np.ndarray):
    """Pixel-wise binary cross entropy from logits.

    Evaluates max(x, 0) - x*z + log(1 + exp(-|x|)), which matches the
    unstable textbook form x - x*z + log(1 + exp(-x)) for x >= 0 and stays
    finite for arbitrarily negative x. Returns (per-pixel loss, mean loss);
    the mean accumulates in float64.
    """
    x = np.asarray(logits)
    z = np.asarray(targets)
    if x.shape != z.shape:
        raise ValueError(f"shape mismatch: logits {x.shape} vs targets {z.shape}")
    if not np.all((z == 0) | (z == 1)):
        raise ValueError("targets must be binary (0 or 1)")
    per_pixel = np.maximum(x, 0.0) - x * z + np.log1p(np.exp(-np.abs(x)))
    return per_pixel, float(np.mean(per_pixel, dtype=np.float64))


def pixel_accuracy(logits: np.ndarray, targets: np.ndarray) -> float:
    """Fraction of pixels where sigmoid(logit) > 0.5 agrees with the target."""
    x = np.asarray(logits)
    z = np.asarray(targets)
    if x.shape != z.shape:
        raise ValueError(f"shape mismatch: logits {x.shape} vs targets {z.shape}")
    return float(np.mean((x > 0) == (z > 0.5), dtype=np.float64))


def loss_and_grads(
    weights: Weights,
    config: UNetConfig,
    batch: np.ndarray,
    targets: np.ndarray,
    training: bool = False,
    seed: int = 0,
    l2_coeff: float = 0.0,
    loss_scale: float = 1.0,
):
    """One combined forward/backward pass.

    Returns (grads, mean BCE loss, logits). The L2 term ``l2_coeff * w`` is
    added to every kernel gradient (biases are not decayed); the reported
    loss is the plain data loss.
    """
    x = _as_batch(config, batch)
    z = np.asarray(targets, dtype=config.np_dtype)
    if z.ndim == 4 and z.shape[1] == 1:
        z = z[:, 0]
    if z.shape != (x.shape[0], x.shape[2], x.shape[3]):
        raise ValueError(f"targets shape {z.shape} does not match batch {x.shape}")

    logits, caches = _run(weights, config, x, training, seed, keep=True)
    _, mean_loss = bce_with_logits(logits, z)

    n_pix = logits.size
    dlogits = ((sigmoid(logits) - z) * (loss_scale / n_pix)).astype(config.np_dtype)
    dlogits = dlogits[:, None, :, :]

    enc_caches, mid_cache, dec_caches, cout = caches
    t = weights.tensors
    grads: dict[str, np.ndarray] = {}

    g, grads["out/w"], grads["out/b"] = conv2d_backward(dlogits, cout)

    skip_grads: list[np.ndarray | None] = [None] * config.depth
    for i, (cu, u1, cd1, o1, cd2, o2, mask, c_half) in zip(
        range(1, config.depth + 1), reversed(dec_caches)
    ):
        if mask is not None:
            g = g * mask
        g = relu_backward(g, o2)
        g, grads[f"dec{i}/conv2/w"], grads[f"dec{i}/conv2/b"] = conv2d_backward(g, cd2)
        g = relu_backward(g, o1)
        g, grads[f"dec{i}/conv1/w"], grads[f"dec{i}/conv1/b"] = conv2d_backward(g, cd1)
        gu = relu_backward(g[:, :c_half], u1)
        skip_grads[i - 1] = g[:, c_half:]
        gu, grads[f"dec{i}/up/w"], grads[f"dec{i}/up/b"] = conv2d_backward(gu, cu)
        g = upsample2_backward(gu)

    cm1, m1, cm2, m2 = mid_cache
    g = relu_backward(g, m2)
    g, grads["mid/conv2/w"], grads["mid/conv2/b"] = conv2d_backward(g, cm2)
    g = relu_backward(g, m1)
    g, grads["mid/conv1/w"], grads["mid/conv1/b"] = conv2d_backward(g, cm1)

    for i in range(config.depth, 0, -1):
        c1, o1, c2, o2, mask, idx = enc_caches[i - 1]
        g = maxpool2_backward(g, idx)
        g = g + skip_grads[i - 1]
        if mask is not None:
            g = g * mask
        g = relu_backward(g, o2)
        g, grads[f"enc{i}/conv2/w"], grads[f"enc{i}/conv2/b"] = conv2d_backward(g, c2)
        g = relu_backward(g, o1)
        g, grads[f"enc{i}/conv1/w"], grads[f"enc{i}/conv1/b"] = conv2d_backward(g, c1)

    if l2_coeff != 0.0:
        for name, w in t.items():
            if name.endswith("/w"):
                grads[name] = grads[name] + config.np_dtype.type(l2_coeff) * w

    ordered = {name: grads[name] for name in t}
    return ordered, mean_loss, logits


def backward(
    weights: Weights,
    config: UNetConfig,
    batch: np.ndarray,
    targets: np.ndarray,
    training: bool = False,
    seed: int = 0,
    l2_coeff: float = 0.0,
    loss_scale: float = 1.0,
) -> dict[str, np.ndarray]:
    """Gradient of the mean BCE loss w.r.t. every parameter tensor."""
    grads, _, _ = loss_and_grads(
        weights, config, batch, targets,
        training=training, seed=seed, l2_coeff=l2_coeff, loss_scale=loss_scale,
    )
    return grads


def predict_proba(
    weights: Weights,
    config: UNetConfig,
    images: np.ndarray,
    batch_size: int = 8,
) -> np.ndarray:
    """Sigmoid probability maps for a stack of images, batched for memory."""
    images = np.asarray(images)
    out = np.empty(images.shape[:1] + (config.input_size, config.input_size), dtype=np.float64)
    for lo in range(0, images.shape[0], batch_size):
        chunk = images[lo : lo + batch_size]
        out[lo : lo + len(chunk)] = sigmoid(forward(weights, config, chunk))
    return out
