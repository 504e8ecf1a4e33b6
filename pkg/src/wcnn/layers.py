"""Neural network building blocks over the autodiff tape.

Convolution is implemented as cross-correlation (no kernel flip), the usual
CNN convention; learned weights make the orientation immaterial.  The filter
bank in `wavelet` handles its own alignment explicitly.  Padding is zero
padding.  This artifact only needs square 1x1/3x3 kernels and strides 1/2,
and the parameter records enforce that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Variable, record
from .tensor import ShapeError, Tensor


@dataclass
class Conv2dParams:
    """Weights [out_ch, in_ch, k, k], bias [out_ch], integer stride and padding."""

    weight: Variable
    bias: Variable
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        o, c, kh, kw = self.weight.value.shape
        if kh != kw or kh not in (1, 3):
            raise ShapeError(f"conv kernel must be square 1x1 or 3x3, got {kh}x{kw}")
        if self.stride not in (1, 2):
            raise ShapeError(f"conv stride must be 1 or 2, got {self.stride}")
        if self.padding < 0:
            raise ShapeError(f"conv padding must be >= 0, got {self.padding}")
        if self.bias.value.shape != (o,):
            raise ShapeError(f"conv bias shape {self.bias.value.shape} != ({o},)")


@dataclass
class BatchNormParams:
    """Per-channel affine parameters plus running statistics.

    Running statistics use population (biased) variance and are updated by an
    exponential moving average with the given momentum.
    """

    gamma: Variable
    beta: Variable
    running_mean: Tensor = None
    running_var: Tensor = None
    epsilon: float = 1e-5
    momentum: float = 0.1

    def __post_init__(self):
        c = self.gamma.value.shape[0]
        dt = self.gamma.value.dtype
        if self.beta.value.shape != (c,):
            raise ShapeError("batch norm gamma/beta shape mismatch")
        if self.running_mean is None:
            self.running_mean = Tensor(np.zeros(c), dtype=dt)
        if self.running_var is None:
            self.running_var = Tensor(np.ones(c), dtype=dt)
        if self.epsilon <= 0:
            raise ShapeError("batch norm epsilon must be positive")
        if not 0.0 < self.momentum < 1.0:
            raise ShapeError("batch norm momentum must lie in (0, 1)")
        if np.any(self.running_var.data < 0):
            raise ShapeError("batch norm running variance must be non-negative")


def conv2d(x: Variable, p: Conv2dParams) -> Variable:
    """2-D convolution over NCHW input.

    Output extent per axis is floor((in + 2*pad - k)/stride) + 1; with k=3,
    pad=1, stride=1 the spatial shape is preserved, with stride=2 it halves
    (rounding up).
    """
    xd = x.value.data
    if xd.ndim != 4:
        raise ShapeError(f"conv2d expects NCHW input, got rank {xd.ndim}")
    w, b = p.weight, p.bias
    wd, bd = w.value.data, b.value.data
    n, c, h, width = xd.shape
    o, cw, kh, kw = wd.shape
    if c != cw:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, kernel expects {cw}")
    if wd.dtype != xd.dtype:
        raise ShapeError(f"conv2d dtype mismatch: input {x.value.dtype}, weight {w.value.dtype}")
    s, pad = p.stride, p.padding
    ho = (h + 2 * pad - kh) // s + 1
    wo = (width + 2 * pad - kw) // s + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d empty output for input {h}x{width}, k={kh}, pad={pad}")

    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xd
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)
    wmat = wd.reshape(o, c * kh * kw)
    y = (cols @ wmat.T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2) + bd[None, :, None, None]

    hp, wp = xp.shape[2], xp.shape[3]

    def backward_fn(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, o)
        db = g.sum(axis=(0, 2, 3))
        dw = (gmat.T @ cols).reshape(o, c, kh, kw)
        dwin = (gmat @ wmat).reshape(n, ho, wo, c, kh, kw)
        dxp = np.zeros((n, c, hp, wp), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dwin[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        dx = dxp[:, :, pad:pad + h, pad:pad + width] if pad else dxp
        return dx, dw, db

    return record("conv2d", y, (x, w, b), backward_fn)


def average_pool(x: Variable, p: int) -> Variable:
    """Mean over non-overlapping p x p blocks; spatial extents must divide by p."""
    xd = x.value.data
    if xd.ndim != 4:
        raise ShapeError(f"average_pool expects NCHW input, got rank {xd.ndim}")
    if p < 1:
        raise ShapeError(f"pool size must be >= 1, got {p}")
    n, c, h, w = xd.shape
    if h % p or w % p:
        raise ShapeError(f"average_pool extent {h}x{w} not divisible by {p}")
    y = xd.reshape(n, c, h // p, p, w // p, p).mean(axis=(3, 5))

    def backward_fn(g):
        dx = np.repeat(np.repeat(g, p, axis=2), p, axis=3) / (p * p)
        return (dx,)

    return record("average_pool", y, (x,), backward_fn)


def relu(x: Variable) -> Variable:
    xd = x.value.data
    mask = xd > 0
    return record("relu", np.maximum(xd, 0), (x,), lambda g: (g * mask,))


def batch_norm(x: Variable, p: BatchNormParams, mode: str = "train",
               update_stats: bool | None = None) -> Variable:
    """Normalize per channel; batch statistics in train mode, running in eval.

    `update_stats` controls the running-statistics EMA side effect and
    defaults to (mode == "train").  Pass False for pure-function replays such
    as finite-difference probing.
    """
    if mode not in ("train", "eval"):
        raise ShapeError(f"batch_norm mode must be 'train' or 'eval', got {mode!r}")
    xd = x.value.data
    if xd.ndim != 4:
        raise ShapeError(f"batch_norm expects NCHW input, got rank {xd.ndim}")
    gamma, beta = p.gamma, p.beta
    gd, bd = gamma.value.data, beta.value.data
    n, c, h, w = xd.shape
    if gd.shape[0] != c:
        raise ShapeError(f"batch_norm channel mismatch: input {c}, params {gd.shape[0]}")
    if update_stats is None:
        update_stats = mode == "train"

    if mode == "train":
        m = n * h * w
        if m <= 1:
            raise ShapeError("batch_norm train mode needs batch*height*width > 1 per channel")
        mu = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        if update_stats:
            mom = xd.dtype.type(p.momentum)
            p.running_mean = Tensor((1 - mom) * p.running_mean.data + mom * mu)
            p.running_var = Tensor((1 - mom) * p.running_var.data + mom * var)
        inv = 1.0 / np.sqrt(var + xd.dtype.type(p.epsilon))
        xhat = (xd - mu[None, :, None, None]) * inv[None, :, None, None]
        y = gd[None, :, None, None] * xhat + bd[None, :, None, None]

        def backward_fn(g):
            dgamma = (g * xhat).sum(axis=(0, 2, 3))
            dbeta = g.sum(axis=(0, 2, 3))
            dxhat = g * gd[None, :, None, None]
            mean_dxhat = dxhat.mean(axis=(0, 2, 3))
            mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 2, 3))
            dx = inv[None, :, None, None] * (
                dxhat
                - mean_dxhat[None, :, None, None]
                - xhat * mean_dxhat_xhat[None, :, None, None]
            )
            return dx, dgamma, dbeta

        return record("batch_norm", y, (x, gamma, beta), backward_fn)

    rm, rv = p.running_mean.data, p.running_var.data
    inv = 1.0 / np.sqrt(rv + xd.dtype.type(p.epsilon))
    centered = xd - rm[None, :, None, None]
    xhat = centered * inv[None, :, None, None]
    y = gd[None, :, None, None] * xhat + bd[None, :, None, None]

    def backward_eval(g):
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        dx = g * (gd * inv)[None, :, None, None]
        return dx, dgamma, dbeta

    return record("batch_norm", y, (x, gamma, beta), backward_eval)


def global_average_pool(x: Variable) -> Variable:
    """Spatial mean per channel: [N, C, H, W] -> [N, C]."""
    xd = x.value.data
    if xd.ndim != 4:
        raise ShapeError(f"global_average_pool expects NCHW input, got rank {xd.ndim}")
    n, c, h, w = xd.shape
    y = xd.mean(axis=(2, 3))

    def backward_fn(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), xd.shape),)

    return record("global_average_pool", y, (x,), backward_fn)


def fully_connected(x: Variable, weight: Variable, bias: Variable) -> Variable:
    """Affine map [batch, d] @ [d, classes] + [classes]."""
    xd, wd, bd = x.value.data, weight.value.data, bias.value.data
    if xd.ndim != 2 or wd.ndim != 2 or xd.shape[1] != wd.shape[0]:
        raise ShapeError(f"fully_connected shape mismatch: x {xd.shape}, weight {wd.shape}")
    if bd.shape != (wd.shape[1],):
        raise ShapeError(f"fully_connected bias shape {bd.shape} != ({wd.shape[1]},)")
    y = xd @ wd + bd[None, :]

    def backward_fn(g):
        return g @ wd.T, xd.T @ g, g.sum(axis=0)

    return record("fully_connected", y, (x, weight, bias), backward_fn)


def softmax_cross_entropy(logits: Variable, labels) -> Variable:
    """Mean negative log softmax probability of the true class.

    Computed with max-subtraction stabilization; `labels` is an integer array
    of class indices in [0, classes).
    """
    z = logits.value.data
    if z.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects [batch, classes], got {z.shape}")
    labels = np.asarray(labels)
    n, classes = z.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= classes:
        raise ShapeError(f"label out of range [0, {classes})")
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    per_row = lse - shifted[np.arange(n), labels]
    loss = np.asarray(per_row.mean(), dtype=z.dtype)
    probs = np.exp(shifted - lse[:, None])

    def backward_fn(g):
        dz = probs.copy()
        dz[np.arange(n), labels] -= 1
        return (dz * (g.reshape(-1)[0] / n),)

    return record("softmax_cross_entropy", loss, (logits,), backward_fn)


def sigmoid_bce_multilabel(logits: Variable, targets) -> Variable:
    """Mean per-class binary cross-entropy with logit-space stabilization.

    `targets` is a {0,1} array of shape [batch, classes].
    """
    z = logits.value.data
    targets = np.asarray(targets, dtype=z.dtype)
    if targets.shape != z.shape:
        raise ShapeError(f"targets shape {targets.shape} != logits shape {z.shape}")
    # max(z,0) - z*y + log(1 + exp(-|z|)) is bce(sigmoid(z), y) without overflow
    per = np.maximum(z, 0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    loss = np.asarray(per.mean(), dtype=z.dtype)
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))  # sigmoid without exp overflow

    def backward_fn(g):
        return ((sig - targets) * (g.reshape(-1)[0] / z.size),)

    return record("sigmoid_bce_multilabel", loss, (logits,), backward_fn)
