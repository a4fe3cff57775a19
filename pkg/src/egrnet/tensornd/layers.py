"""Dense layer zoo with hand-written backward passes.

Everything operates on numpy arrays in batch x channels x height x width
layout (dense inputs are batch x features). Each layer caches what its
backward pass needs during forward; backward returns the input gradient
and accumulates parameter gradients into Parameter.grad.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError


class Parameter:
    """A trainable array with an accumulated gradient of the same shape."""

    def __init__(self, value: np.ndarray, name: str = ""):
        self.value = np.asarray(value)
        self.grad = np.zeros_like(self.value)
        self.name = name

    def zero_grad(self):
        self.grad[...] = 0.0

    @property
    def size(self) -> int:
        return self.value.size


def _same_padding(size: int, k: int, stride: int) -> tuple[int, int]:
    """TF-style 'same': output = ceil(size/stride)."""
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    lo = total // 2
    return lo, total - lo


class Conv2d:
    """2D cross-correlation with stride and {same, valid} padding."""

    def __init__(self, in_channels, out_channels, kernel_size, stride=1,
                 padding="same", rng=None, dtype=np.float64):
        if padding not in ("same", "valid"):
            raise ValueError(f"unknown padding {padding!r}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        rng = rng or np.random.default_rng()
        fan_in = in_channels * kernel_size * kernel_size
        std = np.sqrt(2.0 / fan_in)  # He init, ReLU follows every conv here
        self.weight = Parameter(
            (rng.standard_normal((out_channels, in_channels, kernel_size, kernel_size)) * std).astype(dtype),
            name="weight")
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype), name="bias")
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def _pads(self, h, w):
        k, s = self.kernel_size, self.stride
        if self.padding == "same":
            return _same_padding(h, k, s), _same_padding(w, k, s)
        return (0, 0), (0, 0)

    def output_hw(self, h, w):
        k, s = self.kernel_size, self.stride
        (pt, pb), (pl, pr) = self._pads(h, w)
        return (h + pt + pb - k) // s + 1, (w + pl + pr - k) // s + 1

    def forward(self, x, cache=True):
        # shift-and-gemm: one batched matmul per kernel tap over a strided
        # view of the channels-last padded input; nothing k**2-sized is
        # ever materialized
        if x.ndim != 4:
            raise DimensionError("conv input must be 4D (B,C,H,W)")
        if x.shape[1] != self.in_channels:
            raise DimensionError(
                f"expected {self.in_channels} input channels, got {x.shape[1]}")
        b, c, h, w = x.shape
        k, s = self.kernel_size, self.stride
        (pt, pb), (pl, pr) = self._pads(h, w)
        xp = np.pad(x.transpose(0, 2, 3, 1), ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        oh = (h + pt + pb - k) // s + 1
        ow = (w + pl + pr - k) // s + 1
        # (k, k, C, outC), contiguous so each tap's matmul hits the gemm path
        wt = np.ascontiguousarray(self.weight.value.transpose(2, 3, 1, 0))
        out = np.empty((b, oh, ow, self.out_channels), dtype=xp.dtype)
        out[...] = self.bias.value
        for ki in range(k):
            for kj in range(k):
                xs = xp[:, ki:ki + s * oh:s, kj:kj + s * ow:s, :]
                out += np.matmul(xs, wt[ki, kj])
        if cache:
            self._cache = (xp, x.shape, (oh, ow))
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(self, dout):
        xp, x_shape, (oh, ow) = self._cache
        b, c, h, w = x_shape
        k, s = self.kernel_size, self.stride
        (pt, _), (pl, _) = self._pads(h, w)
        dcl = np.ascontiguousarray(dout.transpose(0, 2, 3, 1))  # (B, oh, ow, outC)
        self.bias.grad += dcl.sum(axis=(0, 1, 2))
        wt = np.ascontiguousarray(self.weight.value.transpose(2, 3, 1, 0))
        dw = np.empty((k, k, c, self.out_channels), dtype=xp.dtype)
        dxp = np.zeros_like(xp)
        for ki in range(k):
            for kj in range(k):
                xs = xp[:, ki:ki + s * oh:s, kj:kj + s * ow:s, :]
                dw[ki, kj] = np.matmul(xs.transpose(0, 1, 3, 2), dcl).sum(axis=(0, 1))
                dxp[:, ki:ki + s * oh:s, kj:kj + s * ow:s, :] += np.matmul(dcl, wt[ki, kj].T)
        self.weight.grad += dw.transpose(3, 2, 0, 1)
        return np.ascontiguousarray(
            dxp[:, pt:pt + h, pl:pl + w, :].transpose(0, 3, 1, 2))


class BatchNorm2d:
    """Per-channel batch normalization over (batch, H, W) with running stats."""

    def __init__(self, channels, momentum=0.9, epsilon=1e-5, dtype=np.float64):
        self.channels = channels
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = Parameter(np.ones(channels, dtype=dtype), name="gamma")
        self.beta = Parameter(np.zeros(channels, dtype=dtype), name="beta")
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._cache = None

    def parameters(self):
        return [self.gamma, self.beta]

    def forward(self, x, training, cache=True):
        if x.ndim != 4:
            raise DimensionError("batchnorm input must be 4D")
        axes = (0, 2, 3)
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - mean[:, None, None]) * inv_std[:, None, None]
        out = self.gamma.value[:, None, None] * xhat + self.beta.value[:, None, None]
        if cache:
            self._cache = (xhat, inv_std, training)
        return out

    def backward(self, dout):
        xhat, inv_std, training = self._cache
        axes = (0, 2, 3)
        self.gamma.grad += (dout * xhat).sum(axis=axes)
        self.beta.grad += dout.sum(axis=axes)
        dxhat = dout * self.gamma.value[:, None, None]
        if not training:
            return dxhat * inv_std[:, None, None]
        m = dout.shape[0] * dout.shape[2] * dout.shape[3]
        s1 = dxhat.sum(axis=axes)[:, None, None]
        s2 = (dxhat * xhat).sum(axis=axes)[:, None, None]
        return inv_std[:, None, None] / m * (m * dxhat - s1 - xhat * s2)


class LayerNorm2d:
    """Zero-mean unit-variance per (sample, channel) plane; no learned affine."""

    def __init__(self, epsilon=1e-5):
        self.epsilon = epsilon
        self._cache = None

    def parameters(self):
        return []

    def forward(self, x, cache=True):
        if x.ndim != 4:
            raise DimensionError("layernorm input must be 4D")
        axes = (2, 3)
        mean = x.mean(axis=axes, keepdims=True)
        var = x.var(axis=axes, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - mean) * inv_std
        if cache:
            self._cache = (xhat, inv_std)
        return xhat

    def backward(self, dout):
        xhat, inv_std = self._cache
        axes = (2, 3)
        mu1 = dout.mean(axis=axes, keepdims=True)
        mu2 = (dout * xhat).mean(axis=axes, keepdims=True)
        return inv_std * (dout - mu1 - xhat * mu2)


class ReLU:
    def parameters(self):
        return []

    def forward(self, x, cache=True):
        mask = x > 0  # subgradient at 0 is 0
        if cache:
            self._cache = mask
        return x * mask

    def backward(self, dout):
        return dout * self._cache


class ChannelGram:
    """Per (sample, channel) plane P (H x W) -> P^T P (W x W)."""

    def parameters(self):
        return []

    def forward(self, x, cache=True):
        if x.ndim != 4:
            raise DimensionError("channel_gram input must be 4D")
        if x.shape[2] != x.shape[3]:
            raise DimensionError(
                f"channel_gram needs square planes, got {x.shape[2]}x{x.shape[3]}")
        out = np.matmul(x.transpose(0, 1, 3, 2), x)
        if cache:
            self._cache = x
        return out

    def backward(self, dout):
        x = self._cache
        u = dout + dout.transpose(0, 1, 3, 2)
        return np.matmul(x, u)


def concat_channels(a, b):
    """Stack along channels, a first."""
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise DimensionError(f"cannot concat shapes {a.shape} and {b.shape}")
    return np.concatenate([a, b], axis=1)


def split_channels(x, first_channels):
    """Inverse of concat_channels; also splits an upstream gradient."""
    return x[:, :first_channels], x[:, first_channels:]


class GlobalAvgPool:
    def parameters(self):
        return []

    def forward(self, x, cache=True):
        if cache:
            self._cache = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dout):
        b, c, h, w = self._cache
        return np.broadcast_to(dout[:, :, None, None], (b, c, h, w)) / (h * w)


class Dense:
    """Affine map (B, in) -> (B, out)."""

    def __init__(self, in_features, out_features, rng=None, dtype=np.float64):
        rng = rng or np.random.default_rng()
        std = np.sqrt(2.0 / in_features)
        self.weight = Parameter((rng.standard_normal((in_features, out_features)) * std).astype(dtype),
                                name="weight")
        self.bias = Parameter(np.zeros(out_features, dtype=dtype), name="bias")
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, cache=True):
        if x.ndim != 2 or x.shape[1] != self.weight.value.shape[0]:
            raise DimensionError(
                f"dense expected (B,{self.weight.value.shape[0]}), got {x.shape}")
        if cache:
            self._cache = x
        return x @ self.weight.value + self.bias.value

    def backward(self, dout):
        x = self._cache
        self.weight.grad += x.T @ dout
        self.bias.grad += dout.sum(axis=0)
        return dout @ self.weight.value.T


def softmax(logits):
    """Row-wise softmax with max subtraction."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, one_hot_targets):
    """Mean cross-entropy and its gradient w.r.t. the logits.

    Returns (loss, probabilities, dlogits) with dlogits = (P - targets)/B.
    """
    t = np.asarray(one_hot_targets)
    if t.shape != logits.shape:
        raise DimensionError(f"targets shape {t.shape} != logits shape {logits.shape}")
    if not (np.all((t == 0) | (t == 1)) and np.all(t.sum(axis=1) == 1)):
        raise ValueError("targets must be one-hot rows")
    p = softmax(logits)
    b = logits.shape[0]
    loss = float(-(t * np.log(np.maximum(p, 1e-300))).sum() / b)
    dlogits = (p - t) / b
    return loss, p, dlogits


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out
