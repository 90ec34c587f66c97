"""Layers with explicit forward/backward passes over numpy arrays.

Activations flow as (batch, channels, H, W) through the conv stack and
(batch, features) after flattening.  Each layer caches what its backward
pass needs; backward returns the gradient w.r.t. the layer input and
stores parameter gradients on the layer.
"""

from __future__ import annotations

import numpy as np

from . import backend


def kaiming_uniform(shape, fan_in, rng, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    frozen = False

    def params(self) -> dict:
        return {}

    def grads(self) -> dict:
        return {}

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, gy):
        raise NotImplementedError


class Conv2d(Layer):
    """Valid-mode cross-correlation with square kernels, stride 1."""

    def __init__(self, in_channels, out_channels, kernel_size, rng, dtype=np.float32):
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = kaiming_uniform(
            (out_channels, in_channels, kernel_size, kernel_size), fan_in, rng, dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.gweight = np.zeros_like(self.weight)
        self.gbias = np.zeros_like(self.bias)
        self._x = None

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def grads(self):
        return {"weight": self.gweight, "bias": self.gbias}

    def forward(self, x, train=False):
        x = np.ascontiguousarray(x)
        self._x = x
        return backend.conv2d_forward(x, self.weight, self.bias)

    def backward(self, gy):
        gx, gw, gb = backend.conv2d_backward(
            self._x, self.weight, np.ascontiguousarray(gy))
        self.gweight = gw
        self.gbias = gb
        return gx


class Linear(Layer):
    def __init__(self, in_features, out_features, rng, dtype=np.float32):
        self.weight = kaiming_uniform((out_features, in_features), in_features, rng, dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self.gweight = np.zeros_like(self.weight)
        self.gbias = np.zeros_like(self.bias)
        self._x = None

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def grads(self):
        return {"weight": self.gweight, "bias": self.gbias}

    def forward(self, x, train=False):
        self._x = x
        return x @ self.weight.T + self.bias

    def backward(self, gy):
        self.gweight = gy.T @ self._x
        self.gbias = gy.sum(axis=0)
        return gy @ self.weight


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, gy):
        return gy * self._mask


class MaxPool2(Layer):
    def forward(self, x, train=False):
        x = np.ascontiguousarray(x)
        self._shape = x.shape
        y, self._arg = backend.maxpool2_forward(x)
        return y

    def backward(self, gy):
        return backend.maxpool2_backward(
            np.ascontiguousarray(gy), self._arg, self._shape[2], self._shape[3])


class Flatten(Layer):
    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gy):
        return gy.reshape(self._shape)


class Dropout(Layer):
    """Element dropout (inverted scaling); identity in eval mode."""

    def __init__(self, p, rng):
        self.p = p
        self.rng = rng
        self._mask = None

    def forward(self, x, train=False):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        keep = (self.rng.random(x.shape) >= self.p).astype(x.dtype)
        self._mask = keep / (1.0 - self.p)
        return x * self._mask

    def backward(self, gy):
        if self._mask is None:
            return gy
        return gy * self._mask


class Dropout2d(Dropout):
    """Channel dropout: whole feature maps are zeroed together."""

    def forward(self, x, train=False):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        keep = (self.rng.random(x.shape[:2]) >= self.p).astype(x.dtype)
        self._mask = keep[:, :, None, None] / (1.0 - self.p)
        return x * self._mask
