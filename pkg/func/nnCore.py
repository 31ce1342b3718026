"""Dense NCHW tensor layers with hand-written backward passes, and Adam.

The layer set is closed: same-padded convolution, 2x2 max pooling, nearest 2x
upsampling, channel concatenation, ReLU and sigmoid. Each layer object caches
what its backward pass needs during forward, so one instance serves one
forward/backward pair at a time.
"""

import logging
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

##Set PISTRESS_DEBUG=1 to check every activation for NaN/inf
DEBUG_CHECKS = os.getenv("PISTRESS_DEBUG") == "1"


def _guard(name, values):
    if DEBUG_CHECKS and not np.all(np.isfinite(values)):
        raise FloatingPointError(f"non-finite values after {name}")
    return values


@dataclass
class LayerParams:
    kernels: np.ndarray
    biases: np.ndarray
    gradKernels: np.ndarray = None
    gradBiases: np.ndarray = None
    mKernels: np.ndarray = None
    vKernels: np.ndarray = None
    mBiases: np.ndarray = None
    vBiases: np.ndarray = None
    step: int = 0

    def __post_init__(self):
        for name, like in (("gradKernels", self.kernels), ("mKernels", self.kernels), ("vKernels", self.kernels),
                           ("gradBiases", self.biases), ("mBiases", self.biases), ("vBiases", self.biases)):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros_like(like))

    @classmethod
    def heNormal(cls, outChannels, inChannels, kernelSize, rng, dtype=np.float32):
        fanIn = inChannels * kernelSize * kernelSize
        kernels = rng.normal(0.0, np.sqrt(2.0 / fanIn), size=(outChannels, inChannels, kernelSize, kernelSize))
        return cls(kernels.astype(dtype), np.zeros(outChannels, dtype=dtype))

    @property
    def count(self):
        return self.kernels.size + self.biases.size

    def zeroGrad(self):
        self.gradKernels[...] = 0
        self.gradBiases[...] = 0

    def astype(self, dtype):
        return LayerParams(self.kernels.astype(dtype), self.biases.astype(dtype), step=self.step)


# ----------------------------------
# Layers
# ----------------------------------
class Conv2d:
    """Stride-1 cross-correlation with zero 'same' padding and an odd square kernel."""

    def __init__(self, params):
        if params.kernels.shape[2] != params.kernels.shape[3] or params.kernels.shape[2] % 2 == 0:
            raise ValueError(f"kernels must be odd and square, got {params.kernels.shape[2:]}")
        self.params = params
        self._cache = None

    @property
    def inChannels(self):
        return self.params.kernels.shape[1]

    @property
    def outChannels(self):
        return self.params.kernels.shape[0]

    def forward(self, x):
        kernels = self.params.kernels
        if x.ndim != 4 or x.shape[1] != kernels.shape[1]:
            raise ValueError(f"conv expects {kernels.shape[1]} input channels, got input {x.shape}")
        k = kernels.shape[2]
        pad = k // 2
        batch, _, height, width = x.shape
        padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        out = np.empty((batch, kernels.shape[0], height, width), dtype=np.result_type(x, kernels))
        out[...] = self.params.biases[None, :, None, None]
        for dy in range(k):
            for dx in range(k):
                window = padded[:, :, dy:dy + height, dx:dx + width]
                out += np.tensordot(window, kernels[:, :, dy, dx], axes=([1], [1])).transpose(0, 3, 1, 2)
        self._cache = padded
        return _guard("conv2d", out)

    def backward(self, dout):
        padded = self._cache
        kernels = self.params.kernels
        k = kernels.shape[2]
        pad = k // 2
        height, width = dout.shape[2], dout.shape[3]
        dpadded = np.zeros_like(padded, dtype=np.result_type(dout, kernels))
        for dy in range(k):
            for dx in range(k):
                window = padded[:, :, dy:dy + height, dx:dx + width]
                self.params.gradKernels[:, :, dy, dx] += np.tensordot(dout, window, axes=([0, 2, 3], [0, 2, 3]))
                dpadded[:, :, dy:dy + height, dx:dx + width] += np.tensordot(
                    dout, kernels[:, :, dy, dx], axes=([1], [0])
                ).transpose(0, 3, 1, 2)
        self.params.gradBiases += dout.sum(axis=(0, 2, 3))
        return dpadded[:, :, pad:pad + height, pad:pad + width]


class MaxPool2x2:
    """2x2 stride-2 max pooling; ties go to the first entry in row-major order."""

    def __init__(self):
        self._cache = None

    def forward(self, x):
        batch, channels, height, width = x.shape
        if height % 2 or width % 2:
            raise ValueError(f"max pooling needs even spatial dims, got {height}x{width}")
        windows = (
            x.reshape(batch, channels, height // 2, 2, width // 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(batch, channels, height // 2, width // 2, 4)
        )
        argmax = windows.argmax(axis=-1)
        self._cache = (x.shape, argmax)
        return np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        shape, argmax = self._cache
        batch, channels, height, width = shape
        dwindows = np.zeros(dout.shape + (4,), dtype=dout.dtype)
        np.put_along_axis(dwindows, argmax[..., None], dout[..., None], axis=-1)
        return (
            dwindows.reshape(batch, channels, height // 2, width // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(shape)
        )


class Upsample2x:
    """Nearest-neighbour 2x upsampling."""

    def forward(self, x):
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, dout):
        batch, channels, height, width = dout.shape
        if height % 2 or width % 2:
            raise ValueError(f"upsample gradient needs even dims, got {height}x{width}")
        return dout.reshape(batch, channels, height // 2, 2, width // 2, 2).sum(axis=(3, 5))


class ReLU:
    def __init__(self):
        self._cache = None

    def forward(self, x):
        self._cache = x > 0
        return np.where(self._cache, x, 0).astype(x.dtype, copy=False)

    def backward(self, dout):
        return np.where(self._cache, dout, 0).astype(dout.dtype, copy=False)


class Sigmoid:
    def __init__(self):
        self._cache = None

    def forward(self, x):
        self._cache = expit(x)
        return self._cache

    def backward(self, dout):
        s = self._cache
        return dout * s * (1.0 - s)


def concatChannels(tensors):
    ##returns the output and the split sizes for splitChannels
    shapes = {(t.shape[0],) + t.shape[2:] for t in tensors}
    if len(shapes) != 1:
        raise ValueError(f"cannot concatenate tensors of shapes {[t.shape for t in tensors]}")
    return np.concatenate(tensors, axis=1), [t.shape[1] for t in tensors]


def splitChannels(dout, sizes):
    if sum(sizes) != dout.shape[1]:
        raise ValueError(f"split sizes {sizes} do not add up to {dout.shape[1]} channels")
    return np.split(dout, np.cumsum(sizes)[:-1], axis=1)


# ----------------------------------
# Optimizer
# ----------------------------------
def adamStep(params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update of one layer; gradients are zeroed afterwards."""
    params.step += 1
    correction1 = 1.0 - beta1**params.step
    correction2 = 1.0 - beta2**params.step
    for value, grad, m, v in (
        (params.kernels, params.gradKernels, params.mKernels, params.vKernels),
        (params.biases, params.gradBiases, params.mBiases, params.vBiases),
    ):
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * (grad * grad)
        value -= (lr / correction1) * m / (np.sqrt(v / correction2) + eps)
    params.zeroGrad()


# ----------------------------------
# Gradient checking
# ----------------------------------
def gradientCheck(f, x, analytic, rng, coordinates=100, step=1e-4, skip=None):
    """Largest relative error between analytic and central-difference gradients.

    f maps x (modified in place, float64) to a scalar; skip(index) may exclude
    coordinates such as max-pool ties.
    """
    flat = x.reshape(-1)
    grad = np.asarray(analytic).reshape(-1)
    picks = rng.choice(flat.size, size=min(coordinates, flat.size), replace=False)
    worst = 0.0
    for index in picks:
        if skip is not None and skip(index):
            continue
        saved = flat[index]
        flat[index] = saved + step
        plus = f(x)
        flat[index] = saved - step
        minus = f(x)
        flat[index] = saved
        numeric = (plus - minus) / (2.0 * step)
        scale = max(abs(numeric), abs(grad[index]), 1e-8)
        worst = max(worst, abs(numeric - grad[index]) / scale)
    logging.debug(f"Gradient check over {len(picks)} coordinates: worst relative error {worst:.3e}")
    return worst
