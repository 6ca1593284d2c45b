"""
Neural-network operations for faultsynth
----------------------------------------
Convolution, pooling, normalization, activations, dropout, affine maps and
the losses every network in the project is trained with. Signal tensors are
laid out [N, C, L]; a 2-D [C, L] input is treated as a batch of one.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.errors import ConfigurationError, DataError
from src.tensor import Tensor, as_tensor

BATCHNORM_EPS = 1e-5
BATCHNORM_MOMENTUM = 0.1
LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class ConvLayerSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: int = 0
    has_bias: bool = True

    def __post_init__(self):
        if self.kernel_size < 1 or self.stride < 1:
            raise ConfigurationError(f"kernel_size and stride must be >= 1: {self}")
        if self.padding < 0 or self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError(f"invalid conv spec: {self}")

    def output_length(self, length):
        """L_out of the forward convolution over an input of `length`."""
        out = (length + 2 * self.padding - self.kernel_size) // self.stride + 1
        if out < 1:
            raise ConfigurationError(f"conv output length {out} < 1 for input length {length}")
        return out

    def transposed_length(self, length):
        return (length - 1) * self.stride - 2 * self.padding + self.kernel_size


def _batched(x):
    x = as_tensor(x)
    if x.ndim == 2:
        return x.reshape(1, *x.shape), True
    if x.ndim != 3:
        raise ConfigurationError(f"expected [N, C, L] or [C, L], got {x.shape}")
    return x, False


def _windows(x, kernel_size, stride, padding):
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else x
    return sliding_window_view(xp, kernel_size, axis=2)[:, :, ::stride, :]


def _conv_forward(x, w, stride, padding):
    cols = _windows(x, w.shape[2], stride, padding)
    return np.tensordot(cols, w, axes=([1, 3], [1, 2])).transpose(0, 2, 1)


def _conv_backward_weight(x, g, kernel_size, stride, padding):
    cols = _windows(x, kernel_size, stride, padding)
    return np.tensordot(g, cols, axes=([0, 2], [0, 2]))


def _conv_backward_data(g, w, stride, padding, length):
    n, _, out_len = g.shape
    kernel_size = w.shape[2]
    gcols = np.tensordot(g, w, axes=([1], [0]))
    gxp = np.zeros((n, w.shape[1], length + 2 * padding), dtype=g.dtype)
    span = stride * (out_len - 1) + 1
    for k in range(kernel_size):
        gxp[:, :, k:k + span:stride] += gcols[:, :, :, k].transpose(0, 2, 1)
    return gxp[:, :, padding:padding + length]


def conv1d(x, spec, weight, bias=None):
    """
    1-D cross-correlation.

    out[n, o, t] = bias[o] + sum_{c,k} x[n, c, t*stride + k - padding] * weight[o, c, k]
    """
    x, squeeze = _batched(x)
    weight = as_tensor(weight, like=x)
    expected = (spec.out_channels, spec.in_channels, spec.kernel_size)
    if weight.shape != expected:
        raise ConfigurationError(f"conv1d weight shape {weight.shape} != {expected}")
    if x.shape[1] != spec.in_channels:
        raise ConfigurationError(f"conv1d expects {spec.in_channels} channels, got {x.shape[1]}")
    length = x.shape[2]
    spec.output_length(length)
    parents = [x, weight]
    data = _conv_forward(x.data, weight.data, spec.stride, spec.padding)
    if bias is not None:
        bias = as_tensor(bias, like=x)
        data = data + bias.data[None, :, None]
        parents.append(bias)

    def backward(g):
        grads = [_conv_backward_data(g, weight.data, spec.stride, spec.padding, length),
                 _conv_backward_weight(x.data, g, spec.kernel_size, spec.stride, spec.padding)]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return grads

    out = Tensor._result(data, parents, backward, "conv1d")
    return out.reshape(out.shape[1:]) if squeeze else out


def conv_transpose1d(x, spec, weight, bias=None, output_size=None):
    """
    Transposed 1-D convolution, the adjoint of conv1d in its input.

    `weight` has shape [in_channels, out_channels, K]: the same array
    conv1d would use to map out_channels back to in_channels.
    """
    x, squeeze = _batched(x)
    weight = as_tensor(weight, like=x)
    expected = (spec.in_channels, spec.out_channels, spec.kernel_size)
    if weight.shape != expected:
        raise ConfigurationError(f"conv_transpose1d weight shape {weight.shape} != {expected}")
    if x.shape[1] != spec.in_channels:
        raise ConfigurationError(f"conv_transpose1d expects {spec.in_channels} channels, got {x.shape[1]}")
    length = spec.transposed_length(x.shape[2])
    if output_size is not None:
        if not length <= output_size < length + spec.stride:
            raise ConfigurationError(f"output_size {output_size} unreachable from length {x.shape[2]}")
        length = output_size
    if length < 1:
        raise ConfigurationError(f"conv_transpose1d output length {length} < 1")
    parents = [x, weight]
    data = _conv_backward_data(x.data, weight.data, spec.stride, spec.padding, length)
    if bias is not None:
        bias = as_tensor(bias, like=x)
        data = data + bias.data[None, :, None]
        parents.append(bias)

    def backward(g):
        grads = [_conv_forward(g, weight.data, spec.stride, spec.padding),
                 _conv_backward_weight(g, x.data, spec.kernel_size, spec.stride, spec.padding)]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return grads

    out = Tensor._result(data, parents, backward, "conv_transpose1d")
    return out.reshape(out.shape[1:]) if squeeze else out


def maxpool1d(x, window, stride=None):
    """Max over sliding windows; ties route the gradient to the first index."""
    stride = window if stride is None else stride
    if window < 1 or stride < 1:
        raise ConfigurationError("maxpool window and stride must be >= 1")
    x, squeeze = _batched(x)
    if window > x.shape[2]:
        raise ConfigurationError(f"maxpool window {window} exceeds length {x.shape[2]}")
    cols = _windows(x.data, window, stride, 0)
    arg = cols.argmax(axis=3)
    data = np.take_along_axis(cols, arg[..., None], axis=3)[..., 0]
    out_len = data.shape[2]

    def backward(g):
        gx = np.zeros_like(x.data)
        span = stride * (out_len - 1) + 1
        for k in range(window):
            gx[:, :, k:k + span:stride] += np.where(arg == k, g, 0)
        return (gx,)

    out = Tensor._result(data, (x,), backward, "maxpool1d")
    return out.reshape(out.shape[1:]) if squeeze else out


def upsample1d(x, factor):
    """Nearest-neighbour upsampling along the length axis."""
    x, squeeze = _batched(x)

    def backward(g):
        n, c, length = g.shape
        return (g.reshape(n, c, length // factor, factor).sum(axis=3),)

    out = Tensor._result(np.repeat(x.data, factor, axis=2), (x,), backward, "upsample1d")
    return out.reshape(out.shape[1:]) if squeeze else out


def batchnorm1d(x, gamma, beta, running_mean, running_var, training,
                momentum=BATCHNORM_MOMENTUM, eps=BATCHNORM_EPS, update_stats=True):
    """
    Per-channel batch normalization of [N, C, L] (or [N, C]) input.

    In training mode the batch statistics normalize the input and the
    running statistics (numpy arrays, updated in place) move toward them by
    `momentum`, unless `update_stats` is false. In inference mode the
    running statistics are used.
    """
    x = as_tensor(x)
    gamma = as_tensor(gamma, like=x)
    beta = as_tensor(beta, like=x)
    axes = (0, 2) if x.ndim == 3 else (0,)
    shape = (1, -1, 1) if x.ndim == 3 else (1, -1)
    count = x.size // x.shape[1]

    if training:
        if count < 2:
            raise DataError(f"batchnorm in training mode needs N*L >= 2, got {count}")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if update_stats:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean
            running_var *= 1.0 - momentum
            running_var += momentum * var * count / (count - 1)
    else:
        mean, var = running_mean, running_var

    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mean.reshape(shape)) * inv_std.reshape(shape)
    data = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)

    def backward(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(shape)
        if training:
            dx = (inv_std.reshape(shape) / count) * (
                count * dxhat
                - dxhat.sum(axis=axes).reshape(shape)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(shape))
        else:
            dx = dxhat * inv_std.reshape(shape)
        return dx, dgamma, dbeta

    return Tensor._result(data.astype(x.dtype), (x, gamma, beta), backward, "batchnorm1d")


# Activations ---------------------------------------------------------------

def relu(x):
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return Tensor._result(np.where(mask, x.data, 0).astype(x.dtype), (x,), backward, "relu")


def leaky_relu(x, slope=LEAKY_SLOPE):
    x = as_tensor(x)
    scale = np.where(x.data > 0, 1.0, slope).astype(x.dtype)

    def backward(g):
        return (g * scale,)

    return Tensor._result(x.data * scale, (x,), backward, "leaky_relu")


def _stable_sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(z.dtype)


def sigmoid(x):
    x = as_tensor(x)
    out = _stable_sigmoid(x.data)

    def backward(g):
        return (g * out * (1.0 - out),)

    return Tensor._result(out, (x,), backward, "sigmoid")


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return Tensor._result(out, (x,), backward, "tanh")


def softmax(x, axis=-1):
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._result(out, (x,), backward, "softmax")


def dropout(x, p, training, rng):
    """Inverted dropout: survivors are scaled by 1/(1-p); identity outside training."""
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"dropout probability must lie in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)

    def backward(g):
        return (g * mask,)

    return Tensor._result(x.data * mask, (x,), backward, "dropout")


def dense(x, weight, bias=None):
    """Affine map [N, F_in] @ [F_in, F_out] + [F_out]."""
    x = as_tensor(x)
    weight = as_tensor(weight, like=x)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ConfigurationError(f"dense shape mismatch: {x.shape} @ {weight.shape}")
    out = x @ weight
    if bias is not None:
        bias = as_tensor(bias, like=x)
        if bias.shape != (weight.shape[1],):
            raise ConfigurationError(f"dense bias shape {bias.shape} != ({weight.shape[1]},)")
        out = out + bias
    return out


def flatten(x):
    x = as_tensor(x)
    return x.reshape(x.shape[0], -1)


# Losses ----------------------------------------------------------------------

def sigmoid_cross_entropy(logits, targets):
    """
    Mean over elements of max(z, 0) - z*y + log(1 + exp(-|z|)).

    `targets` may be a scalar, an array or a Tensor; gradients flow to the
    logits only.
    """
    logits = as_tensor(logits)
    y = np.broadcast_to(np.asarray(targets.data if isinstance(targets, Tensor) else targets,
                                   dtype=logits.dtype), logits.shape)
    z = logits.data
    loss = np.mean(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z))))

    def backward(g):
        return (g * (_stable_sigmoid(z) - y) / z.size,)

    return Tensor._result(np.asarray(loss, dtype=logits.dtype), (logits,), backward,
                          "sigmoid_cross_entropy")


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer `labels` under softmax(logits)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n, classes = logits.shape
    if labels.shape != (n,):
        raise ConfigurationError(f"labels shape {labels.shape} != ({n},)")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DataError(f"labels must lie in [0, {classes})")
    z = logits.data
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    nll = log_norm - shifted[np.arange(n), labels]
    loss = nll.mean()

    def backward(g):
        probs = np.exp(shifted - log_norm[:, None])
        probs[np.arange(n), labels] -= 1.0
        return (g * probs / n,)

    return Tensor._result(np.asarray(loss, dtype=logits.dtype), (logits,), backward,
                          "softmax_cross_entropy")


def mean_absolute_error(a, b):
    return (as_tensor(a) - b).abs().mean()
