"""
Layers for faultsynth
---------------------
Parameterised building blocks on top of src.ops: a small Module base with
named parameters and buffers, the convolution/normalization/dense layers,
the LSTM layer and a Sequential container.
"""

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from src import ops
from src.errors import ConfigurationError
from src.tensor import Tensor, as_tensor, concat, default_dtype, stack

INIT_STD = 0.02


def normal_init(rng, shape, mean=0.0, std=INIT_STD, name=None):
    data = rng.normal(mean, std, size=shape).astype(default_dtype())
    return Tensor(data, requires_grad=True, name=name)


def zeros_init(shape, name=None):
    return Tensor(np.zeros(shape, dtype=default_dtype()), requires_grad=True, name=name)


class Module:
    """
    Base class for layers and networks.

    Sub-modules, parameters and buffers are discovered from attributes, in
    assignment order, so parameter names are stable across runs.
    """

    def __init__(self):
        self.training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def _own_parameters(self):
        return {name: value for name, value in vars(self).items()
                if isinstance(value, Tensor) and value.requires_grad}

    def _own_buffers(self):
        return {name: value for name, value in vars(self).items()
                if name.startswith("running_") and isinstance(value, np.ndarray)}

    def parameters(self, prefix=""):
        """Ordered mapping of dotted names to parameter Tensors."""
        params = {}
        for name, value in self._own_parameters().items():
            value.name = prefix + name
            params[prefix + name] = value
        for name, child in self.children():
            params.update(child.parameters(prefix + name + "."))
        return params

    def buffers(self, prefix=""):
        found = {prefix + name: value for name, value in self._own_buffers().items()}
        for name, child in self.children():
            found.update(child.buffers(prefix + name + "."))
        return found

    def modules(self):
        yield self
        for _, child in self.children():
            yield from child.modules()

    def train(self, mode=True):
        for module in self.modules():
            module.training = mode
        return self

    def eval(self):
        return self.train(False)

    @contextmanager
    def frozen_statistics(self):
        """Batch statistics still normalize, running statistics stay put."""
        norms = [m for m in self.modules() if isinstance(m, BatchNorm1d)]
        for norm in norms:
            norm.update_stats = False
        try:
            yield self
        finally:
            for norm in norms:
                norm.update_stats = True

    def parameter_count(self):
        return sum(p.size for p in self.parameters().values())

    def load_state(self, tensors):
        """Copy arrays into parameters and buffers by name."""
        params = self.parameters()
        buffers = self.buffers()
        for name, param in params.items():
            if name not in tensors:
                raise ConfigurationError(f"missing parameter {name}")
            array = np.asarray(tensors[name])
            if array.shape != param.shape:
                raise ConfigurationError(f"{name}: shape {array.shape} != {param.shape}")
            param.data = array.astype(param.dtype)
        for name, buf in buffers.items():
            if name in tensors:
                buf[...] = np.asarray(tensors[name]).reshape(buf.shape)

    def state(self):
        state = {name: p.data for name, p in self.parameters().items()}
        state.update(self.buffers())
        return state


class Conv1d(Module):
    def __init__(self, spec, rng):
        super().__init__()
        self.spec = spec
        self.weight = normal_init(rng, (spec.out_channels, spec.in_channels, spec.kernel_size))
        self.bias = zeros_init((spec.out_channels,)) if spec.has_bias else None

    def forward(self, x):
        return ops.conv1d(x, self.spec, self.weight, self.bias)


class ConvTranspose1d(Module):
    def __init__(self, spec, rng):
        super().__init__()
        self.spec = spec
        self.weight = normal_init(rng, (spec.in_channels, spec.out_channels, spec.kernel_size))
        self.bias = zeros_init((spec.out_channels,)) if spec.has_bias else None

    def forward(self, x, output_size=None):
        return ops.conv_transpose1d(x, self.spec, self.weight, self.bias, output_size)


class BatchNorm1d(Module):
    def __init__(self, channels, rng):
        super().__init__()
        self.gamma = normal_init(rng, (channels,), mean=1.0)
        self.beta = zeros_init((channels,))
        self.running_mean = np.zeros(channels, dtype=default_dtype())
        self.running_var = np.ones(channels, dtype=default_dtype())
        self.update_stats = True

    def forward(self, x):
        return ops.batchnorm1d(x, self.gamma, self.beta, self.running_mean, self.running_var,
                               self.training, update_stats=self.update_stats)


class Dense(Module):
    def __init__(self, in_features, out_features, rng):
        super().__init__()
        self.weight = normal_init(rng, (in_features, out_features))
        self.bias = zeros_init((out_features,))

    def forward(self, x):
        return ops.dense(x, self.weight, self.bias)


class Dropout(Module):
    """
    Dropout with its own generator.

    `active_in_eval` keeps it sampling in inference mode, which is how the
    N2FGAN generator injects noise at generation time.
    """

    def __init__(self, p, rng):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ConfigurationError(f"dropout probability must lie in [0, 1), got {p}")
        self.p = p
        self.rng = np.random.default_rng(rng.integers(2**32))
        self.active_in_eval = False

    def reseed(self, seed):
        self.rng = np.random.default_rng(seed)

    def forward(self, x):
        return ops.dropout(x, self.p, self.training or self.active_in_eval, self.rng)


class Activation(Module):
    def __init__(self, kind, slope=ops.LEAKY_SLOPE):
        super().__init__()
        if kind not in ("relu", "leaky_relu", "sigmoid", "tanh"):
            raise ConfigurationError(f"unknown activation {kind}")
        self.kind = kind
        self.slope = slope

    def forward(self, x):
        if self.kind == "leaky_relu":
            return ops.leaky_relu(x, self.slope)
        return getattr(ops, self.kind)(x)


class MaxPool1d(Module):
    def __init__(self, window, stride=None):
        super().__init__()
        self.window = window
        self.stride = stride

    def forward(self, x):
        return ops.maxpool1d(x, self.window, self.stride)


class Upsample1d(Module):
    def __init__(self, factor):
        super().__init__()
        self.factor = factor

    def forward(self, x):
        return ops.upsample1d(x, self.factor)


class Flatten(Module):
    def forward(self, x):
        return ops.flatten(x)


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, index):
        return self.layers[index]


# LSTM ------------------------------------------------------------------------

@dataclass
class LstmState:
    """Hidden and cell state, each [N, H] (or [H] for a single sequence)."""

    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, batch, hidden_size):
        shape = (batch, hidden_size)
        return cls(Tensor(np.zeros(shape)), Tensor(np.zeros(shape)))


@dataclass
class LstmParams:
    """Gate weights laid out [input | forget | candidate | output] along the last axis."""

    w_input: Tensor
    w_hidden: Tensor
    bias: Tensor

    @property
    def hidden_size(self):
        return self.w_hidden.shape[0]


def lstm_layer(seq, params, state0=None):
    """
    Run the LSTM recurrence over `seq` [N, T, F] (or [T, F]).

    i, f, o = sigmoid(...); g = tanh(...)
    c_t = f * c_{t-1} + i * g;  h_t = o * tanh(c_t)

    Returns:
        (outputs [N, T, H], final LstmState)
    """
    seq = as_tensor(seq)
    single = seq.ndim == 2
    if single:
        seq = seq.reshape(1, *seq.shape)
    n, steps, features = seq.shape
    hidden = params.hidden_size
    if params.w_input.shape != (features, 4 * hidden):
        raise ConfigurationError(f"w_input shape {params.w_input.shape} != ({features}, {4 * hidden})")
    if state0 is None:
        state0 = LstmState.zeros(n, hidden)
    h, c = as_tensor(state0.h), as_tensor(state0.c)
    if single and h.ndim == 1:
        h, c = h.reshape(1, hidden), c.reshape(1, hidden)
    if h.shape != (n, hidden) or c.shape != (n, hidden):
        raise ConfigurationError(f"LSTM state shape {h.shape}/{c.shape} != ({n}, {hidden})")

    projected = (seq.reshape(n * steps, features) @ params.w_input).reshape(n, steps, 4 * hidden)
    outputs = []
    for t in range(steps):
        z = projected[:, t, :] + h @ params.w_hidden + params.bias
        i = ops.sigmoid(z[:, :hidden])
        f = ops.sigmoid(z[:, hidden:2 * hidden])
        g = ops.tanh(z[:, 2 * hidden:3 * hidden])
        o = ops.sigmoid(z[:, 3 * hidden:])
        c = f * c + i * g
        h = o * ops.tanh(c)
        outputs.append(h)
    out = stack(outputs, axis=1)
    if single:
        return out.reshape(steps, hidden), LstmState(h.reshape(hidden), c.reshape(hidden))
    return out, LstmState(h, c)


class LSTM(Module):
    def __init__(self, input_size, hidden_size, rng):
        super().__init__()
        bound = 1.0 / np.sqrt(hidden_size)
        self.w_input = Tensor(rng.uniform(-bound, bound, (input_size, 4 * hidden_size)), requires_grad=True)
        self.w_hidden = Tensor(rng.uniform(-bound, bound, (hidden_size, 4 * hidden_size)), requires_grad=True)
        self.bias = zeros_init((4 * hidden_size,))
        self.hidden_size = hidden_size

    @property
    def params(self):
        return LstmParams(self.w_input, self.w_hidden, self.bias)

    def forward(self, seq, state0=None):
        return lstm_layer(seq, self.params, state0)


def concat_channels(*tensors):
    return concat(tensors, axis=1)
