"""
Fault classifiers for faultsynth
--------------------------------
The four networks synthetic data is judged with:

- binary_lstm: one LSTM layer over 16-sample frames, dense head (2 classes)
- convlstm: two conv blocks (conv, batchnorm, relu, max-pool), an LSTM over
  the pooled feature map, a sigmoid dense layer, dropout and the class layer
- cnn: four conv blocks, flatten, a fully connected layer and the class layer
- convae: a three-block conv encoder and a three-block upsampling decoder,
  flatten, a fully connected layer and the class layer

All emit class logits; softmax lives in the loss.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from src import ops
from src.errors import ConfigurationError, DataError, NumericError
from src.layers import (LSTM, Activation, BatchNorm1d, Conv1d, Dense, Dropout, Flatten, MaxPool1d, Module,
                        Sequential, Upsample1d)
from src.metrics import compute_metrics
from src.ops import ConvLayerSpec
from src.optim import CLASSIFIER_BETA1, Adam
from src.signal_data import fit_normalizer
from src.tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)

FRAME_LEN = 16
LSTM_HIDDEN = 64
EVAL_BATCH = 128


class ClassifierKind(str, Enum):
    BINARY_LSTM = "binary_lstm"
    CONVLSTM = "convlstm"
    CNN = "cnn"
    CONVAE = "convae"

    @classmethod
    def parse(cls, value):
        try:
            return cls(str(value).strip().lower().replace("-", "_"))
        except ValueError:
            raise ConfigurationError(f"unknown classifier kind {value!r}") from None


def conv_block(in_channels, out_channels, kernel_size, rng, resample=None):
    """conv (same length) + batchnorm + relu, then an optional pooling/upsampling layer."""
    layers = [Conv1d(ConvLayerSpec(in_channels, out_channels, kernel_size, 1, kernel_size // 2), rng),
              BatchNorm1d(out_channels, rng), Activation("relu")]
    if resample is not None:
        layers.append(resample)
    return Sequential(*layers)


def _require_divisible(input_len, factor, kind):
    if input_len < factor or input_len % factor:
        raise ConfigurationError(f"{kind} needs input_len divisible by {factor}, got {input_len}")


class Classifier(Module):
    def __init__(self, kind, n_classes, input_len):
        super().__init__()
        if n_classes < 2:
            raise ConfigurationError("a classifier needs at least two classes")
        self.kind = kind
        self.n_classes = n_classes
        self.input_len = input_len
        self.input_map = None

    def _check(self, x):
        x = Tensor(x) if not isinstance(x, Tensor) else x
        if x.ndim != 3 or x.shape[1:] != (1, self.input_len):
            raise ConfigurationError(f"{self.kind.value} expects [N, 1, {self.input_len}], got {x.shape}")
        return x


class BinaryLstm(Classifier):
    def __init__(self, n_classes, input_len, rng):
        super().__init__(ClassifierKind.BINARY_LSTM, n_classes, input_len)
        _require_divisible(input_len, FRAME_LEN, "binary_lstm")
        self.lstm = LSTM(FRAME_LEN, LSTM_HIDDEN, rng)
        self.out = Dense(LSTM_HIDDEN, n_classes, rng)

    def forward(self, x):
        x = self._check(x)
        frames = x.reshape(x.shape[0], self.input_len // FRAME_LEN, FRAME_LEN)
        _, state = self.lstm(frames)
        return self.out(state.h)


class ConvLstm(Classifier):
    def __init__(self, n_classes, input_len, rng, widths=(16, 32), pool=4, dropout_p=0.3):
        super().__init__(ClassifierKind.CONVLSTM, n_classes, input_len)
        _require_divisible(input_len, pool ** len(widths), "convlstm")
        self.blocks = []
        in_channels = 1
        for width in widths:
            self.blocks.append(conv_block(in_channels, width, 7, rng, MaxPool1d(pool)))
            in_channels = width
        self.lstm = LSTM(in_channels, LSTM_HIDDEN, rng)
        self.hidden = Dense(LSTM_HIDDEN, LSTM_HIDDEN, rng)
        self.dropout = Dropout(dropout_p, rng)
        self.out = Dense(LSTM_HIDDEN, n_classes, rng)

    def forward(self, x):
        x = self._check(x)
        for block in self.blocks:
            x = block(x)
        _, state = self.lstm(x.transpose(0, 2, 1))
        return self.out(self.dropout(ops.sigmoid(self.hidden(state.h))))


class Cnn(Classifier):
    def __init__(self, n_classes, input_len, rng, widths=(8, 16, 32, 32), fc=64):
        super().__init__(ClassifierKind.CNN, n_classes, input_len)
        _require_divisible(input_len, 2 ** len(widths), "cnn")
        self.blocks = []
        in_channels = 1
        for width in widths:
            self.blocks.append(conv_block(in_channels, width, 5, rng, MaxPool1d(2)))
            in_channels = width
        self.flatten = Flatten()
        self.fc = Dense(in_channels * input_len // 2 ** len(widths), fc, rng)
        self.out = Dense(fc, n_classes, rng)

    def forward(self, x):
        x = self._check(x)
        for block in self.blocks:
            x = block(x)
        return self.out(ops.relu(self.fc(self.flatten(x))))


class ConvAe(Classifier):
    def __init__(self, n_classes, input_len, rng, encoder_widths=(16, 32, 64), decoder_widths=(32, 16, 4),
                 fc=64):
        super().__init__(ClassifierKind.CONVAE, n_classes, input_len)
        _require_divisible(input_len, 2 ** len(encoder_widths), "convae")
        self.encoder = []
        in_channels = 1
        for width in encoder_widths:
            self.encoder.append(conv_block(in_channels, width, 5, rng, MaxPool1d(2)))
            in_channels = width
        self.decoder = []
        for width in decoder_widths:
            self.decoder.append(conv_block(in_channels, width, 5, rng, Upsample1d(2)))
            in_channels = width
        scale = 2 ** (len(decoder_widths) - len(encoder_widths))
        self.flatten = Flatten()
        self.fc = Dense(in_channels * input_len * scale, fc, rng)
        self.out = Dense(fc, n_classes, rng)

    def forward(self, x):
        x = self._check(x)
        for block in self.encoder + self.decoder:
            x = block(x)
        return self.out(ops.relu(self.fc(self.flatten(x))))


_BUILDERS = {
    ClassifierKind.BINARY_LSTM: BinaryLstm,
    ClassifierKind.CONVLSTM: ConvLstm,
    ClassifierKind.CNN: Cnn,
    ClassifierKind.CONVAE: ConvAe,
}


def build_classifier(kind, n_classes, input_len, rng):
    return _BUILDERS[ClassifierKind.parse(kind)](n_classes, input_len, rng)


@dataclass
class ClassifierConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = CLASSIFIER_BETA1
    seed: int = 0

    @classmethod
    def from_run_config(cls, config, seed=None):
        section = config.section("classifier")
        return cls(section["epochs"], section["batch_size"], section["learning_rate"], section["beta1"],
                   config["run.seed"] if seed is None else seed)


@dataclass
class ClassifierTrace:
    step_loss: list = field(default_factory=list)
    epoch_loss: list = field(default_factory=list)


def _inputs(network, bursts):
    x = np.stack([network.input_map.apply(b.samples) for b in bursts])
    return x[:, None, :].astype(np.float32)


def train_classifier(network, bursts, cfg=None, labels=None):
    """
    Minibatch Adam on softmax cross-entropy with seeded per-epoch shuffling.

    Inputs are scaled into [-1, 1] with a map fitted on the training bursts
    and kept on the network for evaluation.

    Returns:
        (network, ClassifierTrace)
    """
    cfg = cfg or ClassifierConfig()
    labels = np.array([int(b.label) for b in bursts] if labels is None else labels, dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise DataError("train_classifier needs at least two classes")
    if labels.min() < 0 or labels.max() >= network.n_classes:
        raise DataError(f"labels must lie in [0, {network.n_classes})")
    network.input_map = fit_normalizer(bursts)
    x = _inputs(network, bursts)
    params = network.parameters()
    optimizer = Adam(params, cfg.learning_rate, cfg.beta1)
    rng = np.random.default_rng([cfg.seed, 41])
    trace = ClassifierTrace()
    network.train()
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            step += 1
            try:
                loss = ops.softmax_cross_entropy(network(Tensor(x[idx])), labels[idx])
                optimizer.step(backward(loss, params))
            except NumericError as exc:
                raise NumericError(str(exc), step=step) from exc
            losses.append(loss.item())
        trace.step_loss.extend(losses)
        trace.epoch_loss.append(float(np.mean(losses)))
        logger.debug("%s epoch %d: loss %.4f", network.kind.value, epoch + 1, trace.epoch_loss[-1])
    return network, trace


def predict(network, bursts):
    if network.input_map is None:
        raise ConfigurationError("classifier has not been trained")
    network.eval()
    x = _inputs(network, bursts)
    out = []
    with no_grad():
        for start in range(0, len(x), EVAL_BATCH):
            out.append(np.argmax(network(Tensor(x[start:start + EVAL_BATCH])).data, axis=1))
    return np.concatenate(out)


def evaluate(network, bursts, labels=None):
    """Argmax predictions scored against the bursts' labels."""
    if not bursts:
        raise DataError("evaluate needs a non-empty test set")
    labels = np.array([int(b.label) for b in bursts] if labels is None else labels, dtype=np.int64)
    return compute_metrics(labels, predict(network, bursts), network.n_classes)
