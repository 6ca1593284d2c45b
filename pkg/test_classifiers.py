"""
Tests for the four evaluation classifiers and their training loop
"""

import numpy as np
import pytest

from src.classifiers import (ClassifierConfig, ClassifierKind, build_classifier, evaluate, predict,
                             train_classifier)
from src.errors import ConfigurationError, DataError
from src.signal_data import Burst, Condition, FaultClass, select, split, surrogate_dataset
from src.tensor import Tensor, no_grad


@pytest.mark.parametrize("kind", list(ClassifierKind))
def test_logit_shapes(kind, rng):
    network = build_classifier(kind, 6, 64, rng).eval()
    with no_grad():
        assert network(Tensor(rng.normal(size=(5, 1, 64)))).shape == (5, 6)


def test_kind_parsing_and_input_checks(rng):
    assert ClassifierKind.parse("ConvLSTM") is ClassifierKind.CONVLSTM
    assert ClassifierKind.parse("binary-lstm") is ClassifierKind.BINARY_LSTM
    with pytest.raises(ConfigurationError):
        ClassifierKind.parse("svm")
    with pytest.raises(ConfigurationError):
        build_classifier("cnn", 6, 60, rng)
    with pytest.raises(ConfigurationError):
        build_classifier("cnn", 1, 64, rng)
    network = build_classifier("cnn", 6, 64, rng)
    with pytest.raises(ConfigurationError):
        network(Tensor(np.zeros((2, 1, 32))))


def test_training_lowers_the_loss(small_bursts):
    bursts = select(small_bursts, FaultClass.NORMAL) + select(small_bursts, FaultClass.BALL)
    network = build_classifier("cnn", 6, 64, np.random.default_rng(0))
    _, trace = train_classifier(network, bursts, ClassifierConfig(epochs=12, batch_size=16, seed=0))
    assert len(trace.epoch_loss) == 12
    assert len(trace.step_loss) == 12 * 6
    assert trace.epoch_loss[-1] < trace.epoch_loss[0]
    metrics = evaluate(network, bursts)
    assert metrics.accuracy > 0.5
    assert set(np.unique(predict(network, bursts))) <= set(range(6))


def test_training_is_seeded(small_bursts):
    bursts = select(small_bursts, rpm=1797)[:40]

    def run():
        network = build_classifier("convlstm", 6, 64, np.random.default_rng(1))
        _, trace = train_classifier(network, bursts, ClassifierConfig(epochs=2, batch_size=8, seed=4))
        return trace.step_loss, predict(network, bursts)

    (loss_a, pred_a), (loss_b, pred_b) = run(), run()
    assert loss_a == loss_b
    np.testing.assert_array_equal(pred_a, pred_b)


def test_binary_labels_override(small_bursts):
    bursts = select(small_bursts, rpm=1772)
    labels = [0 if b.label == FaultClass.NORMAL else 1 for b in bursts]
    network = build_classifier("binary_lstm", 2, 64, np.random.default_rng(2))
    train_classifier(network, bursts, ClassifierConfig(epochs=1, batch_size=32), labels=labels)
    assert set(np.unique(predict(network, bursts))) <= {0, 1}
    with pytest.raises(DataError):
        train_classifier(network, bursts, ClassifierConfig(epochs=1), labels=[int(b.label) for b in bursts])


def test_rejects_single_class_and_untrained_use(small_bursts, rng):
    network = build_classifier("cnn", 6, 64, rng)
    with pytest.raises(ConfigurationError):
        predict(network, small_bursts[:3])
    with pytest.raises(DataError):
        train_classifier(network, select(small_bursts, FaultClass.INNER), ClassifierConfig(epochs=1))
    with pytest.raises(DataError):
        evaluate(network, [])


def test_separable_toy_is_learned_within_five_epochs():
    rng = np.random.default_rng(3)
    condition = Condition.for_rpm(1797)
    bursts = [Burst((sign + 0.05 * rng.normal(size=64)).astype(np.float32), label, condition, i)
              for i in range(160) for sign, label in ((1.0, FaultClass.NORMAL), (-1.0, FaultClass.INNER))]
    labels = [0 if b.label == FaultClass.NORMAL else 1 for b in bursts]
    network = build_classifier("cnn", 2, 64, np.random.default_rng(4))
    train_classifier(network, bursts, ClassifierConfig(epochs=5, batch_size=16, learning_rate=5e-3, seed=0),
                     labels=labels)
    assert evaluate(network, bursts, labels=labels).accuracy == 1.0


@pytest.mark.slow
def test_cnn_separates_the_surrogate_classes():
    bursts = surrogate_dataset(list(FaultClass), [Condition.for_rpm(1797)], 300, 512, seed=31)
    data = split(bursts, {c: 200 for c in FaultClass}, {c: 100 for c in FaultClass}, seed=31)
    network = build_classifier("cnn", 6, 512, np.random.default_rng(31))
    train_classifier(network, data.train, ClassifierConfig(epochs=15, seed=31))
    assert evaluate(network, data.test).accuracy >= 0.95
