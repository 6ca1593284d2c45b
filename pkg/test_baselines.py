"""
Tests for the classical, CGAN and WGAN-GP augmenters and the shared augment interface
"""

import numpy as np
import pytest

from src.baselines import (AugmentSettings, AugmenterKind, CGanSpec, Critic, WGanGpSpec, augment_dataset,
                           cgan_generate, cgan_train, classical_augment, clip_synthetic, gradient_penalty,
                           penalty_from_norms, wgan_gp_generate, wgan_gp_train)
from src.errors import ConfigurationError, DataError
from src.n2fgan import TrainConfig
from src.features import class_centroids, feature_matrix, nearest_centroid
from src.signal_data import Burst, Condition, FaultClass, fit_normalizer, select, surrogate_dataset
from src.tensor import Tensor, precision

C1797 = Condition.for_rpm(1797)
TINY_TRAIN = TrainConfig(steps=2, batch_size=4, seed=3, checkpoint_every=0, log_every=0)


def tiny_settings(**changes):
    base = dict(
        train=TINY_TRAIN,
        generator_widths=(8, 8),
        latent_dim=4,
        discriminator_widths=(4, 8),
        cgan=CGanSpec(64, 4, 6, (8, 4), (4, 8)),
        wgan=WGanGpSpec(64, 4, (8, 4), (4, 8), critic_steps_per_gen=2),
        source_rpm=1797,
        target_rpm=1772,
        seed=3,
    )
    base.update(changes)
    return AugmentSettings(**base)


def test_classical_variants(rng):
    burst = Burst(rng.normal(size=64).astype(np.float32), FaultClass.BALL, C1797, 128)
    reversed_ = classical_augment(burst, rng, "reverse")
    np.testing.assert_array_equal(reversed_.samples, burst.samples[::-1])
    np.testing.assert_array_equal(classical_augment(burst, rng, "negate").samples, -burst.samples)
    noisy = classical_augment(burst, rng, "noise")
    assert 0 < np.std(noisy.samples - burst.samples) < 0.2 * np.std(burst.samples)
    assert reversed_.label is FaultClass.BALL and reversed_.condition == C1797
    with pytest.raises(ConfigurationError):
        classical_augment(burst, rng, "shuffle")


def test_augmenter_kind_parsing():
    assert AugmenterKind.parse("WGAN-GP") is AugmenterKind.WGAN_GP
    with pytest.raises(ConfigurationError):
        AugmenterKind.parse("vae")


def test_clip_synthetic_limits_range():
    reference = [Burst(np.linspace(-2, 2, 16, dtype=np.float32), FaultClass.INNER, C1797)]
    wild = Burst(np.array([-10.0, 0.0, 1.0, 10.0], dtype=np.float32), FaultClass.INNER, C1797)
    (clipped,), count = clip_synthetic([wild], reference)
    assert count == 2
    scaled = fit_normalizer(reference).apply(clipped.samples)
    assert scaled.min() == pytest.approx(-1.5) and scaled.max() == pytest.approx(1.5)
    assert clip_synthetic([], reference) == ([], 0)


def test_penalty_vanishes_for_unit_gradient_critic():
    """A critic with input-gradient norm exactly one everywhere pays no penalty."""
    with precision(np.float64):
        critic = Critic(WGanGpSpec(burst_len=8, critic_widths=(1,)), np.random.default_rng(0))
        params = critic.parameters()
        params["convs.0.weight"].data = np.array([[[0.0, 1.0, 0.0, 0.0]]])
        params["convs.0.bias"].data = np.array([100.0])
        params["out.weight"].data = np.full((4, 1), 0.5)
        rng = np.random.default_rng(1)
        real, fake = rng.normal(size=(5, 1, 8)), rng.normal(size=(5, 1, 8))
        exact = gradient_penalty(critic, real, fake, np.random.default_rng(2), 10.0).item()
        approx = gradient_penalty(critic, real, fake, np.random.default_rng(2), 10.0,
                                  finite_difference=True).item()
    assert exact == pytest.approx(0.0, abs=1e-9)
    # the directional derivative along a unit vector is at most the gradient norm
    assert approx <= 10.0 + 1e-9


def test_penalty_from_norms():
    with precision(np.float64):
        assert penalty_from_norms(Tensor(np.array([1.0, 3.0])), 10.0).item() == pytest.approx(20.0)


def test_cgan_short_run(small_bursts):
    spec = CGanSpec(64, 4, 6, (8, 4), (4, 8))
    checkpoint, trace = cgan_train(small_bursts, spec, TINY_TRAIN)
    assert len(trace) == 2 and checkpoint.kind == "cgan"
    assert checkpoint.spec["classes"] == [int(c) for c in FaultClass]
    out = cgan_generate(checkpoint, "ball", 5, np.random.default_rng(0))
    assert len(out) == 5
    assert all(b.synthetic and b.label is FaultClass.BALL and len(b) == 64 for b in out)
    assert cgan_generate(checkpoint, "ball", 0, np.random.default_rng(0)) == []


def test_cgan_needs_two_classes(small_bursts):
    with pytest.raises(DataError):
        cgan_train(select(small_bursts, FaultClass.BALL), CGanSpec(64, 4, 6, (8, 4), (4, 8)), TINY_TRAIN)


@pytest.mark.parametrize("finite_difference", [False, True])
def test_wgan_gp_short_run(small_bursts, finite_difference):
    spec = WGanGpSpec(64, 4, (8, 4), (4, 8), critic_steps_per_gen=2, finite_difference_gp=finite_difference)
    checkpoint, trace = wgan_gp_train(select(small_bursts, FaultClass.INNER), spec, TINY_TRAIN)
    assert len(trace) == 2
    assert all(np.isfinite(row).all() for row in trace.rows)
    out = wgan_gp_generate(checkpoint, 3, np.random.default_rng(0))
    assert [b.label for b in out] == [FaultClass.INNER] * 3
    assert all(b.synthetic for b in out)


def test_wgan_gp_trains_on_one_class(small_bursts):
    with pytest.raises(DataError):
        wgan_gp_train(small_bursts, WGanGpSpec(64, 4, (8, 4), (4, 8)), TINY_TRAIN)


@pytest.mark.parametrize("kind", ["classical", "cgan", "wgan_gp", "n2fgan"])
def test_augment_dataset_appends_exact_count(small_bursts, kind):
    train_set = [b for b in small_bursts if not (b.label == FaultClass.INNER and b.condition.rpm == 1772)]
    augmented = augment_dataset(kind, train_set, FaultClass.INNER, 7, tiny_settings())
    assert len(augmented) == len(train_set) + 7
    added = augmented[len(train_set):]
    assert all(b.synthetic and b.label is FaultClass.INNER for b in added)
    if kind == "n2fgan":
        assert all(b.condition.rpm == 1772 for b in added)


def test_augment_dataset_zero_and_negative(small_bursts):
    assert len(augment_dataset("classical", small_bursts, "inner", 0, tiny_settings())) == len(small_bursts)
    with pytest.raises(ConfigurationError):
        augment_dataset("classical", small_bursts, "inner", -1, tiny_settings())


def test_wgan_gp_critic_separates_real_from_fake(small_bursts):
    spec = WGanGpSpec(64, 4, (8, 4), (4, 8), critic_steps_per_gen=5)
    cfg = TrainConfig(steps=150, batch_size=8, seed=5, checkpoint_every=0, log_every=0)
    _, trace = wgan_gp_train(select(small_bursts, FaultClass.INNER), spec, cfg)
    assert trace.column("score_gap")[-100:].mean() > 0


@pytest.mark.slow
def test_cgan_samples_land_on_their_class_centroid():
    bursts = surrogate_dataset(list(FaultClass), [C1797], n_bursts=100, burst_len=512, seed=11)
    cfg = TrainConfig(steps=2000, batch_size=32, seed=11, checkpoint_every=0, log_every=0)
    checkpoint, _ = cgan_train(bursts, CGanSpec(), cfg)
    real = feature_matrix(np.stack([b.samples for b in bursts]))
    centroids = class_centroids(bursts)
    rng = np.random.default_rng(12)
    hits = total = 0
    for label in FaultClass:
        samples = cgan_generate(checkpoint, label, 50, rng)
        predicted = nearest_centroid(feature_matrix(np.stack([b.samples for b in samples])), centroids,
                                     real.std(axis=0))
        hits += int((predicted == int(label)).sum())
        total += len(samples)
    assert hits / total >= 0.70
