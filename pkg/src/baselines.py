"""
Baseline augmenters for faultsynth
----------------------------------
The comparison augmenters N2FGAN is measured against: classical signal
augmentation (reverse, negate, additive noise), a label-conditioned CGAN
and a WGAN with gradient penalty. `augment_dataset` puts all four behind
one call so experiments can swap them freely.
"""

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from src import n2fgan, ops
from src.checkpoint import Checkpoint
from src.errors import ConfigurationError, DataError, NumericError
from src.layers import (Activation, BatchNorm1d, Conv1d, ConvTranspose1d, Dense, Flatten, Module,
                        Sequential, concat_channels)
from src.ops import ConvLayerSpec
from src.optim import Adam
from src.signal_data import (SYNTHETIC_OFFSET, Burst, Condition, FaultClass, Normalizer,
                             fit_normalizer, select)
from src.tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)

CLIP_LIMIT = 1.5
NOISE_FRACTION = 0.05


class AugmenterKind(str, Enum):
    CLASSICAL = "classical"
    CGAN = "cgan"
    WGAN_GP = "wgan_gp"
    N2FGAN = "n2fgan"

    @classmethod
    def parse(cls, value):
        try:
            return cls(str(value).strip().lower().replace("-", "_"))
        except ValueError:
            raise ConfigurationError(f"unknown augmenter {value!r}") from None


# Classical augmentation --------------------------------------------------------

CLASSICAL_VARIANTS = ("reverse", "noise", "negate")


def classical_augment(burst, rng, variant=None):
    """Reverse, negate, or add Gaussian noise with sigma = 0.05 * std(burst)."""
    variant = variant or CLASSICAL_VARIANTS[int(rng.integers(len(CLASSICAL_VARIANTS)))]
    x = burst.samples
    if variant == "reverse":
        out = x[::-1].copy()
    elif variant == "negate":
        out = -x
    elif variant == "noise":
        out = x + rng.normal(0.0, NOISE_FRACTION * float(np.std(x)), size=x.shape)
    else:
        raise ConfigurationError(f"unknown classical variant {variant!r}")
    return burst.with_samples(out)


# Shared GAN pieces -------------------------------------------------------------

def _up_spec(in_channels, out_channels):
    return ConvLayerSpec(in_channels, out_channels, n2fgan.KERNEL_SIZE, n2fgan.STRIDE, n2fgan.PADDING)


class NoiseGenerator(Module):
    """
    z [N, noise_dim] -> dense -> [N, w0, L / 2**k] -> transposed conv blocks -> [N, 1, L].

    With `n_classes` > 0 a one-hot label is broadcast as extra channels onto
    the first feature map.
    """

    def __init__(self, burst_len, noise_dim, widths, n_classes, rng):
        super().__init__()
        self.burst_len = burst_len
        self.noise_dim = noise_dim
        self.widths = tuple(widths)
        self.n_classes = n_classes
        factor = 2 ** len(self.widths)
        if burst_len % factor:
            raise ConfigurationError(f"burst_len {burst_len} is not divisible by {factor}")
        self.seed_len = burst_len // factor
        self.project = Dense(noise_dim, self.widths[0] * self.seed_len, rng)
        self.blocks = []
        in_channels = self.widths[0] + n_classes
        for width in self.widths[1:]:
            self.blocks.append(Sequential(ConvTranspose1d(_up_spec(in_channels, width), rng),
                                          BatchNorm1d(width, rng), Activation("relu")))
            in_channels = width
        self.head = ConvTranspose1d(_up_spec(in_channels, 1), rng)

    def forward(self, z, labels=None):
        n = z.shape[0]
        x = ops.relu(self.project(z)).reshape(n, self.widths[0], self.seed_len)
        if self.n_classes:
            x = concat_channels(x, Tensor(one_hot_channels(labels, self.n_classes, self.seed_len)))
        for block in self.blocks:
            x = block(x)
        return ops.tanh(self.head(x))


def one_hot_channels(labels, n_classes, length):
    onehot = np.zeros((len(labels), n_classes, length))
    onehot[np.arange(len(labels)), np.asarray(labels, dtype=np.int64), :] = 1.0
    return onehot


class ConvScorer(Module):
    """Strided conv blocks, flatten, dense to one score per burst."""

    def __init__(self, burst_len, in_channels, widths, rng, batchnorm=True, slope=ops.LEAKY_SLOPE):
        super().__init__()
        self.slope = slope
        self.convs = []
        self.norms = []
        length = burst_len
        for i, width in enumerate(widths):
            self.convs.append(Conv1d(_up_spec(in_channels, width), rng))
            if batchnorm and i > 0:
                self.norms.append(BatchNorm1d(width, rng))
            else:
                self.norms.append(None)
            length = self.convs[-1].spec.output_length(length)
            in_channels = width
        self.flatten = Flatten()
        self.out = Dense(in_channels * length, 1, rng)

    def forward(self, x):
        for conv, norm in zip(self.convs, self.norms):
            x = conv(x)
            if norm is not None:
                x = norm(x)
            x = ops.leaky_relu(x, self.slope)
        return self.out(self.flatten(x))


def _stack_normalized(bursts, normalizer):
    return np.stack([normalizer.apply(b.samples) for b in bursts])[:, None, :].astype(np.float32)


def _most_common_condition(bursts):
    counts = {}
    for b in bursts:
        counts[b.condition] = counts.get(b.condition, 0) + 1
    return max(sorted(counts), key=lambda c: counts[c])


# CGAN --------------------------------------------------------------------------

@dataclass(frozen=True)
class CGanSpec:
    burst_len: int = 512
    noise_dim: int = 64
    n_classes: int = 6
    generator_widths: tuple = (128, 64, 32)
    discriminator_widths: tuple = (32, 64, 128)

    def __post_init__(self):
        object.__setattr__(self, "generator_widths", tuple(self.generator_widths))
        object.__setattr__(self, "discriminator_widths", tuple(self.discriminator_widths))
        if self.noise_dim < 1:
            raise ConfigurationError("noise_dim must be >= 1")
        if self.n_classes < 2:
            raise ConfigurationError("a CGAN needs at least two classes")

    @property
    def label_embedding_dim(self):
        return self.n_classes


class CGanDiscriminator(ConvScorer):
    def __init__(self, spec, rng):
        super().__init__(spec.burst_len, 1 + spec.n_classes, spec.discriminator_widths, rng)
        self.n_classes = spec.n_classes

    def forward(self, x, labels):
        onehot = one_hot_channels(labels, self.n_classes, x.shape[2])
        return super().forward(concat_channels(x, Tensor(onehot)))


def cgan_train(bursts, spec, cfg):
    """
    Train a label-conditioned GAN on every class present in `bursts`.

    Labels are re-indexed in sorted order; the mapping and one condition per
    class are stored in the checkpoint so `cgan_generate` can tag outputs.
    """
    classes = sorted({int(b.label) for b in bursts})
    if len(classes) < 2:
        raise DataError("cgan_train needs at least two classes")
    if any(len(b) != spec.burst_len for b in bursts):
        raise DataError(f"every burst must have length {spec.burst_len}")
    spec = CGanSpec(spec.burst_len, spec.noise_dim, len(classes), spec.generator_widths,
                    spec.discriminator_widths)
    normalizer = fit_normalizer(bursts)
    data = _stack_normalized(bursts, normalizer)
    index = {label: i for i, label in enumerate(classes)}
    labels = np.array([index[int(b.label)] for b in bursts])

    generator = NoiseGenerator(spec.burst_len, spec.noise_dim, spec.generator_widths, spec.n_classes,
                               np.random.default_rng([cfg.seed, 11]))
    discriminator = CGanDiscriminator(spec, np.random.default_rng([cfg.seed, 12]))
    rng = np.random.default_rng([cfg.seed, 13])
    g_params, d_params = generator.parameters(), discriminator.parameters()
    g_opt = Adam(g_params, cfg.learning_rate, cfg.beta1)
    d_opt = Adam(d_params, cfg.learning_rate, cfg.beta1)
    trace = n2fgan.TrainTrace(columns=("generator", "discriminator_real", "discriminator_fake"))
    batch = max(2, cfg.batch_size)
    started = time.perf_counter()
    for step in range(1, cfg.steps + 1):
        try:
            idx = rng.integers(len(data), size=batch)
            real, y = Tensor(data[idx]), labels[idx]
            fake = generator(Tensor(rng.normal(size=(batch, spec.noise_dim))), y)
            real_logits = discriminator(real, y)
            with discriminator.frozen_statistics():
                fake_logits = discriminator(fake.detach(), y)
            _, d_real, d_fake = n2fgan.discriminator_loss(real_logits, fake_logits)
            d_opt.step(backward(d_real + d_fake, d_params))
            with discriminator.frozen_statistics():
                g_loss = ops.sigmoid_cross_entropy(discriminator(fake, y), 1.0)
            g_opt.step(backward(g_loss, g_params))
        except NumericError as exc:
            raise NumericError(str(exc), step=step) from exc
        trace.append(g_loss.item(), d_real.item(), d_fake.item())
        if cfg.log_every and step % cfg.log_every == 0:
            logger.info("cgan step %d: G %.4f D %.4f", step, g_loss.item(), d_real.item() + d_fake.item())

    trace.wall_time_s = time.perf_counter() - started
    conditions = {str(label): asdict(_most_common_condition([b for b in bursts if int(b.label) == label]))
                  for label in classes}
    tensors = {f"generator.{k}": np.array(v, dtype=np.float32) for k, v in generator.state().items()}
    tensors.update({f"discriminator.{k}": np.array(v, dtype=np.float32)
                    for k, v in discriminator.state().items()})
    document = {"cgan": asdict(spec), "train": asdict(cfg), "step": cfg.steps, "seed": cfg.seed,
                "classes": classes, "conditions": conditions, "normalizer": normalizer.as_dict()}
    return Checkpoint("cgan", document, tensors), trace


def _load_noise_generator(checkpoint, key, n_classes):
    spec = checkpoint.spec[key]
    generator = NoiseGenerator(spec["burst_len"], spec["noise_dim"], spec["generator_widths"], n_classes,
                               np.random.default_rng(0))
    generator.load_state(checkpoint.prefixed("generator"))
    return generator.eval()


def _emit(generator, checkpoint, n, rng, label, condition, labels=None):
    normalizer = Normalizer(**checkpoint.spec["normalizer"])
    with no_grad():
        z = Tensor(rng.normal(size=(n, generator.noise_dim)))
        out = generator(z, labels).data[:, 0, :]
    return [Burst(normalizer.invert(x).astype(np.float32), label, condition, SYNTHETIC_OFFSET) for x in out]


def cgan_generate(checkpoint, label, n, rng):
    """Sample `n` bursts of `label` from fresh noise."""
    if checkpoint.kind != "cgan":
        raise ConfigurationError(f"expected a cgan checkpoint, got {checkpoint.kind}")
    label = FaultClass.parse(label)
    classes = checkpoint.spec["classes"]
    if int(label) not in classes:
        raise DataError(f"label {label.label_name} was not seen in training")
    if n == 0:
        return []
    generator = _load_noise_generator(checkpoint, "cgan", len(classes))
    condition = Condition(**checkpoint.spec["conditions"][str(int(label))])
    return _emit(generator, checkpoint, n, rng, label, condition,
                 labels=np.full(n, classes.index(int(label))))


# WGAN-GP -----------------------------------------------------------------------

@dataclass(frozen=True)
class WGanGpSpec:
    burst_len: int = 512
    noise_dim: int = 64
    generator_widths: tuple = (128, 64, 32)
    critic_widths: tuple = (32, 64, 128)
    gp_weight: float = 10.0
    critic_steps_per_gen: int = 5
    finite_difference_gp: bool = False

    def __post_init__(self):
        object.__setattr__(self, "generator_widths", tuple(self.generator_widths))
        object.__setattr__(self, "critic_widths", tuple(self.critic_widths))
        if self.gp_weight < 0:
            raise ConfigurationError("gp_weight must be >= 0")
        if self.critic_steps_per_gen < 1:
            raise ConfigurationError("critic_steps_per_gen must be >= 1")


FD_STEP = 1e-3


class Critic(ConvScorer):
    """
    Batchnorm-free conv critic built only from conv, leaky relu and dense.

    Because every layer is linear or piecewise linear, the gradient of the
    score with respect to the input is itself a composition of core ops
    (dense transpose, a constant slope mask, transposed conv with the same
    weights) and is recorded on the graph by `input_gradient`.
    """

    def __init__(self, spec, rng):
        super().__init__(spec.burst_len, 1, spec.critic_widths, rng, batchnorm=False)

    def input_gradient(self, x):
        x = Tensor(x) if not isinstance(x, Tensor) else x
        masks, lengths = [], []
        with no_grad():
            h = x
            for conv in self.convs:
                lengths.append(h.shape[2])
                pre = conv(h)
                masks.append(np.where(pre.data > 0, 1.0, self.slope).astype(pre.dtype))
                h = ops.leaky_relu(pre, self.slope)
        n = x.shape[0]
        g = Tensor(np.ones((n, 1))) @ self.out.weight.transpose()
        g = g.reshape(n, *h.shape[1:])
        for conv, mask, length in reversed(list(zip(self.convs, masks, lengths))):
            s = conv.spec
            adjoint = ConvLayerSpec(s.out_channels, s.in_channels, s.kernel_size, s.stride, s.padding,
                                    has_bias=False)
            g = ops.conv_transpose1d(g * mask, adjoint, conv.weight, None, output_size=length)
        return g

    def directional_derivative(self, x, direction, step=FD_STEP):
        """Central difference of the score along `direction` (one unit vector per burst)."""
        x = Tensor(x) if not isinstance(x, Tensor) else x
        offset = Tensor(np.asarray(direction) * step)
        return (self(x + offset) - self(x - offset)) / (2.0 * step)


def penalty_from_norms(norms, gp_weight):
    return ((norms - 1.0) ** 2).mean() * gp_weight


def gradient_penalty(critic, real, fake, rng, gp_weight, finite_difference=False):
    """
    gp_weight * E[(||grad_x D(x_hat)||_2 - 1)^2] on random interpolates x_hat.

    The finite-difference variant replaces the gradient norm by the central
    difference of D along the unit real-minus-fake direction.
    """
    real = real.data if isinstance(real, Tensor) else np.asarray(real)
    fake = fake.data if isinstance(fake, Tensor) else np.asarray(fake)
    n = real.shape[0]
    eps = rng.random((n, 1, 1)).astype(real.dtype)
    x_hat = Tensor(eps * real + (1.0 - eps) * fake)
    if finite_difference:
        delta = (real - fake).reshape(n, -1)
        norm = np.linalg.norm(delta, axis=1, keepdims=True)
        unit = (delta / np.maximum(norm, 1e-12)).reshape(real.shape)
        norms = critic.directional_derivative(x_hat, unit).abs().reshape(n)
    else:
        grad = critic.input_gradient(x_hat)
        norms = ((grad * grad).sum(axis=(1, 2)) + 1e-12).sqrt()
    return penalty_from_norms(norms, gp_weight)


def wgan_gp_train(bursts, spec, cfg):
    """
    Train a WGAN-GP on bursts of a single class.

    Each generator step is preceded by `critic_steps_per_gen` critic steps
    minimising D(fake) - D(real) + penalty; the generator minimises -D(fake).
    """
    if len(bursts) < 2:
        raise DataError("wgan_gp_train needs at least two bursts")
    labels = {b.label for b in bursts}
    if len(labels) != 1:
        raise DataError("wgan_gp_train trains on a single class")
    if any(len(b) != spec.burst_len for b in bursts):
        raise DataError(f"every burst must have length {spec.burst_len}")
    label = labels.pop()
    normalizer = fit_normalizer(bursts)
    data = _stack_normalized(bursts, normalizer)

    generator = NoiseGenerator(spec.burst_len, spec.noise_dim, spec.generator_widths, 0,
                               np.random.default_rng([cfg.seed, 21]))
    critic = Critic(spec, np.random.default_rng([cfg.seed, 22]))
    rng = np.random.default_rng([cfg.seed, 23])
    g_params, c_params = generator.parameters(), critic.parameters()
    g_opt = Adam(g_params, cfg.learning_rate, cfg.beta1)
    c_opt = Adam(c_params, cfg.learning_rate, cfg.beta1)
    trace = n2fgan.TrainTrace(columns=("generator", "critic", "score_gap", "gradient_penalty"))
    batch = max(2, cfg.batch_size)
    started = time.perf_counter()
    for step in range(1, cfg.steps + 1):
        try:
            for _ in range(spec.critic_steps_per_gen):
                real = Tensor(data[rng.integers(len(data), size=batch)])
                with no_grad():
                    fake = generator(Tensor(rng.normal(size=(batch, spec.noise_dim))))
                gap = critic(real).mean() - critic(fake).mean()
                penalty = gradient_penalty(critic, real, fake, rng, spec.gp_weight, spec.finite_difference_gp)
                c_loss = penalty - gap
                c_opt.step(backward(c_loss, c_params))
            fake = generator(Tensor(rng.normal(size=(batch, spec.noise_dim))))
            g_loss = -critic(fake).mean()
            g_opt.step(backward(g_loss, g_params))
        except NumericError as exc:
            raise NumericError(str(exc), step=step) from exc
        trace.append(g_loss.item(), c_loss.item(), gap.item(), penalty.item())
        if cfg.log_every and step % cfg.log_every == 0:
            logger.info("wgan-gp step %d: gap %.4f gp %.4f", step, gap.item(), penalty.item())

    trace.wall_time_s = time.perf_counter() - started
    tensors = {f"generator.{k}": np.array(v, dtype=np.float32) for k, v in generator.state().items()}
    tensors.update({f"critic.{k}": np.array(v, dtype=np.float32) for k, v in critic.state().items()})
    document = {"wgan_gp": asdict(spec), "train": asdict(cfg), "step": cfg.steps, "seed": cfg.seed,
                "label": int(label), "condition": asdict(_most_common_condition(bursts)),
                "normalizer": normalizer.as_dict()}
    return Checkpoint("wgan_gp", document, tensors), trace


def wgan_gp_generate(checkpoint, n, rng):
    if checkpoint.kind != "wgan_gp":
        raise ConfigurationError(f"expected a wgan_gp checkpoint, got {checkpoint.kind}")
    if n == 0:
        return []
    generator = _load_noise_generator(checkpoint, "wgan_gp", 0)
    return _emit(generator, checkpoint, n, rng, FaultClass(checkpoint.spec["label"]),
                 Condition(**checkpoint.spec["condition"]))


# Common interface --------------------------------------------------------------

@dataclass
class AugmentSettings:
    """Everything an augmenter needs beyond the training set itself."""

    train: n2fgan.TrainConfig = field(default_factory=n2fgan.TrainConfig)
    generator_widths: tuple = (256, 128, 64)
    latent_dim: int = 64
    dropout_p: float = 0.5
    skip_connections: bool = True
    discriminator_widths: tuple = (64, 128, 256)
    cgan: CGanSpec = field(default_factory=CGanSpec)
    wgan: WGanGpSpec = field(default_factory=WGanGpSpec)
    source_rpm: int = 1797
    target_rpm: int = 1772
    seed: int = 0

    @classmethod
    def from_run_config(cls, config, seed=None):
        seed = config["run.seed"] if seed is None else seed
        train = n2fgan.TrainConfig.from_run_config(config)
        train.seed = seed
        burst_len = config["data.burst_len"]
        return cls(
            train=train,
            generator_widths=config["generator.block_widths"],
            latent_dim=config["generator.latent_dim"],
            dropout_p=config["generator.dropout_p"],
            skip_connections=config["generator.skip_connections"],
            discriminator_widths=config["discriminator.block_widths"],
            cgan=CGanSpec(burst_len, config["cgan.noise_dim"], 6, config["cgan.generator_widths"],
                          config["cgan.discriminator_widths"]),
            wgan=WGanGpSpec(burst_len, config["wgan.noise_dim"], config["wgan.generator_widths"],
                            config["wgan.critic_widths"], config["wgan.gp_weight"],
                            config["wgan.critic_steps_per_gen"], config["wgan.finite_difference_gp"]),
            source_rpm=config["data.source_rpm"],
            target_rpm=config["data.target_rpms"][0],
            seed=seed,
        )


def clip_synthetic(synthetic, reference):
    """
    Clip synthetic bursts to [-1.5, 1.5] in the reference class's normalized scale.

    Returns:
        (bursts, clipped sample count)
    """
    if not synthetic:
        return [], 0
    normalizer = fit_normalizer(reference)
    clipped_total = 0
    out = []
    for burst in synthetic:
        scaled = normalizer.apply(burst.samples)
        if not np.all(np.isfinite(scaled)):
            raise NumericError("augmenter produced non-finite samples")
        clipped = np.clip(scaled, -CLIP_LIMIT, CLIP_LIMIT)
        clipped_total += int(np.count_nonzero(clipped != scaled))
        out.append(burst.with_samples(normalizer.invert(clipped)))
    if clipped_total:
        logger.warning("clipped %d synthetic samples outside [-%.1f, %.1f]", clipped_total, CLIP_LIMIT, CLIP_LIMIT)
    return out, clipped_total


def synthesize(kind, train_set, target_class, n_synthetic, settings):
    """Produce `n_synthetic` bursts of `target_class` with the chosen augmenter."""
    kind = AugmenterKind.parse(kind)
    target_class = FaultClass.parse(target_class)
    rng = np.random.default_rng([settings.seed, 31])
    if n_synthetic == 0:
        return []
    real_target = select(train_set, target_class)
    if not real_target:
        raise DataError(f"no {target_class.label_name} bursts in the training set")
    burst_len = len(real_target[0])

    if kind == AugmenterKind.CLASSICAL:
        picks = rng.integers(len(real_target), size=n_synthetic)
        return [classical_augment(real_target[i], rng) for i in picks]

    if kind == AugmenterKind.CGAN:
        spec = replace_len(settings.cgan, burst_len)
        checkpoint, _ = cgan_train(train_set, spec, settings.train)
        return cgan_generate(checkpoint, target_class, n_synthetic, rng)

    if kind == AugmenterKind.WGAN_GP:
        spec = replace_len(settings.wgan, burst_len)
        checkpoint, _ = wgan_gp_train(real_target, spec, settings.train)
        return wgan_gp_generate(checkpoint, n_synthetic, rng)

    pairs = n2fgan.prepare_pairs(train_set, target_class, settings.source_rpm, settings.seed)
    gspec = n2fgan.GeneratorSpec(burst_len, settings.generator_widths, settings.latent_dim,
                                 settings.dropout_p, settings.skip_connections)
    dspec = n2fgan.DiscriminatorSpec(burst_len, settings.discriminator_widths)
    checkpoint, _ = n2fgan.train(pairs, gspec, dspec, settings.train)
    normals = select(train_set, FaultClass.NORMAL, settings.target_rpm)
    if not normals:
        raise DataError(f"no normal bursts at {settings.target_rpm} rpm to translate")
    if n_synthetic > len(normals):
        logger.warning("generating %d bursts from %d normals: sampling with replacement",
                       n_synthetic, len(normals))
        picks = rng.integers(len(normals), size=n_synthetic)
    else:
        picks = rng.permutation(len(normals))[:n_synthetic]
    return n2fgan.generate(checkpoint, [normals[i] for i in picks], seed=settings.seed)


def replace_len(spec, burst_len):
    return replace(spec, burst_len=burst_len)


def augment_dataset(kind, train_set, target_class, n_synthetic, settings):
    """
    Append exactly `n_synthetic` synthetic `target_class` bursts to a copy of `train_set`.

    Synthetic bursts are clipped to [-1.5, 1.5] in the real class's
    normalized scale before they are appended.
    """
    if n_synthetic < 0:
        raise ConfigurationError("n_synthetic must be >= 0")
    synthetic = synthesize(kind, train_set, target_class, n_synthetic, settings)
    synthetic, _ = clip_synthetic(synthetic, select(train_set, target_class))
    return list(train_set) + synthetic
