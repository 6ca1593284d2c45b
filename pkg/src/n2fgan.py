"""
N2FGAN for faultsynth
---------------------
A 1-D conditional GAN that translates normal vibration bursts into fault
bursts. The generator is an encoder/decoder with skip connections and no
noise input (dropout is the only source of randomness); the discriminator
scores channelwise (normal, fault) pairs with a patch logit map. Training
minimises adversarial loss plus a weighted L1 term against the paired
ground-truth fault burst.
"""

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from src import ops
from src.checkpoint import Checkpoint
from src.errors import ConfigurationError, DataError, NumericError
from src.layers import (Activation, BatchNorm1d, Conv1d, ConvTranspose1d, Dropout, Module,
                        Sequential, concat_channels)
from src.ops import ConvLayerSpec
from src.optim import GAN_BETA1, Adam
from src.signal_data import (SYNTHETIC_OFFSET, Burst, Condition, FaultClass, Normalizer,
                             fit_normalizer, make_pairs, select)
from src.tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)

KERNEL_SIZE = 4
STRIDE = 2
PADDING = 1
GENERATION_BATCH = 64


@dataclass(frozen=True)
class GeneratorSpec:
    input_len: int = 512
    block_widths: tuple = (256, 128, 64)
    latent_dim: int = 64
    dropout_p: float = 0.5
    skip_connections: bool = True

    def __post_init__(self):
        object.__setattr__(self, "block_widths", tuple(int(w) for w in self.block_widths))
        if not self.block_widths or min(self.block_widths) < 1:
            raise ConfigurationError(f"generator block widths must be positive: {self.block_widths}")
        if self.latent_dim < 1:
            raise ConfigurationError("latent_dim must be > 0")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigurationError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        factor = 2 ** self.down_blocks
        if self.input_len < factor or self.input_len % factor:
            raise ConfigurationError(
                f"input_len {self.input_len} is not divisible by 2**{self.down_blocks} = {factor}")

    @property
    def down_blocks(self):
        """Encoder blocks including the bottleneck block."""
        return len(self.block_widths) + 1


@dataclass(frozen=True)
class DiscriminatorSpec:
    input_len: int = 512
    block_widths: tuple = (64, 128, 256)
    in_channels: int = 2

    def __post_init__(self):
        object.__setattr__(self, "block_widths", tuple(int(w) for w in self.block_widths))
        if not self.block_widths or min(self.block_widths) < 1:
            raise ConfigurationError(f"discriminator needs >= 1 positive block width: {self.block_widths}")
        factor = 2 ** len(self.block_widths)
        if self.input_len < factor or self.input_len % factor:
            raise ConfigurationError(
                f"input_len {self.input_len} is not divisible by 2**{len(self.block_widths)}")

    @property
    def patch_len(self):
        return self.input_len // 2 ** len(self.block_widths)


@dataclass
class TrainConfig:
    steps: int = 4000
    learning_rate: float = 2e-4
    beta1: float = GAN_BETA1
    batch_size: int = 16
    lambda_l1: float = 100.0
    seed: int = 0
    checkpoint_every: int = 1000
    log_every: int = 100
    train_discriminator: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError("steps must be >= 1")
        if self.lambda_l1 < 0:
            raise ConfigurationError("lambda_l1 must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")

    @classmethod
    def from_run_config(cls, config):
        train = config.section("train")
        return cls(steps=train["steps"], learning_rate=train["learning_rate"], beta1=train["beta1"],
                   batch_size=train["batch_size"], lambda_l1=train["lambda_l1"], seed=config["run.seed"],
                   checkpoint_every=train["checkpoint_every"], log_every=train["log_every"])


@dataclass
class TrainTrace:
    """Per-step losses of one training run."""

    columns: tuple = ("generator_total", "generator_adversarial", "generator_l1",
                      "discriminator_total", "discriminator_real", "discriminator_fake")
    rows: list = field(default_factory=list)
    wall_time_s: float = 0.0

    def append(self, *values):
        self.rows.append(tuple(float(v) for v in values))

    def column(self, name):
        index = self.columns.index(name)
        return np.array([row[index] for row in self.rows])

    def __len__(self):
        return len(self.rows)


# Networks ----------------------------------------------------------------------

def _down_spec(in_channels, out_channels):
    return ConvLayerSpec(in_channels, out_channels, KERNEL_SIZE, STRIDE, PADDING)


class Generator(Module):
    """
    Encoder: conv(stride 2) + batchnorm + leaky relu per block (no batchnorm
    on the first block), ending at `latent_dim` channels. Decoder mirrors it
    with transposed convs + batchnorm + dropout + relu and concatenates the
    matching encoder activation after each block. A final transposed conv
    maps back to one channel through tanh.
    """

    def __init__(self, spec, rng):
        super().__init__()
        self.spec = spec
        widths = list(spec.block_widths) + [spec.latent_dim]
        self.encoder = []
        in_channels = 1
        for i, width in enumerate(widths):
            layers = [Conv1d(_down_spec(in_channels, width), rng)]
            if i > 0:
                layers.append(BatchNorm1d(width, rng))
            layers.append(Activation("leaky_relu"))
            self.encoder.append(Sequential(*layers))
            in_channels = width
        self.decoder = []
        for width in reversed(spec.block_widths):
            self.decoder.append(Sequential(
                ConvTranspose1d(_down_spec(in_channels, width), rng),
                BatchNorm1d(width, rng),
                Dropout(spec.dropout_p, rng),
                Activation("relu"),
            ))
            in_channels = 2 * width if spec.skip_connections else width
        self.head = ConvTranspose1d(_down_spec(in_channels, 1), rng)

    def dropouts(self):
        return [m for m in self.modules() if isinstance(m, Dropout)]

    def set_generation_noise(self, active, seed=None):
        """Keep dropout sampling in eval mode; reseed every layer from `seed`."""
        layers = self.dropouts()
        children = np.random.SeedSequence(seed).spawn(len(layers)) if seed is not None else None
        for i, layer in enumerate(layers):
            layer.active_in_eval = active
            if children is not None:
                layer.reseed(children[i])

    def forward(self, x):
        x = Tensor(x) if not isinstance(x, Tensor) else x
        single = x.ndim == 2
        if single:
            x = x.reshape(1, *x.shape)
        if x.shape[1:] != (1, self.spec.input_len):
            raise ConfigurationError(f"generator expects [N, 1, {self.spec.input_len}], got {x.shape}")
        skips = []
        for block in self.encoder:
            x = block(x)
            skips.append(x)
        for block, skip in zip(self.decoder, reversed(skips[:-1])):
            x = block(x)
            if self.spec.skip_connections:
                x = concat_channels(x, skip)
        out = ops.tanh(self.head(x))
        return out.reshape(out.shape[1:]) if single else out


class Discriminator(Module):
    """Conv blocks on the 2-channel (normal, fault) input, then a 1-channel patch logit conv."""

    def __init__(self, spec, rng):
        super().__init__()
        self.spec = spec
        self.blocks = []
        in_channels = spec.in_channels
        for i, width in enumerate(spec.block_widths):
            layers = [Conv1d(_down_spec(in_channels, width), rng)]
            if i > 0:
                layers.append(BatchNorm1d(width, rng))
            layers.append(Activation("leaky_relu"))
            self.blocks.append(Sequential(*layers))
            in_channels = width
        self.head = Conv1d(ConvLayerSpec(in_channels, 1, 3, 1, 1), rng)

    def forward(self, x):
        x = Tensor(x) if not isinstance(x, Tensor) else x
        single = x.ndim == 2
        if single:
            x = x.reshape(1, *x.shape)
        for block in self.blocks:
            x = block(x)
        out = self.head(x)
        return out.reshape(out.shape[1:]) if single else out


def build_generator(spec, rng):
    return Generator(spec, rng)


def build_discriminator(spec, rng):
    return Discriminator(spec, rng)


# Losses ------------------------------------------------------------------------

def generator_loss(disc_logits_on_fake, generated, target, lambda_l1):
    """
    Adversarial term against an array of ones plus lambda * mean |generated - target|.

    Returns:
        (total, adversarial, l1) Tensors
    """
    adversarial = ops.sigmoid_cross_entropy(disc_logits_on_fake, 1.0)
    l1 = ops.mean_absolute_error(generated, target)
    return adversarial + l1 * lambda_l1, adversarial, l1


def discriminator_loss(logits_real, logits_fake):
    real_term = ops.sigmoid_cross_entropy(logits_real, 1.0)
    fake_term = ops.sigmoid_cross_entropy(logits_fake, 0.0)
    return real_term + fake_term, real_term, fake_term


# Training ----------------------------------------------------------------------

def _validate_pairs(pairs, gspec):
    if not pairs:
        raise DataError("train needs at least one pair")
    conditions = {p.condition for p in pairs}
    if len(conditions) > 1:
        raise DataError(f"pairs span several conditions: {sorted(map(str, conditions))}")
    labels = {p.fault.label for p in pairs}
    if len(labels) > 1:
        raise DataError("one generator learns one fault class; pairs carry several")
    lengths = {len(p.fault) for p in pairs}
    if lengths != {gspec.input_len}:
        raise DataError(f"burst length {sorted(lengths)} != generator input_len {gspec.input_len}")


def prepare_pairs(bursts, fault_label, rpm, seed):
    """Pair every fault burst of `fault_label` at `rpm` with a normal burst of that speed."""
    fault_label = FaultClass.parse(fault_label)
    normals = select(bursts, FaultClass.NORMAL, rpm)
    faults = select(bursts, fault_label, rpm)
    if not normals or not faults:
        raise DataError(f"need normal and {fault_label.label_name} bursts at {rpm} rpm "
                        f"(have {len(normals)} normal, {len(faults)} fault)")
    return make_pairs(normals, faults, np.random.default_rng(seed))


class _PairSampler:
    """Fault bursts in shuffled epochs, each re-paired with a random normal of the pool."""

    def __init__(self, pairs, normal_map, fault_map, rng):
        unique = {id(p.normal): p.normal for p in pairs}
        self.normals = np.stack([normal_map.apply(b.samples) for b in unique.values()]).astype(np.float32)
        self.faults = np.stack([fault_map.apply(p.fault.samples) for p in pairs]).astype(np.float32)
        self.rng = rng
        self._order = np.array([], dtype=np.int64)
        self._partner = None
        self._cursor = 0

    def _new_epoch(self):
        self._order = self.rng.permutation(len(self.faults))
        self._partner = self.rng.integers(len(self.normals), size=len(self.faults))
        self._cursor = 0

    def batch(self, size):
        idx = []
        while len(idx) < size:
            if self._cursor >= len(self._order):
                self._new_epoch()
            take = min(size - len(idx), len(self._order) - self._cursor)
            idx.extend(self._order[self._cursor:self._cursor + take])
            self._cursor += take
        idx = np.asarray(idx)
        normals = self.normals[self._partner[idx]][:, None, :]
        faults = self.faults[idx][:, None, :]
        return normals, faults


def _snapshot(generator, discriminator, g_opt, d_opt, gspec, dspec, cfg, step, condition,
              fault_label, normal_map, fault_map):
    tensors = {}
    for prefix, net in (("generator", generator), ("discriminator", discriminator)):
        tensors.update({f"{prefix}.{k}": np.array(v, dtype=np.float32) for k, v in net.state().items()})
    tensors.update(g_opt.state_tensors("optim.generator"))
    tensors.update(d_opt.state_tensors("optim.discriminator"))
    spec = {
        "generator": asdict(gspec),
        "discriminator": asdict(dspec),
        "train": asdict(cfg),
        "step": step,
        "seed": cfg.seed,
        "condition": {"rpm": condition.rpm, "load_hp": condition.load_hp},
        "fault_label": int(fault_label),
        "normalizers": {"normal": normal_map.as_dict(), "fault": fault_map.as_dict()},
        "optimizer_steps": {"generator": g_opt.state.step_count, "discriminator": d_opt.state.step_count},
    }
    return Checkpoint("n2fgan", spec, tensors)


def train(pairs, gspec, dspec, cfg, on_checkpoint=None):
    """
    Alternate one discriminator and one generator Adam step per iteration.

    Args:
        pairs: PairedBurst list from a single condition and fault class
        gspec: GeneratorSpec (input_len must equal the burst length)
        dspec: DiscriminatorSpec
        cfg: TrainConfig
        on_checkpoint: optional callable receiving a Checkpoint every
            `cfg.checkpoint_every` steps

    Returns:
        (Checkpoint, TrainTrace)
    """
    _validate_pairs(pairs, gspec)
    if dspec.input_len != gspec.input_len:
        raise ConfigurationError("generator and discriminator input lengths differ")
    condition = pairs[0].condition
    fault_label = pairs[0].fault.label
    normal_map = fit_normalizer([p.normal for p in pairs])
    fault_map = fit_normalizer([p.fault for p in pairs])

    generator = build_generator(gspec, np.random.default_rng([cfg.seed, 1]))
    discriminator = build_discriminator(dspec, np.random.default_rng([cfg.seed, 2]))
    sampler = _PairSampler(pairs, normal_map, fault_map, np.random.default_rng([cfg.seed, 3]))
    g_params = generator.parameters()
    d_params = discriminator.parameters()
    g_opt = Adam(g_params, cfg.learning_rate, cfg.beta1)
    d_opt = Adam(d_params, cfg.learning_rate, cfg.beta1)
    generator.train()
    discriminator.train()

    trace = TrainTrace()
    started = time.perf_counter()
    logger.info("training n2fgan on %d %s pairs at %s for %d steps",
                len(pairs), fault_label.label_name, condition, cfg.steps)
    for step in range(1, cfg.steps + 1):
        try:
            normal, real = sampler.batch(cfg.batch_size)
            normal, real = Tensor(normal), Tensor(real)
            fake = generator(normal)

            # running statistics follow the real pairs only
            d_real_logits = discriminator(concat_channels(normal, real))
            with discriminator.frozen_statistics():
                d_fake_logits = discriminator(concat_channels(normal, fake.detach()))
            d_total, d_real, d_fake = discriminator_loss(d_real_logits, d_fake_logits)
            if cfg.train_discriminator:
                d_opt.step(backward(d_total, d_params))

            with discriminator.frozen_statistics():
                g_logits = discriminator(concat_channels(normal, fake))
            g_total, g_adv, g_l1 = generator_loss(g_logits, fake, real, cfg.lambda_l1)
            g_opt.step(backward(g_total, g_params))
        except NumericError as exc:
            raise NumericError(str(exc), step=step) from exc

        trace.append(g_total.item(), g_adv.item(), g_l1.item(), d_total.item(), d_real.item(), d_fake.item())
        if cfg.log_every and step % cfg.log_every == 0:
            logger.info("step %d: G %.4f (adv %.4f, l1 %.4f) D %.4f",
                        step, g_total.item(), g_adv.item(), g_l1.item(), d_total.item())
        if on_checkpoint is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            on_checkpoint(_snapshot(generator, discriminator, g_opt, d_opt, gspec, dspec, cfg, step,
                                    condition, fault_label, normal_map, fault_map))
    trace.wall_time_s = time.perf_counter() - started
    checkpoint = _snapshot(generator, discriminator, g_opt, d_opt, gspec, dspec, cfg, cfg.steps,
                           condition, fault_label, normal_map, fault_map)
    return checkpoint, trace


# Generation --------------------------------------------------------------------

def _require_kind(checkpoint):
    if checkpoint.kind != "n2fgan":
        raise ConfigurationError(f"expected an n2fgan checkpoint, got {checkpoint.kind}")


def generator_spec(checkpoint):
    _require_kind(checkpoint)
    return GeneratorSpec(**checkpoint.spec["generator"])


def discriminator_spec(checkpoint):
    _require_kind(checkpoint)
    return DiscriminatorSpec(**checkpoint.spec["discriminator"])


def load_generator(checkpoint):
    generator = build_generator(generator_spec(checkpoint), np.random.default_rng(0))
    generator.load_state(checkpoint.prefixed("generator"))
    return generator


def load_discriminator(checkpoint):
    discriminator = build_discriminator(discriminator_spec(checkpoint), np.random.default_rng(0))
    discriminator.load_state(checkpoint.prefixed("discriminator"))
    return discriminator


def checkpoint_normalizers(checkpoint):
    maps = checkpoint.spec["normalizers"]
    return Normalizer(**maps["normal"]), Normalizer(**maps["fault"])


def training_condition(checkpoint):
    return Condition(**checkpoint.spec["condition"])


def generate(checkpoint, normals, seed=0, deterministic=False):
    """
    Translate normal bursts into bursts of the checkpoint's fault class.

    The generator runs in inference mode (batchnorm running statistics)
    with dropout still sampling unless `deterministic`. Inputs are scaled
    with the training normal map and outputs mapped back with the fault map.

    Returns:
        list of Burst tagged synthetic, one per input, condition copied
    """
    generator = load_generator(checkpoint)
    spec = generator.spec
    for burst in normals:
        if len(burst) != spec.input_len:
            raise DataError(f"burst length {len(burst)} != checkpoint input_len {spec.input_len}")
    if not normals:
        return []
    normal_map, fault_map = checkpoint_normalizers(checkpoint)
    fault_label = FaultClass(checkpoint.spec["fault_label"])
    generator.eval()
    generator.set_generation_noise(not deterministic, seed)

    produced = []
    with no_grad():
        for start in range(0, len(normals), GENERATION_BATCH):
            chunk = normals[start:start + GENERATION_BATCH]
            x = np.stack([normal_map.apply(b.samples) for b in chunk])[:, None, :]
            y = generator(Tensor(x)).data[:, 0, :]
            for burst, out in zip(chunk, y):
                produced.append(Burst(fault_map.invert(out).astype(np.float32), fault_label,
                                      burst.condition, SYNTHETIC_OFFSET))
    return produced
