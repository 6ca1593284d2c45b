"""
Experiment runners for faultsynth
---------------------------------
Protocols that turn synthetic bursts into numbers:

- replaced-class: train a classifier on real data, test it on a set where
  one class's real bursts are swapped for synthetic ones
- cross-condition: generate a fault class for unseen speeds and run the
  replaced-class protocol per speed and classifier
- imbalance comparison: augment an under-represented class with each
  framework, train ConvLSTM and score it over repeated seeded splits
- architecture sweep: the cross-condition protocol over generator and
  discriminator presets, with training time
- binary validation: the share of synthetic bursts a fault-vs-normal LSTM
  labels as fault
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from src import n2fgan
from src.baselines import AugmentSettings, augment_dataset
from src.classifiers import (ClassifierConfig, ClassifierKind, build_classifier, evaluate, predict,
                             train_classifier)
from src.errors import ConfigurationError, DataError
from src.metrics import box_summary
from src.signal_data import FaultClass, select, split, imbalanced_request

logger = logging.getLogger(__name__)

N_CLASSES = len(FaultClass)
NO_AUGMENTATION = "none"
SWEEP_CLASSIFIERS = (ClassifierKind.CONVLSTM, ClassifierKind.CNN, ClassifierKind.CONVAE)


# Replaced-class ----------------------------------------------------------------

def replace_class(test_set, synthetic):
    """
    Swap the target class's real test bursts for synthetic ones, in order.

    When the counts differ a warning is logged and only as many bursts as
    both sides provide are kept.
    """
    labels = {b.label for b in synthetic}
    if len(labels) != 1:
        raise DataError("synthetic bursts must share exactly one class label")
    target = labels.pop()
    real_count = sum(1 for b in test_set if b.label == target)
    if real_count != len(synthetic):
        logger.warning("replacing %d real %s bursts with %d synthetic ones; keeping %d",
                       real_count, target.label_name, len(synthetic), min(real_count, len(synthetic)))
    if test_set and len(synthetic[0]) != len(test_set[0]):
        raise DataError("synthetic and real bursts differ in length")
    replacements = iter(synthetic)
    out = []
    for burst in test_set:
        if burst.label != target:
            out.append(burst)
            continue
        substitute = next(replacements, None)
        if substitute is not None:
            out.append(substitute)
    return out


def _input_len(bursts):
    return len(bursts[0])


def train_and_evaluate(kind, train_set, test_set, cfg=None, n_classes=N_CLASSES):
    """Plain protocol: train `kind` on `train_set`, score it on `test_set`."""
    cfg = cfg or ClassifierConfig()
    network = build_classifier(kind, n_classes, _input_len(train_set), np.random.default_rng([cfg.seed, 51]))
    train_classifier(network, train_set, cfg)
    return evaluate(network, test_set)


def replaced_class_experiment(kind, train_set, synthetic, test_set, cfg=None):
    """Train on all-real data, test with the synthetic class substituted."""
    if not synthetic:
        raise DataError("replaced_class_experiment needs synthetic bursts")
    return train_and_evaluate(kind, train_set, replace_class(test_set, synthetic), cfg)


# Cross-condition ---------------------------------------------------------------

@dataclass
class ConditionRow:
    rpm: int
    classifier: str
    metrics: object


def condition_split(bursts, rpm, seed, test_fraction=0.5):
    """Per-class split of the bursts recorded at `rpm`."""
    at_rpm = select(bursts, rpm=rpm)
    if not at_rpm:
        raise DataError(f"no bursts at {rpm} rpm")
    counts = {}
    for b in at_rpm:
        counts[b.label] = counts.get(b.label, 0) + 1
    if len(counts) < 2:
        raise DataError(f"need at least two classes at {rpm} rpm")
    test = {(label, rpm): max(1, int(n * test_fraction)) for label, n in counts.items()}
    train = {(label, rpm): n - test[(label, rpm)] for label, n in counts.items()}
    return split(at_rpm, train, test, seed)


def generation_inputs(normals, n, rng):
    """`n` normal bursts, drawn with replacement (and a warning) when too few exist."""
    if not normals:
        raise DataError("no normal bursts to translate")
    if n > len(normals):
        logger.warning("need %d normal bursts, have %d: sampling with replacement", n, len(normals))
        return [normals[i] for i in rng.integers(len(normals), size=n)]
    return [normals[i] for i in rng.permutation(len(normals))[:n]]


def cross_condition_rows(checkpoint, bursts, target_rpms, kinds, cfg=None, seed=0, deterministic=False):
    """
    For each target speed: split the real bursts, translate test-split normal
    bursts with the checkpoint and run the replaced-class protocol for every
    classifier kind.

    Returns:
        list of ConditionRow, ordered by speed then classifier
    """
    cfg = cfg or ClassifierConfig(seed=seed)
    fault_label = FaultClass(checkpoint.spec["fault_label"])
    rows = []
    for rpm in target_rpms:
        data = condition_split(bursts, rpm, seed)
        demand = sum(1 for b in data.test if b.label == fault_label)
        if demand == 0:
            raise DataError(f"no {fault_label.label_name} test bursts at {rpm} rpm")
        normals = [b for b in data.test if b.label == FaultClass.NORMAL]
        inputs = generation_inputs(normals, demand, np.random.default_rng([seed, rpm]))
        synthetic = n2fgan.generate(checkpoint, inputs, seed=seed, deterministic=deterministic)
        for kind in kinds:
            kind = ClassifierKind.parse(kind)
            metrics = replaced_class_experiment(kind, data.train, synthetic, data.test, cfg)
            logger.info("%d rpm %s: accuracy %.4f", rpm, kind.value, metrics.accuracy)
            rows.append(ConditionRow(rpm, kind.value, metrics))
    return rows


# Binary validation -------------------------------------------------------------

@dataclass
class BinaryValidation:
    fault_fraction: float
    n_synthetic: int


def binary_validation(train_set, synthetic, cfg=None):
    """
    Train the binary LSTM on real normal (0) vs real fault (1) bursts and
    report the share of `synthetic` it labels fault.
    """
    if not synthetic:
        raise DataError("binary_validation needs synthetic bursts")
    cfg = cfg or ClassifierConfig()
    labels = [0 if b.label == FaultClass.NORMAL else 1 for b in train_set]
    network = build_classifier(ClassifierKind.BINARY_LSTM, 2, _input_len(train_set),
                               np.random.default_rng([cfg.seed, 52]))
    train_classifier(network, train_set, cfg, labels=labels)
    predictions = predict(network, synthetic)
    return BinaryValidation(float(np.mean(predictions == 1)), len(synthetic))


# Imbalance comparison ----------------------------------------------------------

@dataclass
class ImbalanceSettings:
    source_rpm: int = 1797
    target_rpm: int = 1772
    target_class: FaultClass = FaultClass.INNER
    n_synthetic: int = 100
    scale: float = 1.0
    augment: AugmentSettings = field(default_factory=AugmentSettings)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)

    @classmethod
    def from_run_config(cls, config):
        return cls(
            source_rpm=config["data.source_rpm"],
            target_rpm=config["data.target_rpms"][0],
            target_class=FaultClass.parse(config["data.fault_class"]),
            n_synthetic=config["compare.n_synthetic"],
            scale=config["compare.scale"],
            augment=AugmentSettings.from_run_config(config),
            classifier=ClassifierConfig.from_run_config(config),
        )

    def request(self):
        return imbalanced_request(self.source_rpm, self.target_rpm, self.target_class, self.scale,
                              fault_train=150, test_per_class=150)

    def synthetic_count(self):
        return max(0, int(round(self.n_synthetic * self.scale)))


@dataclass
class RunRow:
    framework: str
    repeat: int
    seed: int
    metrics: object


@dataclass
class ImbalanceReport:
    rows: list
    aggregate: dict

    def accuracies(self, framework):
        return [row.metrics.accuracy for row in self.rows if row.framework == framework]


def imbalance_run(framework, bursts, settings, seed):
    """One repeat: seeded imbalanced split, augmentation, ConvLSTM training and scoring."""
    train_counts, test_counts = settings.request()
    data = split(bursts, train_counts, test_counts, seed)
    train_set = data.train
    if framework != NO_AUGMENTATION:
        augment = replace(settings.augment, seed=seed, source_rpm=settings.source_rpm,
                          target_rpm=settings.target_rpm, train=replace(settings.augment.train, seed=seed))
        train_set = augment_dataset(framework, train_set, settings.target_class,
                                    settings.synthetic_count(), augment)
    cfg = replace(settings.classifier, seed=seed)
    return train_and_evaluate(ClassifierKind.CONVLSTM, train_set, data.test, cfg)


def _imbalance_job(job):
    framework, repeat, seed, bursts, settings = job
    return framework, repeat, seed, imbalance_run(framework, bursts, settings, seed)


def aggregate_rows(rows):
    """mean/std and a min/q1/median/q3/max box per framework, in first-seen order."""
    aggregate = {}
    for framework in dict.fromkeys(row.framework for row in rows):
        acc = np.array([row.metrics.accuracy for row in rows if row.framework == framework])
        chosen = [row.metrics for row in rows if row.framework == framework]
        aggregate[framework] = {
            "accuracy_mean": float(acc.mean()),
            "accuracy_std": float(acc.std()),
            "f1_mean": float(np.mean([m.macro_f1 for m in chosen])),
            "precision_mean": float(np.mean([m.macro_precision for m in chosen])),
            "recall_mean": float(np.mean([m.macro_recall for m in chosen])),
            "box": box_summary(acc),
        }
    return aggregate


def imbalance_experiment(frameworks, bursts, settings=None, n_repeats=20, seeds=None, threads=1):
    """
    Every framework over `n_repeats` seeded repeats.

    Repeat r uses seed `seeds[r]` (default r) for the split, augmenter and
    classifier. With `threads` > 1 runs fan out over a process pool; rows
    are ordered by framework then repeat regardless of completion order.
    """
    settings = settings or ImbalanceSettings()
    seeds = list(range(n_repeats)) if seeds is None else list(seeds)
    if len(seeds) != n_repeats:
        raise ConfigurationError("one seed per repeat is required")
    frameworks = [str(f).strip().lower().replace("-", "_") for f in frameworks]
    jobs = [(framework, r, seeds[r], bursts, settings) for framework in frameworks for r in range(n_repeats)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_imbalance_job, jobs))
    else:
        results = [_imbalance_job(job) for job in jobs]
    order = {f: i for i, f in enumerate(frameworks)}
    results.sort(key=lambda item: (order[item[0]], item[1]))
    rows = [RunRow(framework, repeat, seed, metrics) for framework, repeat, seed, metrics in results]
    for framework in frameworks:
        logger.info("%s: mean accuracy %.4f", framework,
                    float(np.mean([r.metrics.accuracy for r in rows if r.framework == framework])))
    return ImbalanceReport(rows, aggregate_rows(rows))


def ordering_holds(report, better, worse):
    """True when the mean accuracy of `better` exceeds that of `worse`."""
    return report.aggregate[better]["accuracy_mean"] > report.aggregate[worse]["accuracy_mean"]


# Architecture sweep ------------------------------------------------------------

@dataclass(frozen=True)
class SweepPreset:
    generator_widths: tuple
    discriminator_widths: tuple
    input_len: int

    @property
    def name(self):
        g = "-".join(str(w) for w in self.generator_widths)
        d = "-".join(str(w) for w in self.discriminator_widths)
        return f"G{len(self.generator_widths) + 1}({g})/D{len(self.discriminator_widths)}({d})/L{self.input_len}"


GENERATOR_PRESETS = ((256, 64), (256, 128, 64), (512, 256, 128, 64))
DISCRIMINATOR_PRESETS = ((64, 256), (64, 128, 256), (64, 128, 256, 512))
SWEEP_PRESETS = tuple(SweepPreset(g, d, length)
                      for g, d in zip(GENERATOR_PRESETS, DISCRIMINATOR_PRESETS)
                      for length in (256, 512, 1024))


@dataclass
class SweepRow:
    preset: SweepPreset
    rpm: int
    classifier: str
    metrics: object
    train_seconds: float
    generator_parameters: int


def architecture_sweep(presets, datasets, source_rpm, target_rpms, fault_label, train_cfg,
                       classifier_cfg=None, kinds=SWEEP_CLASSIFIERS, latent_dim=64, seed=0):
    """
    Train N2FGAN per preset and run the cross-condition protocol with it.

    Args:
        presets: SweepPreset sequence
        datasets: mapping input_len -> bursts of that length
        source_rpm: training speed
        target_rpms: speeds to generate for
        fault_label: class to synthesise
        train_cfg: n2fgan.TrainConfig shared by every preset

    Returns:
        list of SweepRow
    """
    rows = []
    for preset in presets:
        if preset.input_len not in datasets:
            raise DataError(f"no dataset with burst length {preset.input_len}")
        bursts = datasets[preset.input_len]
        gspec = n2fgan.GeneratorSpec(preset.input_len, preset.generator_widths, latent_dim)
        dspec = n2fgan.DiscriminatorSpec(preset.input_len, preset.discriminator_widths)
        pairs = n2fgan.prepare_pairs(bursts, fault_label, source_rpm, seed)
        checkpoint, trace = n2fgan.train(pairs, gspec, dspec, train_cfg)
        parameters = n2fgan.load_generator(checkpoint).parameter_count()
        logger.info("preset %s trained in %.1f s", preset.name, trace.wall_time_s)
        for row in cross_condition_rows(checkpoint, bursts, target_rpms, kinds, classifier_cfg, seed):
            rows.append(SweepRow(preset, row.rpm, row.classifier, row.metrics, trace.wall_time_s, parameters))
    return rows
