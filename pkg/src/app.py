#!/usr/bin/env python3
"""
faultsynth command line
-----------------------
One argparse command per pipeline stage: ingest recordings, build a
surrogate dataset, train a generator, generate synthetic bursts, evaluate
classifiers on them, run the augmentation comparison, extract features,
embed them with t-SNE, sweep architectures and export bursts back to disk.

Every command that writes files also writes `config.resolved.env` and
`manifest.json` into its output directory.

Exit codes: 0 success, 1 a requested accuracy ordering does not hold,
2 user or configuration error, 3 numeric failure.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from src import n2fgan
from src.baselines import (AugmenterKind, CGanSpec, WGanGpSpec, cgan_generate, cgan_train, wgan_gp_generate,
                           wgan_gp_train)
from src.checkpoint import load_checkpoint, save_checkpoint
from src.classifiers import ClassifierConfig, ClassifierKind
from src.config import LOG_LEVEL, load_run_config
from src.errors import ConfigurationError, DataError, FaultSynthError
from src.experiments import (SWEEP_PRESETS, SWEEP_CLASSIFIERS, ConditionRow, ImbalanceSettings,
                             architecture_sweep, binary_validation, condition_split, cross_condition_rows,
                             generation_inputs, imbalance_experiment, ordering_holds, replaced_class_experiment,
                             train_and_evaluate)
from src.features import extract_batch, zscore
from src.reporting import (scatter_svg, write_box_csv, write_condition_csv, write_confusion_csv,
                           write_embedding_csv, write_features_csv, write_metrics_csv, write_sweep_csv,
                           write_trace_csv)
from src.signal_data import (FORMATS, Condition, FaultClass, add_noise, class_histogram, export, ingest,
                             read_dataset, segment, select, surrogate_dataset, write_dataset)
from src.tsne import TsneConfig, tsne
from src.utils import RunManifest, ensure_dir, file_digests

logger = logging.getLogger("faultsynth")

EXIT_OK = 0
EXIT_ORDERING = 1

DATASET_NAME = "dataset.n2fd"
SYNTHETIC_NAME = "synthetic.n2fd"
CHECKPOINT_NAME = "checkpoint.n2fc"


# Run plumbing ------------------------------------------------------------------

class Run:
    """Resolved config, output directory and manifest of one command."""

    def __init__(self, command, config, inputs=()):
        self.config = config
        self.out = ensure_dir(config["run.out_dir"])
        for path in inputs:
            if not Path(path).is_file():
                raise ConfigurationError(f"input file not found: {path}")
        self.manifest = RunManifest(command, config.digest(), file_digests(inputs))

    def path(self, name):
        return self.manifest.add_artifact(self.out / name)

    def finish(self):
        self.manifest.add_artifact(self.config.write(self.out))
        self.manifest.finish(self.out)


def _overrides(args):
    """CLI flags win over config-file keys; unset flags leave keys alone."""
    overrides = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = ",".join(str(v) for v in value) if isinstance(value, list) else value
    return overrides


FLAG_KEYS = {
    "seed": "run.seed",
    "threads": "run.threads",
    "out": "run.out_dir",
    "burst_len": "data.burst_len",
    "stride": "data.stride",
    "snr_db": "data.snr_db",
    "source_rpm": "data.source_rpm",
    "target_rpms": "data.target_rpms",
    "fault_class": "data.fault_class",
    "n_bursts": "surrogate.n_bursts",
    "rpms": "surrogate.rpms",
    "classes": "surrogate.classes",
    "steps": "train.steps",
    "epochs": "classifier.epochs",
    "classifier": "classifier.kind",
    "perplexity": "tsne.perplexity",
    "n_iter": "tsne.n_iter",
    "frameworks": "compare.frameworks",
    "repeats": "compare.repeats",
    "n_synthetic": "compare.n_synthetic",
    "scale": "compare.scale",
}


def _print_counts(bursts):
    counts = {}
    for b in bursts:
        key = (FaultClass(b.label).label_name, b.condition.rpm, b.source)
        counts[key] = counts.get(key, 0) + 1
    print(f"{len(bursts)} bursts")
    for (label, rpm, source), n in sorted(counts.items()):
        print(f"  {label:<17} {rpm:>5} rpm  {source:<9} {n}")


def _print_rows(rows):
    print(f"{'rpm':>5}  {'classifier':<12} {'accuracy':>8} {'f1':>8} {'precision':>9} {'recall':>8}")
    for row in rows:
        m = row.metrics
        print(f"{row.rpm:>5}  {row.classifier:<12} {m.accuracy:8.4f} {m.macro_f1:8.4f} "
              f"{m.macro_precision:9.4f} {m.macro_recall:8.4f}")


def _classifier_cfg(config):
    return ClassifierConfig.from_run_config(config)


# Commands ----------------------------------------------------------------------

def cmd_ingest(args, config):
    run = Run("ingest", config, args.inputs)
    condition = Condition(args.rpm, args.load_hp) if args.load_hp is not None else Condition.for_rpm(args.rpm)
    stride = config["data.stride"] or None
    if stride is not None and stride < config["data.burst_len"] and not config["data.allow_overlap"]:
        raise ConfigurationError("stride below burst_len overlaps bursts; set data.allow_overlap=true")
    rng = np.random.default_rng(config["run.seed"])
    bursts = []
    for path in args.inputs:
        record = ingest(path, args.format, condition, args.label, config["data.sample_rate_hz"])
        bursts.extend(segment(record, config["data.burst_len"], stride))
    if np.isfinite(config["data.snr_db"]):
        bursts = [add_noise(b, config["data.snr_db"], rng) for b in bursts]
    write_dataset(run.path(args.name), bursts, config["data.burst_len"])
    _print_counts(bursts)
    run.finish()
    return EXIT_OK


def cmd_surrogate(args, config):
    run = Run("surrogate", config)
    classes = [FaultClass.parse(c) for c in config["surrogate.classes"]]
    conditions = [Condition.for_rpm(rpm) for rpm in config["surrogate.rpms"]]
    bursts = surrogate_dataset(classes, conditions, config["surrogate.n_bursts"], config["data.burst_len"],
                               config["run.seed"])
    write_dataset(run.path(args.name), bursts)
    _print_counts(bursts)
    run.finish()
    return EXIT_OK


def _train_n2fgan(run, bursts, config):
    cfg = n2fgan.TrainConfig.from_run_config(config)
    burst_len = len(bursts[0])
    gspec = n2fgan.GeneratorSpec(burst_len, config["generator.block_widths"], config["generator.latent_dim"],
                                 config["generator.dropout_p"], config["generator.skip_connections"])
    dspec = n2fgan.DiscriminatorSpec(burst_len, config["discriminator.block_widths"])
    pairs = n2fgan.prepare_pairs(bursts, config["data.fault_class"], config["data.source_rpm"], cfg.seed)

    def keep(checkpoint):
        save_checkpoint(checkpoint, run.path(f"checkpoint_step{checkpoint.step:06d}.n2fc"))

    return n2fgan.train(pairs, gspec, dspec, cfg, on_checkpoint=keep)


def _train_cgan(run, bursts, config):
    cfg = n2fgan.TrainConfig.from_run_config(config)
    spec = CGanSpec(len(bursts[0]), config["cgan.noise_dim"], len(FaultClass), config["cgan.generator_widths"],
                    config["cgan.discriminator_widths"])
    return cgan_train(select(bursts, rpm=config["data.source_rpm"]), spec, cfg)


def _train_wgan_gp(run, bursts, config):
    cfg = n2fgan.TrainConfig.from_run_config(config)
    spec = WGanGpSpec(len(bursts[0]), config["wgan.noise_dim"], config["wgan.generator_widths"],
                      config["wgan.critic_widths"], config["wgan.gp_weight"], config["wgan.critic_steps_per_gen"],
                      config["wgan.finite_difference_gp"])
    real = select(bursts, config["data.fault_class"], config["data.source_rpm"])
    return wgan_gp_train(real, spec, cfg)


TRAINERS = {
    AugmenterKind.N2FGAN: _train_n2fgan,
    AugmenterKind.CGAN: _train_cgan,
    AugmenterKind.WGAN_GP: _train_wgan_gp,
}


def cmd_train(args, config):
    framework = AugmenterKind.parse(args.framework)
    if framework not in TRAINERS:
        raise ConfigurationError(f"{framework.value} has nothing to train")
    run = Run(f"train {framework.value}", config, [args.dataset])
    bursts = read_dataset(args.dataset)
    if not bursts:
        raise DataError(f"{args.dataset} holds no bursts")
    checkpoint, trace = TRAINERS[framework](run, bursts, config)
    save_checkpoint(checkpoint, run.path(CHECKPOINT_NAME))
    write_trace_csv(run.path("trace.csv"), trace)
    print(f"trained {framework.value} for {len(trace)} steps in {trace.wall_time_s:.1f} s")
    print("final losses: " + ", ".join(f"{c}={v:.4f}" for c, v in zip(trace.columns, trace.rows[-1])))
    run.finish()
    return EXIT_OK


def cmd_generate(args, config):
    inputs = [args.checkpoint] + ([args.dataset] if args.dataset else [])
    run = Run("generate", config, inputs)
    checkpoint = load_checkpoint(args.checkpoint)
    seed = config["run.seed"]
    rng = np.random.default_rng([seed, 31])
    real = read_dataset(args.dataset) if args.dataset else []
    if checkpoint.kind == "n2fgan":
        if not args.dataset:
            raise ConfigurationError("n2fgan generation translates normal bursts: pass --dataset")
        rpm = args.rpm if args.rpm is not None else config["data.target_rpms"][0]
        normals = select(real, FaultClass.NORMAL, rpm)
        if not normals:
            raise DataError(f"no normal bursts at {rpm} rpm in {args.dataset}")
        synthetic = n2fgan.generate(checkpoint, generation_inputs(normals, args.n, rng), seed=seed,
                                    deterministic=config["generator.deterministic"])
    elif checkpoint.kind == "cgan":
        synthetic = cgan_generate(checkpoint, config["data.fault_class"], args.n, rng)
    else:
        synthetic = wgan_gp_generate(checkpoint, args.n, rng)
    bursts = (list(real) if args.with_real else []) + synthetic
    write_dataset(run.path(args.name), bursts)
    _print_counts(bursts)
    run.finish()
    return EXIT_OK


def _evaluate_rows(args, config, kinds):
    cfg = _classifier_cfg(config)
    seed = config["run.seed"]
    bursts = read_dataset(args.dataset)
    rpms = config["data.target_rpms"]
    if args.mode == "replaced-class" and args.checkpoint:
        return cross_condition_rows(load_checkpoint(args.checkpoint), bursts, rpms, kinds, cfg, seed,
                                    config["generator.deterministic"])
    synthetic = read_dataset(args.synthetic) if args.synthetic else []
    rows = []
    for rpm in rpms:
        data = condition_split(bursts, rpm, seed)
        for kind in kinds:
            if args.mode == "plain":
                metrics = train_and_evaluate(kind, data.train, data.test, cfg)
            else:
                at_rpm = select(synthetic, rpm=rpm)
                if not at_rpm:
                    raise DataError(f"no synthetic bursts at {rpm} rpm")
                metrics = replaced_class_experiment(kind, data.train, at_rpm, data.test, cfg)
            rows.append(ConditionRow(rpm, kind.value, metrics))
    return rows


def _evaluate_binary(run, args, config):
    if not args.synthetic:
        raise ConfigurationError("binary mode scores synthetic bursts: pass --synthetic")
    synthetic = read_dataset(args.synthetic)
    label = synthetic[0].label if synthetic else FaultClass.parse(config["data.fault_class"])
    real = [b for b in read_dataset(args.dataset) if b.label in (FaultClass.NORMAL, label) and not b.synthetic]
    result = binary_validation(real, synthetic, _classifier_cfg(config))
    print(f"{result.fault_fraction:.4f} of {result.n_synthetic} synthetic bursts labelled "
          f"{FaultClass(label).label_name}")
    run.finish()
    return EXIT_OK


def cmd_evaluate(args, config):
    inputs = [p for p in (args.dataset, args.synthetic, args.checkpoint) if p]
    run = Run(f"evaluate {args.mode}", config, inputs)
    if args.mode == "binary":
        return _evaluate_binary(run, args, config)
    if args.mode == "replaced-class" and not (args.checkpoint or args.synthetic):
        raise ConfigurationError("replaced-class needs --checkpoint or --synthetic")
    kinds = [ClassifierKind.parse(k) for k in (args.kinds or [config["classifier.kind"]])]
    rows = _evaluate_rows(args, config, kinds)
    write_condition_csv(run.path("metrics.csv"), rows)
    for row in rows:
        write_confusion_csv(run.path(f"confusion_{row.rpm}_{row.classifier}.csv"), row.metrics.confusion_matrix)
    _print_rows(rows)
    run.finish()
    return EXIT_OK


def _parse_ordering(text):
    better, sep, worse = text.partition(">")
    if not sep or not better.strip() or not worse.strip():
        raise ConfigurationError(f"ordering must read BETTER>WORSE, got {text!r}")
    return better.strip().lower().replace("-", "_"), worse.strip().lower().replace("-", "_")


def cmd_compare(args, config):
    run = Run("compare", config, [args.dataset])
    orderings = [_parse_ordering(text) for text in args.assert_ordering or ()]
    frameworks = [f.lower().replace("-", "_") for f in config["compare.frameworks"]]
    for better, worse in orderings:
        for name in (better, worse):
            if name not in frameworks:
                raise ConfigurationError(f"--assert-ordering names {name}, which is not being compared")
    bursts = read_dataset(args.dataset)
    report = imbalance_experiment(frameworks, bursts, ImbalanceSettings.from_run_config(config),
                                  n_repeats=config["compare.repeats"], threads=config["run.threads"])
    write_metrics_csv(run.path("runs.csv"), report)
    write_box_csv(run.path("box.csv"), report.aggregate)
    print(f"{'framework':<10} {'mean':>8} {'std':>8} {'median':>8}")
    for framework, agg in report.aggregate.items():
        print(f"{framework:<10} {agg['accuracy_mean']:8.4f} {agg['accuracy_std']:8.4f} {agg['box']['median']:8.4f}")
    run.finish()
    status = EXIT_OK
    for better, worse in orderings:
        if not ordering_holds(report, better, worse):
            print(f"ordering violated: {better} does not beat {worse}", file=sys.stderr)
            status = EXIT_ORDERING
    return status


def _feature_bursts(args):
    bursts = read_dataset(args.dataset)
    if args.synthetic:
        bursts = bursts + read_dataset(args.synthetic)
    if args.labels:
        wanted = {FaultClass.parse(label) for label in args.labels}
        bursts = [b for b in bursts if b.label in wanted]
    if args.rpm is not None:
        bursts = select(bursts, rpm=args.rpm)
    if not bursts:
        raise DataError("no bursts left after filtering")
    return bursts


def _feature_inputs(args):
    return [p for p in (args.dataset, args.synthetic) if p]


def cmd_features(args, config):
    run = Run("features", config, _feature_inputs(args))
    bursts = _feature_bursts(args)
    matrix = np.stack([v.as_array() for v in extract_batch(bursts)])
    write_features_csv(run.path("features.csv"), bursts, matrix)
    print(f"{len(bursts)} feature rows")
    run.finish()
    return EXIT_OK


def cmd_tsne(args, config):
    run = Run("tsne", config, _feature_inputs(args))
    bursts = _feature_bursts(args)
    matrix = zscore(np.stack([v.as_array() for v in extract_batch(bursts)]))
    result = tsne(matrix, TsneConfig.from_run_config(config))
    write_embedding_csv(run.path("embedding.csv"), bursts, result.embedding)
    scatter_svg(run.path("tsne.svg"), result.embedding, [int(b.label) for b in bursts],
                [b.source for b in bursts])
    print(f"embedded {len(bursts)} bursts, final KL {result.kl_trace[-1]:.4f}")
    run.finish()
    return EXIT_OK


def cmd_sweep(args, config):
    run = Run("sweep", config, args.datasets)
    datasets = {}
    for path in args.datasets:
        bursts = read_dataset(path)
        if bursts:
            datasets[len(bursts[0])] = bursts
    presets = [p for p in SWEEP_PRESETS if p.input_len in datasets]
    if args.presets:
        names = {p.name: p for p in SWEEP_PRESETS}
        missing = [n for n in args.presets if n not in names]
        if missing:
            raise ConfigurationError(f"unknown presets: {', '.join(missing)}")
        presets = [names[n] for n in args.presets]
    if not presets:
        raise DataError(f"no preset matches the burst lengths {sorted(datasets)}")
    rows = architecture_sweep(presets, datasets, config["data.source_rpm"], config["data.target_rpms"],
                              FaultClass.parse(config["data.fault_class"]), n2fgan.TrainConfig.from_run_config(config),
                              _classifier_cfg(config), SWEEP_CLASSIFIERS, config["generator.latent_dim"],
                              config["run.seed"])
    write_sweep_csv(run.path("sweep.csv"), rows)
    for row in rows:
        print(f"{row.preset.name:<40} {row.rpm:>5} {row.classifier:<9} {row.metrics.accuracy:.4f} "
              f"{row.train_seconds:8.1f} s")
    run.finish()
    return EXIT_OK


def cmd_export(args, config):
    run = Run("export", config, [args.dataset])
    bursts = read_dataset(args.dataset)
    if args.label is not None:
        bursts = select(bursts, args.label)
    if args.rpm is not None:
        bursts = select(bursts, rpm=args.rpm)
    if not bursts:
        raise DataError("no bursts left after filtering")
    series = np.concatenate([b.samples for b in bursts])
    suffix = ".csv" if args.format == "csv-single-column" else ".f32"
    export(series, run.path(f"{args.name}{suffix}"), args.format)
    print(f"exported {len(bursts)} bursts ({series.size} samples); histogram {dict(class_histogram(bursts))}")
    run.finish()
    return EXIT_OK


# Parser ------------------------------------------------------------------------

def _common(parser):
    parser.add_argument("--config", help="KEY=VALUE run configuration file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", type=int)
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")


def _data_flags(parser):
    parser.add_argument("--source-rpm", type=int)
    parser.add_argument("--target-rpms", type=int, nargs="+")
    parser.add_argument("--fault-class")


def _filters(parser):
    parser.add_argument("--dataset", required=True)
    parser.add_argument("--synthetic", help="dataset of synthetic bursts to include")
    parser.add_argument("--labels", nargs="+", help="keep only these classes")
    parser.add_argument("--rpm", type=int, help="keep only bursts at this speed")


def build_parser():
    parser = argparse.ArgumentParser(prog="faultsynth", description="Normal-to-fault vibration burst synthesis")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("ingest", help="segment recordings into a dataset")
    _common(p)
    p.add_argument("inputs", nargs="+")
    p.add_argument("--format", choices=FORMATS, default="csv-single-column")
    p.add_argument("--label", required=True)
    p.add_argument("--rpm", type=int, required=True)
    p.add_argument("--load-hp", type=int)
    p.add_argument("--burst-len", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--name", default=DATASET_NAME)
    p.set_defaults(handler=cmd_ingest)

    p = commands.add_parser("surrogate", help="synthesise a labelled surrogate dataset")
    _common(p)
    p.add_argument("--classes", nargs="+")
    p.add_argument("--rpms", type=int, nargs="+")
    p.add_argument("--n-bursts", type=int)
    p.add_argument("--burst-len", type=int)
    p.add_argument("--name", default=DATASET_NAME)
    p.set_defaults(handler=cmd_surrogate)

    p = commands.add_parser("train", help="train n2fgan, cgan or wgan-gp")
    _common(p)
    _data_flags(p)
    p.add_argument("framework", choices=("n2fgan", "cgan", "wgan-gp"))
    p.add_argument("--dataset", required=True)
    p.add_argument("--steps", type=int)
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser("generate", help="generate synthetic bursts from a checkpoint")
    _common(p)
    _data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", help="dataset holding the normal bursts to translate")
    p.add_argument("--rpm", type=int, help="speed of the normal bursts to translate")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--with-real", action="store_true", help="write the input bursts before the synthetic ones")
    p.add_argument("--name", default=SYNTHETIC_NAME)
    p.set_defaults(handler=cmd_generate)

    p = commands.add_parser("evaluate", help="score classifiers on real or replaced-class test sets")
    _common(p)
    _data_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", choices=("replaced-class", "plain", "binary"), default="replaced-class")
    p.add_argument("--checkpoint", help="n2fgan checkpoint to generate the replaced class with")
    p.add_argument("--synthetic", help="pre-generated synthetic bursts")
    p.add_argument("--kinds", nargs="+", help="classifier kinds (default classifier.kind)")
    p.add_argument("--epochs", type=int)
    p.set_defaults(handler=cmd_evaluate)

    p = commands.add_parser("compare", help="augmentation frameworks on an imbalanced split")
    _common(p)
    _data_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--frameworks", nargs="+")
    p.add_argument("--repeats", type=int)
    p.add_argument("--n-synthetic", type=int)
    p.add_argument("--scale", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--assert-ordering", action="append", metavar="BETTER>WORSE")
    p.set_defaults(handler=cmd_compare)

    p = commands.add_parser("features", help="time and frequency features per burst")
    _common(p)
    _filters(p)
    p.set_defaults(handler=cmd_features)

    p = commands.add_parser("tsne", help="t-SNE embedding and scatter plot of burst features")
    _common(p)
    _filters(p)
    p.add_argument("--perplexity", type=float)
    p.add_argument("--n-iter", type=int)
    p.set_defaults(handler=cmd_tsne)

    p = commands.add_parser("sweep", help="generator/discriminator architecture sweep")
    _common(p)
    _data_flags(p)
    p.add_argument("--datasets", nargs="+", required=True, help="one dataset per burst length")
    p.add_argument("--presets", nargs="+", help="preset names (default: every preset with data)")
    p.add_argument("--steps", type=int)
    p.add_argument("--epochs", type=int)
    p.set_defaults(handler=cmd_sweep)

    p = commands.add_parser("export", help="write bursts back out as a signal file")
    _common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", choices=FORMATS, default="csv-single-column")
    p.add_argument("--label")
    p.add_argument("--rpm", type=int)
    p.add_argument("--name", default="export")
    p.set_defaults(handler=cmd_export)
    return parser


def configure_logging(level):
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or LOG_LEVEL)
    try:
        config = load_run_config(args.config, _overrides(args))
        return args.handler(args, config)
    except FaultSynthError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
