"""
Configuration file for faultsynth
---------------------------------
Manages environment variables, application settings and run configuration
documents. Run configs use the same KEY=VALUE dialect as the `.env` file and
are parsed with python-dotenv.
"""

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import dotenv_values, load_dotenv

from src.errors import ConfigurationError

# Load environment variables from .env file
load_dotenv()

# Application settings
SEED = int(os.getenv("N2F_SEED", 0))
THREADS = int(os.getenv("N2F_THREADS", 1))
OUT_DIR = os.getenv("N2F_OUT_DIR", "runs")
LOG_LEVEL = os.getenv("N2F_LOG_LEVEL", "INFO").upper()

# Data settings
BURST_LEN = int(os.getenv("N2F_BURST_LEN", 512))
SAMPLE_RATE_HZ = float(os.getenv("N2F_SAMPLE_RATE_HZ", 12000))
REAL_DATA_DIR = os.getenv("N2F_REAL_DATA_DIR")

# Feature flags
RUN_SLOW = os.getenv("N2F_RUN_SLOW", "False").lower() in ("true", "t", "1")


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "t", "1", "yes", "y"):
        return True
    if lowered in ("false", "f", "0", "no", "n"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_ints(text):
    return tuple(int(part) for part in text.split(",") if part.strip())


def _parse_strs(text):
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_PARSERS = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "str": str,
    "ints": _parse_ints,
    "strs": _parse_strs,
}

# key -> (parser name, default)
SCHEMA = {
    "run.seed": ("int", SEED),
    "run.threads": ("int", THREADS),
    "run.out_dir": ("str", OUT_DIR),
    "data.dataset": ("str", ""),
    "data.burst_len": ("int", BURST_LEN),
    "data.stride": ("int", 0),
    "data.allow_overlap": ("bool", False),
    "data.snr_db": ("float", float("inf")),
    "data.sample_rate_hz": ("float", SAMPLE_RATE_HZ),
    "data.source_rpm": ("int", 1797),
    "data.target_rpms": ("ints", (1772,)),
    "data.fault_class": ("str", "inner"),
    "surrogate.n_bursts": ("int", 200),
    "surrogate.rpms": ("ints", (1797, 1772)),
    "surrogate.classes": ("strs", ("normal", "inner", "ball", "outer_centered",
                                   "outer_orthogonal", "outer_opposite")),
    "generator.block_widths": ("ints", (256, 128, 64)),
    "generator.latent_dim": ("int", 64),
    "generator.dropout_p": ("float", 0.5),
    "generator.skip_connections": ("bool", True),
    "generator.deterministic": ("bool", False),
    "discriminator.block_widths": ("ints", (64, 128, 256)),
    "train.steps": ("int", 4000),
    "train.learning_rate": ("float", 2e-4),
    "train.beta1": ("float", 0.5),
    "train.batch_size": ("int", 16),
    "train.lambda_l1": ("float", 100.0),
    "train.checkpoint_every": ("int", 1000),
    "train.log_every": ("int", 100),
    "cgan.noise_dim": ("int", 64),
    "cgan.generator_widths": ("ints", (128, 64, 32)),
    "cgan.discriminator_widths": ("ints", (32, 64, 128)),
    "wgan.noise_dim": ("int", 64),
    "wgan.generator_widths": ("ints", (128, 64, 32)),
    "wgan.critic_widths": ("ints", (32, 64, 128)),
    "wgan.gp_weight": ("float", 10.0),
    "wgan.critic_steps_per_gen": ("int", 5),
    "wgan.finite_difference_gp": ("bool", False),
    "classifier.kind": ("str", "convlstm"),
    "classifier.epochs": ("int", 30),
    "classifier.batch_size": ("int", 32),
    "classifier.learning_rate": ("float", 1e-3),
    "classifier.beta1": ("float", 0.9),
    "tsne.perplexity": ("float", 30.0),
    "tsne.n_iter": ("int", 1000),
    "tsne.learning_rate": ("float", 200.0),
    "tsne.early_exaggeration": ("float", 12.0),
    "tsne.exaggeration_iters": ("int", 250),
    "compare.frameworks": ("strs", ("none", "classical", "cgan", "wgan_gp", "n2fgan")),
    "compare.repeats": ("int", 20),
    "compare.n_synthetic": ("int", 100),
    "compare.scale": ("float", 1.0),
}


@dataclass(frozen=True)
class RunConfig:
    """Fully-resolved run configuration (every schema key present)."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def section(self, prefix):
        """Return the keys under `prefix.` with the prefix stripped."""
        head = prefix + "."
        return {k[len(head):]: v for k, v in self.values.items() if k.startswith(head)}

    def dumps(self):
        """Canonical KEY=VALUE text, sorted, defaults included."""
        lines = [f"{key}={_format(self.values[key])}" for key in sorted(self.values)]
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()

    def write(self, directory):
        path = Path(directory) / "config.resolved.env"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")
        return path


def _coerce(key, raw):
    if key not in SCHEMA:
        raise ConfigurationError(f"unknown config key: {key}")
    kind, _ = SCHEMA[key]
    if not isinstance(raw, str):
        return raw
    try:
        return _PARSERS[kind](raw)
    except ValueError as e:
        raise ConfigurationError(f"bad value for {key}: {raw!r} ({e})") from e


def load_run_config(path=None, overrides=None):
    """
    Resolve a run configuration.

    Args:
        path: optional KEY=VALUE document; unknown keys are rejected
        overrides: mapping of keys to values (strings or already-typed),
            applied after the file, as CLI flags are

    Returns:
        RunConfig: every schema key with its resolved value
    """
    values = {key: default for key, (_, default) in SCHEMA.items()}
    if path is not None:
        if not Path(path).exists():
            raise ConfigurationError(f"config file not found: {path}")
        for key, raw in dotenv_values(path).items():
            values[key] = _coerce(key, raw if raw is not None else "")
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        values[key] = _coerce(key, raw)
    config = RunConfig(values)
    issues = validate_config(config)
    if issues:
        raise ConfigurationError("; ".join(issues))
    return config


def validate_config(config=None):
    """Validate the configuration and return a list of any issues."""
    issues = []

    if config is None:
        if THREADS < 1:
            issues.append("N2F_THREADS must be at least 1.")
        if REAL_DATA_DIR and not Path(REAL_DATA_DIR).is_dir():
            issues.append(f"N2F_REAL_DATA_DIR={REAL_DATA_DIR} is not a directory. The real-data run will be skipped.")
        return issues

    if config["data.burst_len"] < 2:
        issues.append("data.burst_len must be at least 2.")
    if config["data.stride"] < 0:
        issues.append("data.stride must be non-negative (0 means burst_len).")
    if config["train.steps"] < 1:
        issues.append("train.steps must be at least 1.")
    if config["train.lambda_l1"] < 0:
        issues.append("train.lambda_l1 must be non-negative.")
    if not 0.0 <= config["generator.dropout_p"] < 1.0:
        issues.append("generator.dropout_p must lie in [0, 1).")
    if config["wgan.gp_weight"] < 0:
        issues.append("wgan.gp_weight must be non-negative.")
    if config["run.threads"] < 1:
        issues.append("run.threads must be at least 1.")
    if config["tsne.n_iter"] < 250:
        issues.append("tsne.n_iter must be at least 250.")
    if config["compare.repeats"] < 1:
        issues.append("compare.repeats must be at least 1.")

    return issues
