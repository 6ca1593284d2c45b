"""
Signal data for faultsynth
--------------------------
Ingests vibration recordings, cuts them into fixed-length bursts, injects
noise at a target SNR, pairs normal and fault bursts per operating condition,
builds reproducible train/test splits and reads/writes the N2FD dataset
container. A surrogate generator stands in for the physical testbed so the
whole pipeline runs without the external dataset.
"""

import logging
import struct
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

from src.errors import CheckpointError, DataError, IngestionError

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"N2FD"
DATASET_VERSION = 1
SYNTHETIC_OFFSET = 0xFFFFFFFF
REFERENCE_RPMS = (1797, 1772, 1750, 1730)
REFERENCE_LOADS = {1797: 0, 1772: 1, 1750: 2, 1730: 3}
BURST_PRESETS = (200, 256, 512, 1024)
FORMATS = ("csv-single-column", "raw-f32le")


class FaultClass(IntEnum):
    NORMAL = 0
    INNER = 1
    BALL = 2
    OUTER_CENTERED = 3
    OUTER_ORTHOGONAL = 4
    OUTER_OPPOSITE = 5

    @property
    def label_name(self):
        return self.name.lower()

    @classmethod
    def parse(cls, value):
        """Accept an id, a name (`inner`) or a FaultClass."""
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        text = str(value).strip().lower().replace("-", "_")
        if text.isdigit():
            return cls(int(text))
        aliases = {"health": "normal", "healthy": "normal", "outer1": "outer_centered",
                   "outer2": "outer_orthogonal", "outer3": "outer_opposite"}
        text = aliases.get(text, text)
        try:
            return cls[text.upper()]
        except KeyError:
            raise DataError(f"unknown class label: {value!r}") from None


ClassLabel = FaultClass


@dataclass(frozen=True, order=True)
class Condition:
    rpm: int
    load_hp: int = 0

    def __post_init__(self):
        if self.rpm <= 0:
            raise DataError(f"rpm must be positive, got {self.rpm}")
        if not 0 <= self.load_hp <= 255:
            raise DataError(f"load_hp out of range: {self.load_hp}")

    @classmethod
    def for_rpm(cls, rpm):
        """The condition a reference-testbed speed was recorded under."""
        return cls(int(rpm), REFERENCE_LOADS.get(int(rpm), 0))

    def __str__(self):
        return f"{self.rpm}rpm/{self.load_hp}hp"


@dataclass
class SignalRecord:
    series: np.ndarray
    sample_rate_hz: float
    condition: Condition
    label: FaultClass
    path: str = ""

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise DataError("sample_rate_hz must be positive")


@dataclass(eq=False)
class Burst:
    samples: np.ndarray
    label: FaultClass
    condition: Condition
    source_offset: int = 0

    @property
    def synthetic(self):
        return self.source_offset == SYNTHETIC_OFFSET

    @property
    def source(self):
        return "synthetic" if self.synthetic else "real"

    def __len__(self):
        return len(self.samples)

    def with_samples(self, samples, **changes):
        return replace(self, samples=np.asarray(samples, dtype=np.float32), **changes)


@dataclass(eq=False)
class PairedBurst:
    normal: Burst
    fault: Burst

    def __post_init__(self):
        if self.normal.label != FaultClass.NORMAL:
            raise DataError("paired normal burst must carry the normal label")
        if self.fault.label == FaultClass.NORMAL:
            raise DataError("paired fault burst must carry a fault label")
        if self.normal.condition != self.fault.condition:
            raise DataError(f"pair condition mismatch: {self.normal.condition} vs {self.fault.condition}")
        if len(self.normal) != len(self.fault):
            raise DataError("paired bursts differ in length")

    @property
    def condition(self):
        return self.normal.condition


@dataclass
class DatasetSplit:
    train: list
    test: list
    seed: int


@dataclass(frozen=True)
class Normalizer:
    """Affine map sending [low, high] onto [-1, 1]."""

    low: float
    high: float

    def apply(self, x):
        return (2.0 * (np.asarray(x, dtype=np.float64) - self.low) / (self.high - self.low) - 1.0)

    def invert(self, y):
        return (np.asarray(y, dtype=np.float64) + 1.0) * 0.5 * (self.high - self.low) + self.low

    def as_dict(self):
        return {"low": float(self.low), "high": float(self.high)}


# Ingestion -------------------------------------------------------------------

def ingest(path, fmt, condition, label, sample_rate_hz=12000.0):
    """
    Read a recording from disk.

    Args:
        path: file to read
        fmt: "csv-single-column" (one sample per line, "#" lines skipped)
            or "raw-f32le" (little-endian float32 stream)
        condition: Condition the recording was made under
        label: class of the recording

    Returns:
        SignalRecord
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError("file not found", path=path)
    if fmt == "csv-single-column":
        values = []
        with open(path, "r", encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                text = line.strip()
                if not text or text.startswith("#"):
                    continue
                try:
                    value = float(text)
                except ValueError:
                    raise IngestionError(f"cannot parse {text!r} as a number", path=path, line=line_no) from None
                if not np.isfinite(value):
                    raise IngestionError("non-finite sample", path=path, line=line_no)
                values.append(value)
        series = np.asarray(values, dtype=np.float32)
    elif fmt == "raw-f32le":
        raw = path.read_bytes()
        if len(raw) % 4:
            raise IngestionError("truncated float32 stream", path=path, byte_offset=len(raw) - len(raw) % 4)
        series = np.frombuffer(raw, dtype="<f4").astype(np.float32)
        bad = np.flatnonzero(~np.isfinite(series))
        if bad.size:
            raise IngestionError("non-finite sample", path=path, byte_offset=int(bad[0]) * 4)
    else:
        raise IngestionError(f"unknown format {fmt!r}", path=path)
    if series.size == 0:
        raise IngestionError("empty series", path=path)
    logger.info("ingested %d samples from %s", series.size, path)
    return SignalRecord(series, float(sample_rate_hz), condition, FaultClass.parse(label), str(path))


def export(series, path, fmt):
    """Write a series so that `ingest` reads it back bitwise."""
    series = np.asarray(series, dtype=np.float32)
    path = Path(path)
    if fmt == "csv-single-column":
        lines = (np.format_float_scientific(v, unique=True) for v in series)
        path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    elif fmt == "raw-f32le":
        path.write_bytes(series.astype("<f4").tobytes())
    else:
        raise IngestionError(f"unknown format {fmt!r}", path=path)
    return path


# Segmentation and noise --------------------------------------------------------

def segment_count(length, burst_len, stride):
    return (length - burst_len) // stride + 1


def segment(record, burst_len, stride=None):
    """Cut bursts at offsets 0, stride, 2*stride, ...; the partial tail is dropped."""
    stride = burst_len if not stride else stride
    if stride < 1 or burst_len < 1:
        raise DataError("burst_len and stride must be >= 1")
    length = len(record.series)
    if burst_len > length:
        raise DataError(f"burst_len {burst_len} exceeds series length {length}")
    bursts = []
    for i in range(segment_count(length, burst_len, stride)):
        offset = i * stride
        bursts.append(Burst(record.series[offset:offset + burst_len].astype(np.float32),
                            record.label, record.condition, offset))
    return bursts


def add_noise(burst, snr_db, rng):
    """Additive white Gaussian noise with power P_signal / 10**(snr_db/10)."""
    if np.isinf(snr_db) and snr_db > 0:
        return burst
    x = burst.samples.astype(np.float64)
    power = float(np.mean(x * x))
    if power <= 0.0:
        raise DataError("cannot add noise at a target SNR to a zero-power burst")
    noise_std = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    return burst.with_samples(x + rng.normal(0.0, noise_std, size=x.shape))


# Pairing and splitting ---------------------------------------------------------

def make_pairs(normals, faults, rng):
    """Pair every fault burst with a uniformly drawn normal burst of its condition."""
    if not normals or not faults:
        raise DataError("make_pairs needs at least one normal and one fault burst")
    by_condition = {}
    for burst in normals:
        by_condition.setdefault(burst.condition, []).append(burst)
    pairs = []
    for fault in faults:
        pool = by_condition.get(fault.condition)
        if not pool:
            raise DataError(f"no normal bursts for condition {fault.condition}")
        pairs.append(PairedBurst(pool[int(rng.integers(len(pool)))], fault))
    return pairs


def _split_key(key):
    if isinstance(key, tuple):
        label, rpm = key
        return FaultClass.parse(label), int(rpm)
    return FaultClass.parse(key), None


def split(bursts, per_class_train, per_class_test, seed):
    """
    Disjoint, seeded train/test selection.

    Keys of the count maps are a class (any condition) or a (class, rpm)
    tuple. Test requests are served first, then train requests, each from
    the bursts not yet taken, in a seeded random order.
    """
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(bursts))
    taken = np.zeros(len(bursts), dtype=bool)
    deficits = []
    selected = {"train": [], "test": []}

    def draw(key, count, side):
        label, rpm = _split_key(key)
        chosen = []
        for idx in order:
            if len(chosen) == count:
                break
            b = bursts[idx]
            if taken[idx] or b.label != label or (rpm is not None and b.condition.rpm != rpm):
                continue
            chosen.append(idx)
        if len(chosen) < count:
            where = f"{label.label_name}" + (f"@{rpm}" if rpm is not None else "")
            deficits.append(f"{side} {where}: need {count}, short by {count - len(chosen)}")
        taken[chosen] = True
        selected[side].extend(chosen)

    for key, count in per_class_test.items():
        draw(key, int(count), "test")
    for key, count in per_class_train.items():
        draw(key, int(count), "train")
    if deficits:
        raise DataError("insufficient samples: " + "; ".join(deficits))
    return DatasetSplit([bursts[i] for i in selected["train"]],
                        [bursts[i] for i in selected["test"]], seed)


def imbalanced_request(source_rpm=1797, target_rpm=1772, target_class=FaultClass.INNER, scale=1.0,
                   health_train=3000, fault_train=150, test_per_class=150):
    """
    The imbalanced training/test configuration used to compare augmenters.

    Health trains on both speeds. The augmented fault class has real
    training data at the source speed only; every other fault class trains
    at the target speed. Everything is tested at the target speed. `scale`
    shrinks all counts for desk-scale runs.
    """
    target_class = FaultClass.parse(target_class)

    def n(count):
        return max(1, int(round(count * scale)))

    train = {(FaultClass.NORMAL, source_rpm): n(health_train) // 2,
             (FaultClass.NORMAL, target_rpm): n(health_train) - n(health_train) // 2}
    test = {}
    for label in FaultClass:
        if label != FaultClass.NORMAL:
            rpm = source_rpm if label == target_class else target_rpm
            train[(label, rpm)] = n(fault_train)
        test[(label, target_rpm)] = n(test_per_class)
    return train, test


def class_histogram(bursts):
    return Counter(int(b.label) for b in bursts)


def select(bursts, label=None, rpm=None):
    label = None if label is None else FaultClass.parse(label)
    return [b for b in bursts
            if (label is None or b.label == label) and (rpm is None or b.condition.rpm == rpm)]


def stack_samples(bursts):
    return np.stack([b.samples for b in bursts]).astype(np.float32)


# Normalization -----------------------------------------------------------------

def fit_normalizer(bursts):
    """Dataset-level [min, max] normalizer over every sample of `bursts`."""
    data = stack_samples(bursts)
    low, high = float(data.min()), float(data.max())
    if high <= low:
        raise DataError("cannot normalize constant data")
    return Normalizer(low, high)


def normalize(burst, normalizer=None):
    """
    Scale a burst into [-1, 1].

    Without a normalizer the burst's own min/max define the map.

    Returns:
        (Burst, Normalizer): the scaled burst and the map needed to invert it
    """
    if normalizer is None:
        low, high = float(burst.samples.min()), float(burst.samples.max())
        if high <= low:
            raise DataError("cannot normalize a constant burst")
        normalizer = Normalizer(low, high)
    return burst.with_samples(normalizer.apply(burst.samples)), normalizer


def denormalize(burst, normalizer):
    return burst.with_samples(normalizer.invert(burst.samples))


# Surrogate signals -------------------------------------------------------------

@dataclass(frozen=True)
class SurrogateRecipe:
    """
    Fixed recipe for the surrogate testbed.

    Normal: two shaft-synchronous sinusoids (1x and 3.2x the rotation
    frequency) plus Gaussian noise. Faults add a periodic train of
    exponentially decaying ring-downs at a class-specific repetition rate
    (multiple of the rotation frequency) and resonance. Amplitudes scale with
    rpm / 1797.
    """

    sample_rate_hz: float = 12000.0
    fundamental_amp: float = 0.5
    harmonic_amp: float = 0.35
    harmonic_ratio: float = 3.2
    noise_std: float = 0.5
    ringdown_ms: float = 1.5
    jitter: float = 0.01
    rate_multiplier: dict = field(default_factory=lambda: {
        FaultClass.INNER: 5.4,
        FaultClass.BALL: 4.9,
        FaultClass.OUTER_CENTERED: 3.6,
        FaultClass.OUTER_ORTHOGONAL: 3.6 * 1.1,
        FaultClass.OUTER_OPPOSITE: 3.6 * 1.2,
    })
    resonance_hz: dict = field(default_factory=lambda: {
        FaultClass.INNER: 3000.0,
        FaultClass.BALL: 2200.0,
        FaultClass.OUTER_CENTERED: 3600.0,
        FaultClass.OUTER_ORTHOGONAL: 1600.0,
        FaultClass.OUTER_OPPOSITE: 4200.0,
    })
    impulse_amp: dict = field(default_factory=lambda: {
        FaultClass.INNER: 3.0,
        FaultClass.BALL: 2.0,
        FaultClass.OUTER_CENTERED: 2.5,
        FaultClass.OUTER_ORTHOGONAL: 2.5,
        FaultClass.OUTER_OPPOSITE: 2.5,
    })


def surrogate_record(label, condition, n_samples, rng, recipe=None):
    recipe = recipe or SurrogateRecipe()
    label = FaultClass.parse(label)
    fs = recipe.sample_rate_hz
    t = np.arange(n_samples) / fs
    rotation_hz = condition.rpm / 60.0
    scale = condition.rpm / 1797.0
    phase1, phase2 = rng.uniform(0.0, 2.0 * np.pi, size=2)
    x = scale * (recipe.fundamental_amp * np.sin(2.0 * np.pi * rotation_hz * t + phase1)
                 + recipe.harmonic_amp * np.sin(2.0 * np.pi * recipe.harmonic_ratio * rotation_hz * t + phase2))
    x = x + rng.normal(0.0, recipe.noise_std * scale, size=n_samples)

    if label != FaultClass.NORMAL:
        period = 1.0 / (recipe.rate_multiplier[label] * rotation_hz)
        tau = recipe.ringdown_ms / 1000.0
        tail = int(np.ceil(8.0 * tau * fs))
        ring_t = np.arange(tail) / fs
        ring = np.exp(-ring_t / tau) * np.sin(2.0 * np.pi * recipe.resonance_hz[label] * ring_t)
        amp = recipe.impulse_amp[label] * scale
        onset = rng.uniform(0.0, period)
        while onset < n_samples / fs:
            start = int(round((onset + rng.normal(0.0, recipe.jitter * period)) * fs))
            if 0 <= start < n_samples:
                stop = min(n_samples, start + tail)
                x[start:stop] += amp * ring[:stop - start]
            onset += period
    return SignalRecord(x.astype(np.float32), fs, condition, label, "surrogate")


def surrogate_generate(label, condition, n_bursts, burst_len, rng, recipe=None):
    """Generate `n_bursts` consecutive surrogate bursts from one synthetic recording."""
    if n_bursts < 1:
        raise DataError("n_bursts must be >= 1")
    record = surrogate_record(label, condition, n_bursts * burst_len, rng, recipe)
    return segment(record, burst_len, burst_len)


def surrogate_dataset(classes, conditions, n_bursts, burst_len, seed, recipe=None):
    """Every (class, condition) combination, each from its own seeded stream."""
    bursts = []
    for label in classes:
        for condition in conditions:
            label = FaultClass.parse(label)
            rng = np.random.default_rng([seed, int(label), condition.rpm, condition.load_hp])
            bursts.extend(surrogate_generate(label, condition, n_bursts, burst_len, rng, recipe))
    return bursts


# N2FD container ----------------------------------------------------------------

_HEADER = struct.Struct("<4sHII")


def _record_dtype(burst_len):
    return np.dtype([("label", "u1"), ("rpm", "<u2"), ("load_hp", "u1"),
                     ("source_offset", "<u4"), ("samples", "<f4", (burst_len,))])


def write_dataset(path, bursts, burst_len=None):
    """Write bursts as an N2FD container (byte-exact, order preserved)."""
    if burst_len is None:
        if not bursts:
            raise DataError("cannot infer burst length of an empty dataset")
        burst_len = len(bursts[0])
    records = np.zeros(len(bursts), dtype=_record_dtype(burst_len))
    for i, b in enumerate(bursts):
        if len(b) != burst_len:
            raise DataError(f"burst {i} has length {len(b)}, expected {burst_len}")
        records[i] = (int(b.label), b.condition.rpm, b.condition.load_hp, b.source_offset, b.samples)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, burst_len, len(bursts)))
        f.write(records.tobytes())
    return path


def read_dataset(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated dataset header")
    magic, version, burst_len, count = _HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != DATASET_VERSION:
        raise CheckpointError(f"{path}: unsupported dataset version {version}")
    dtype = _record_dtype(burst_len)
    body = raw[_HEADER.size:]
    if len(body) != count * dtype.itemsize:
        raise CheckpointError(f"{path}: expected {count} bursts, body holds {len(body) / dtype.itemsize:.2f}")
    records = np.frombuffer(body, dtype=dtype)
    return [Burst(rec["samples"].astype(np.float32), FaultClass(int(rec["label"])),
                  Condition(int(rec["rpm"]), int(rec["load_hp"])), int(rec["source_offset"]))
            for rec in records]
