"""
Tests for ingestion, segmentation, pairing, splitting and the N2FD container
"""

import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.errors import CheckpointError, DataError, IngestionError
from src.features import class_centroids, extract_batch, feature_matrix, nearest_centroid
from src.signal_data import (SYNTHETIC_OFFSET, Burst, Condition, FaultClass, PairedBurst, SignalRecord,
                             add_noise, class_histogram, denormalize, export, fit_normalizer, ingest,
                             make_pairs, normalize, read_dataset, segment, segment_count, select, split,
                             surrogate_dataset, surrogate_generate, imbalanced_request, write_dataset)
from src.spectral import fft_magnitude

C1797 = Condition.for_rpm(1797)
C1772 = Condition.for_rpm(1772)


def record(n, label=FaultClass.NORMAL, condition=C1797):
    return SignalRecord(np.arange(n, dtype=np.float32), 12000.0, condition, label)


def bursts_of(label, condition, count, length=8, start=0.0):
    return [Burst(np.full(length, start + i, dtype=np.float32), label, condition, i * length)
            for i in range(count)]


def test_fault_class_parsing():
    assert FaultClass.parse("inner") is FaultClass.INNER
    assert FaultClass.parse("health") is FaultClass.NORMAL
    assert FaultClass.parse("outer2") is FaultClass.OUTER_ORTHOGONAL
    assert FaultClass.parse("Outer-Opposite") is FaultClass.OUTER_OPPOSITE
    assert FaultClass.parse(2) is FaultClass.BALL
    with pytest.raises(DataError):
        FaultClass.parse("cage")


def test_condition_validation_and_reference_loads():
    assert C1772.load_hp == 1
    assert Condition.for_rpm(1730).load_hp == 3
    with pytest.raises(DataError):
        Condition(0)
    with pytest.raises(DataError):
        Condition(1797, 300)


def test_ingest_csv_and_segment(tmp_path):
    path = tmp_path / "signal.csv"
    path.write_text("# header comment\n" + "\n".join(str(0.5 * i) for i in range(1000)) + "\n")
    rec = ingest(path, "csv-single-column", C1797, "inner")
    assert rec.label is FaultClass.INNER
    bursts = segment(rec, 200, 200)
    assert len(bursts) == 5
    assert [b.source_offset for b in bursts] == [0, 200, 400, 600, 800]
    assert bursts[1].samples[0] == pytest.approx(100.0)
    assert not bursts[0].synthetic


def test_ingest_reports_line_of_bad_value(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1.0\n2.0\nabc\n")
    with pytest.raises(IngestionError) as err:
        ingest(path, "csv-single-column", C1797, "normal")
    assert err.value.line == 3
    assert "line 3" in str(err.value)


def test_ingest_rejects_nan_and_missing_files(tmp_path):
    path = tmp_path / "nan.csv"
    path.write_text("1.0\nnan\n")
    with pytest.raises(IngestionError):
        ingest(path, "csv-single-column", C1797, "normal")
    with pytest.raises(IngestionError):
        ingest(tmp_path / "absent.csv", "csv-single-column", C1797, "normal")


def test_ingest_raw_reports_truncation_offset(tmp_path):
    path = tmp_path / "signal.f32"
    path.write_bytes(np.arange(3, dtype="<f4").tobytes() + b"\x00\x01")
    with pytest.raises(IngestionError) as err:
        ingest(path, "raw-f32le", C1797, "normal")
    assert err.value.byte_offset == 12


@pytest.mark.parametrize("fmt", ["csv-single-column", "raw-f32le"])
def test_export_then_ingest_is_bitwise(tmp_path, rng, fmt):
    series = (rng.normal(size=300) * 1e3).astype(np.float32)
    path = export(series, tmp_path / "series", fmt)
    back = ingest(path, fmt, C1797, "normal")
    assert back.series.tobytes() == series.tobytes()


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 400), st.integers(1, 64), st.integers(1, 64))
def test_segment_count_formula(length, burst_len, stride):
    if burst_len > length:
        with pytest.raises(DataError):
            segment(record(length), burst_len, stride)
        return
    bursts = segment(record(length), burst_len, stride)
    assert len(bursts) == segment_count(length, burst_len, stride) == (length - burst_len) // stride + 1
    assert all(len(b) == burst_len for b in bursts)
    last = bursts[-1]
    assert last.source_offset + burst_len <= length


def test_segment_default_stride_is_burst_len():
    assert len(segment(record(1000), 256)) == 3


def test_add_noise_hits_target_snr(rng):
    t = np.arange(200_000)
    burst = Burst(np.sin(2 * np.pi * t / 50).astype(np.float32), FaultClass.NORMAL, C1797)
    noisy = add_noise(burst, 10.0, rng)
    noise = noisy.samples.astype(np.float64) - burst.samples
    snr = 10 * np.log10(np.mean(burst.samples.astype(np.float64) ** 2) / np.mean(noise ** 2))
    assert snr == pytest.approx(10.0, abs=0.1)
    assert add_noise(burst, float("inf"), rng) is burst


def test_add_noise_rejects_silent_bursts(rng):
    with pytest.raises(DataError):
        add_noise(Burst(np.zeros(16, np.float32), FaultClass.NORMAL, C1797), 5.0, rng)


def test_pairs_share_condition(rng):
    normals = bursts_of(FaultClass.NORMAL, C1797, 3) + bursts_of(FaultClass.NORMAL, C1772, 3, start=100)
    faults = bursts_of(FaultClass.INNER, C1797, 4) + bursts_of(FaultClass.INNER, C1772, 2)
    pairs = make_pairs(normals, faults, rng)
    assert len(pairs) == 6
    assert all(p.normal.condition == p.fault.condition for p in pairs)


def test_pairing_requires_matching_condition(rng):
    with pytest.raises(DataError):
        make_pairs(bursts_of(FaultClass.NORMAL, C1797, 2), bursts_of(FaultClass.BALL, C1772, 2), rng)
    with pytest.raises(DataError):
        PairedBurst(bursts_of(FaultClass.NORMAL, C1797, 1)[0], bursts_of(FaultClass.BALL, C1772, 1)[0])
    with pytest.raises(DataError):
        PairedBurst(bursts_of(FaultClass.BALL, C1797, 1)[0], bursts_of(FaultClass.BALL, C1797, 1)[0])


def _pool():
    return (bursts_of(FaultClass.NORMAL, C1797, 20) + bursts_of(FaultClass.NORMAL, C1772, 20)
            + bursts_of(FaultClass.INNER, C1797, 10) + bursts_of(FaultClass.BALL, C1772, 10))


def test_split_is_disjoint_exact_and_seeded():
    pool = _pool()
    train = {FaultClass.NORMAL: 12, (FaultClass.INNER, 1797): 5}
    test = {(FaultClass.NORMAL, 1772): 6, FaultClass.BALL: 4}
    first = split(pool, train, test, seed=3)
    again = split(pool, train, test, seed=3)
    assert {id(b) for b in first.train}.isdisjoint({id(b) for b in first.test})
    assert class_histogram(first.train) == {0: 12, 1: 5}
    assert class_histogram(first.test) == {0: 6, 2: 4}
    assert all(b.condition.rpm == 1772 for b in select(first.test, FaultClass.NORMAL))
    assert [id(b) for b in first.train] == [id(b) for b in again.train]
    other = split(pool, train, test, seed=4)
    assert [id(b) for b in first.train] != [id(b) for b in other.train]


def test_split_reports_every_deficit():
    with pytest.raises(DataError) as err:
        split(_pool(), {(FaultClass.INNER, 1797): 11}, {FaultClass.OUTER_CENTERED: 1}, seed=0)
    message = str(err.value)
    assert "inner@1797" in message and "short by 1" in message
    assert "outer_centered" in message


def test_imbalanced_request_shape():
    train, test = imbalanced_request(1797, 1772, FaultClass.INNER)
    assert train[(FaultClass.NORMAL, 1797)] + train[(FaultClass.NORMAL, 1772)] == 3000
    assert train[(FaultClass.INNER, 1797)] == 150
    assert (FaultClass.INNER, 1772) not in train
    assert train[(FaultClass.BALL, 1772)] == 150
    assert set(test) == {(label, 1772) for label in FaultClass}
    assert all(count == 150 for count in test.values())
    small_train, _ = imbalanced_request(1797, 1772, "inner", scale=0.1)
    assert small_train[(FaultClass.INNER, 1797)] == 15


def test_normalize_round_trip(rng):
    burst = Burst(rng.normal(2.0, 3.0, size=64).astype(np.float32), FaultClass.BALL, C1797)
    scaled, normalizer = normalize(burst)
    assert scaled.samples.min() == pytest.approx(-1.0) and scaled.samples.max() == pytest.approx(1.0)
    np.testing.assert_allclose(denormalize(scaled, normalizer).samples, burst.samples, atol=1e-5)
    with pytest.raises(DataError):
        fit_normalizer([Burst(np.ones(4, np.float32), FaultClass.BALL, C1797)])


def test_dataset_container_is_byte_exact(tmp_path, small_bursts):
    bursts = small_bursts[:10] + [small_bursts[10].with_samples(small_bursts[10].samples,
                                                                 source_offset=SYNTHETIC_OFFSET)]
    path = write_dataset(tmp_path / "data.n2fd", bursts)
    back = read_dataset(path)
    assert len(back) == len(bursts)
    for a, b in zip(bursts, back):
        assert a.samples.tobytes() == b.samples.tobytes()
        assert (a.label, a.condition, a.source_offset) == (b.label, b.condition, b.source_offset)
    assert back[-1].synthetic and back[-1].source == "synthetic"
    write_dataset(tmp_path / "again.n2fd", back)
    assert (tmp_path / "again.n2fd").read_bytes() == path.read_bytes()


def test_dataset_container_rejects_corruption(tmp_path, small_bursts):
    path = write_dataset(tmp_path / "data.n2fd", small_bursts[:3])
    raw = path.read_bytes()
    (tmp_path / "magic.n2fd").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "short.n2fd").write_bytes(raw[:-5])
    with pytest.raises(CheckpointError):
        read_dataset(tmp_path / "magic.n2fd")
    with pytest.raises(CheckpointError):
        read_dataset(tmp_path / "short.n2fd")


def test_surrogate_counts_and_determinism():
    classes = list(FaultClass)
    conditions = [C1797, C1772]
    bursts = surrogate_dataset(classes, conditions, 5, 128, seed=11)
    assert len(bursts) == 6 * 2 * 5
    assert class_histogram(bursts) == {int(c): 10 for c in classes}
    again = surrogate_dataset(classes, conditions, 5, 128, seed=11)
    assert all(a.samples.tobytes() == b.samples.tobytes() for a, b in zip(bursts, again))
    other = surrogate_dataset(classes, conditions, 5, 128, seed=12)
    assert bursts[0].samples.tobytes() != other[0].samples.tobytes()


def test_surrogate_classes_are_separable_by_features():
    rng = np.random.default_rng(5)
    train, test = [], []
    for label in FaultClass:
        bursts = surrogate_generate(label, C1797, 40, 512, rng)
        train += bursts[:20]
        test += bursts[20:]
    centroids = class_centroids(train)
    scale = feature_matrix(np.stack([b.samples for b in train])).std(axis=0)
    predicted = nearest_centroid(feature_matrix(np.stack([b.samples for b in test])), centroids, scale)
    accuracy = np.mean(predicted == np.array([int(b.label) for b in test]))
    assert accuracy >= 0.85


def test_surrogate_kurtosis_separates_smooth_and_impulsive_classes():
    rng = np.random.default_rng(6)
    normal = [v.t_kurtosis for v in extract_batch(surrogate_generate(FaultClass.NORMAL, C1797, 60, 512, rng))]
    inner = [v.t_kurtosis for v in extract_batch(surrogate_generate(FaultClass.INNER, C1797, 60, 512, rng))]
    assert abs(np.mean(normal) - 3.0) <= 0.5
    assert np.mean(inner) > 3.5


def test_surrogate_dominant_bin_tracks_rpm():
    length = 16384
    peaks = {}
    for rpm in (1797, 1772, 1730):
        burst = surrogate_generate(FaultClass.NORMAL, Condition.for_rpm(rpm), 1, length, np.random.default_rng(rpm))[0]
        peaks[rpm] = int(np.argmax(fft_magnitude(burst.samples)))
        assert peaks[rpm] == round(rpm / 60.0 * length / 12000.0)
    assert len(set(peaks.values())) == 3


@pytest.mark.real_data
def test_converted_recordings_ingest():
    files = sorted(Path(os.environ["N2F_REAL_DATA_DIR"]).glob("*.csv"))
    assert files, "N2F_REAL_DATA_DIR holds no .csv recordings"
    for path in files:
        bursts = segment(ingest(path, "csv-single-column", C1797, "normal"), 512)
        assert bursts and all(np.isfinite(b.samples).all() for b in bursts)
