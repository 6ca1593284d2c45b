"""
End-to-end tests for the faultsynth command line
"""

import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from src.app import EXIT_ORDERING, main
from src.signal_data import FaultClass, read_dataset

TINY_NETS = ["--set", "generator.block_widths=8,8", "--set", "generator.latent_dim=4",
             "--set", "discriminator.block_widths=4,8", "--set", "train.batch_size=4",
             "--set", "train.log_every=0"]


def surrogate(out, *extra):
    code = main(["surrogate", "--out", str(out), "--burst-len", "64", *extra])
    assert code == 0
    return out / "dataset.n2fd"


def test_ingest_segments_and_writes_manifest(tmp_path, capsys):
    signal = tmp_path / "signal.csv"
    signal.write_text("\n".join(str(np.sin(i / 5.0)) for i in range(1000)) + "\n")
    out = tmp_path / "ingest"
    code = main(["ingest", str(signal), "--label", "inner", "--rpm", "1797", "--burst-len", "200",
                 "--out", str(out)])
    assert code == 0
    assert "5 bursts" in capsys.readouterr().out
    bursts = read_dataset(out / "dataset.n2fd")
    assert len(bursts) == 5 and all(b.label is FaultClass.INNER for b in bursts)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "ingest"
    assert str(signal) in manifest["inputs"]
    assert any(a.endswith("dataset.n2fd") for a in manifest["artifacts"])
    assert (out / "config.resolved.env").read_text().count("data.burst_len=200") == 1


def test_ingest_overlap_needs_opt_in(tmp_path):
    signal = tmp_path / "signal.csv"
    signal.write_text("\n".join(str(i % 7) for i in range(400)) + "\n")
    args = ["ingest", str(signal), "--label", "normal", "--rpm", "1797", "--burst-len", "100",
            "--stride", "50", "--out", str(tmp_path / "o")]
    assert main(args) == 2
    assert main(args + ["--set", "data.allow_overlap=true"]) == 0
    assert len(read_dataset(tmp_path / "o" / "dataset.n2fd")) == 7


def test_missing_input_and_bad_override_exit_2(tmp_path, capsys):
    assert main(["ingest", str(tmp_path / "absent.csv"), "--label", "inner", "--rpm", "1797",
                 "--out", str(tmp_path / "o")]) == 2
    assert "error:" in capsys.readouterr().err
    assert main(["surrogate", "--out", str(tmp_path / "s"), "--set", "no_equals_sign"]) == 2
    assert main(["surrogate", "--out", str(tmp_path / "s"), "--set", "train.stepz=3"]) == 2


def test_surrogate_counts(tmp_path):
    path = surrogate(tmp_path / "s", "--n-bursts", "3", "--rpms", "1797", "1772", "--classes", "normal", "ball")
    bursts = read_dataset(path)
    assert len(bursts) == 12
    assert {b.label for b in bursts} == {FaultClass.NORMAL, FaultClass.BALL}


def test_train_generate_evaluate_pipeline(tmp_path):
    data = surrogate(tmp_path / "s", "--n-bursts", "8", "--classes", "normal", "inner")
    train_dir = tmp_path / "train"
    code = main(["train", "n2fgan", "--dataset", str(data), "--steps", "3", "--out", str(train_dir),
                 "--set", "train.checkpoint_every=2", *TINY_NETS])
    assert code == 0
    trace = (train_dir / "trace.csv").read_text().splitlines()
    assert trace[0].startswith("step,generator_total")
    assert len(trace) == 1 + 3
    assert (train_dir / "checkpoint_step000002.n2fc").is_file()

    gen_dir = tmp_path / "gen"
    assert main(["generate", "--checkpoint", str(train_dir / "checkpoint.n2fc"), "--dataset", str(data),
                 "--rpm", "1772", "--n", "5", "--out", str(gen_dir)]) == 0
    synthetic = read_dataset(gen_dir / "synthetic.n2fd")
    assert len(synthetic) == 5
    assert all(b.synthetic and b.label is FaultClass.INNER and b.condition.rpm == 1772 for b in synthetic)

    eval_dir = tmp_path / "eval"
    assert main(["evaluate", "--dataset", str(data), "--synthetic", str(gen_dir / "synthetic.n2fd"),
                 "--kinds", "cnn", "--epochs", "1", "--target-rpms", "1772", "--out", str(eval_dir)]) == 0
    assert (eval_dir / "metrics.csv").read_text().splitlines()[0].startswith("rpm,classifier,accuracy")
    assert (eval_dir / "confusion_1772_cnn.csv").is_file()


@pytest.mark.parametrize("framework", ["cgan", "wgan-gp"])
def test_train_baseline_frameworks(tmp_path, framework):
    data = surrogate(tmp_path / "s", "--n-bursts", "6", "--classes", "normal", "inner", "--rpms", "1797")
    out = tmp_path / framework
    code = main(["train", framework, "--dataset", str(data), "--steps", "2", "--out", str(out),
                 "--set", "train.batch_size=4", "--set", "train.log_every=0",
                 "--set", "cgan.generator_widths=8,4", "--set", "cgan.discriminator_widths=4,8",
                 "--set", "wgan.generator_widths=8,4", "--set", "wgan.critic_widths=4,8",
                 "--set", "wgan.critic_steps_per_gen=1", "--set", "cgan.noise_dim=4", "--set", "wgan.noise_dim=4"])
    assert code == 0
    assert main(["generate", "--checkpoint", str(out / "checkpoint.n2fc"), "--n", "3",
                 "--out", str(tmp_path / "g")]) == 0
    assert len(read_dataset(tmp_path / "g" / "synthetic.n2fd")) == 3


def test_numeric_failure_exits_3(tmp_path, capsys):
    data = surrogate(tmp_path / "s", "--n-bursts", "4", "--classes", "normal", "inner", "--rpms", "1797")
    code = main(["train", "n2fgan", "--dataset", str(data), "--steps", "3", "--out", str(tmp_path / "t"),
                 "--set", "train.learning_rate=1e38", *TINY_NETS])
    assert code == 3
    assert "non-finite" in capsys.readouterr().err


def test_tsne_writes_well_formed_svg(tmp_path):
    data = surrogate(tmp_path / "s", "--n-bursts", "10", "--classes", "normal", "inner", "ball",
                     "--rpms", "1797")
    out = tmp_path / "tsne"
    assert main(["tsne", "--dataset", str(data), "--perplexity", "5", "--n-iter", "250", "--out", str(out)]) == 0
    root = ET.parse(out / "tsne.svg").getroot()
    assert root.tag.endswith("svg")
    assert len((out / "embedding.csv").read_text().splitlines()) == 31
    assert main(["features", "--dataset", str(data), "--labels", "ball", "--out", str(tmp_path / "f")]) == 0
    assert len((tmp_path / "f" / "features.csv").read_text().splitlines()) == 11


def test_tsne_perplexity_too_large(tmp_path, capsys):
    data = surrogate(tmp_path / "s", "--n-bursts", "3", "--classes", "normal", "inner", "--rpms", "1797")
    assert main(["tsne", "--dataset", str(data), "--out", str(tmp_path / "t")]) == 2
    assert "--perplexity" in capsys.readouterr().err


def test_compare_ordering_exit_codes(tmp_path):
    data = surrogate(tmp_path / "s", "--n-bursts", "40")
    common = ["compare", "--dataset", str(data), "--frameworks", "none", "classical", "--repeats", "1",
              "--scale", "0.02", "--epochs", "1"]
    assert main(common + ["--out", str(tmp_path / "a"), "--assert-ordering", "n2fgan>none"]) == 2
    assert main(common + ["--out", str(tmp_path / "b"), "--assert-ordering", "none>none"]) == EXIT_ORDERING
    runs = (tmp_path / "b" / "runs.csv").read_text().splitlines()
    assert len(runs) == 1 + 2 + 2 * 2
    assert (tmp_path / "b" / "box.csv").is_file()


def test_sweep_rejects_unmatched_lengths_and_unknown_presets(tmp_path, capsys):
    data = surrogate(tmp_path / "s", "--n-bursts", "3", "--classes", "normal", "inner")
    assert main(["sweep", "--datasets", str(data), "--out", str(tmp_path / "a")]) == 2
    assert "burst lengths [64]" in capsys.readouterr().err
    assert main(["sweep", "--datasets", str(data), "--presets", "G9(1)/D9(1)/L64",
                 "--out", str(tmp_path / "b")]) == 2
    assert "unknown presets" in capsys.readouterr().err


def test_export_round_trips_through_ingest(tmp_path):
    data = surrogate(tmp_path / "s", "--n-bursts", "2", "--classes", "normal", "inner", "--rpms", "1797")
    out = tmp_path / "x"
    assert main(["export", "--dataset", str(data), "--label", "inner", "--format", "raw-f32le",
                 "--out", str(out)]) == 0
    assert main(["ingest", str(out / "export.f32"), "--format", "raw-f32le", "--label", "inner",
                 "--rpm", "1797", "--burst-len", "64", "--out", str(tmp_path / "back")]) == 0
    original = [b for b in read_dataset(data) if b.label is FaultClass.INNER]
    back = read_dataset(tmp_path / "back" / "dataset.n2fd")
    assert [b.samples.tobytes() for b in back] == [b.samples.tobytes() for b in original]
