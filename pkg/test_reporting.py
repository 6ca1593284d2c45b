"""
Tests for CSV and SVG reports
"""

import csv
import xml.etree.ElementTree as ET

import numpy as np

from src.reporting import FEATURE_HEADER, scatter_svg, write_confusion_csv, write_features_csv

SVG = "{http://www.w3.org/2000/svg}"


def _svg_texts(root):
    return ["".join(t.itertext()).strip() for t in root.iter(f"{SVG}text")]


def test_scatter_marks_real_and_synthetic(tmp_path):
    embedding = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, -1.0], [2.0, 2.0]])
    path = scatter_svg(tmp_path / "plot.svg", embedding, [0, 1, 1, 1], ["real", "real", "synthetic", "synthetic"])
    root = ET.parse(path).getroot()
    assert root.get("width") == "800pt" and root.get("height") == "600pt"
    texts = _svg_texts(root)
    for entry in ("normal (real)", "inner (real)", "inner (synthetic)", "t-SNE embedding"):
        assert entry in texts
    collections = [g for g in root.iter(f"{SVG}g") if (g.get("id") or "").startswith("PathCollection")]
    assert len(collections) >= 3
    assert sum(len(list(g.iter(f"{SVG}use"))) for g in collections) >= len(embedding)


def test_scatter_svg_is_byte_deterministic(tmp_path):
    embedding = np.random.default_rng(0).normal(size=(12, 2))
    labels = [i % 3 for i in range(12)]
    sources = ["real"] * 8 + ["synthetic"] * 4
    first = scatter_svg(tmp_path / "a.svg", embedding, labels, sources).read_bytes()
    second = scatter_svg(tmp_path / "b.svg", embedding, labels, sources).read_bytes()
    assert first == second


def test_feature_and_confusion_csv(tmp_path, small_bursts):
    bursts = small_bursts[:3]
    matrix = np.arange(30, dtype=np.float64).reshape(3, 10)
    with open(write_features_csv(tmp_path / "f.csv", bursts, matrix), newline="") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == FEATURE_HEADER
    assert len(rows) == 4 and rows[1][1] == "normal"
    with open(write_confusion_csv(tmp_path / "c.csv", np.eye(2, dtype=int)), newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["true\\predicted", "normal", "inner"]
    assert rows[2] == ["inner", "0", "1"]
