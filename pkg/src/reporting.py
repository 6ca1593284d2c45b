"""
Reports for faultsynth
----------------------
Fixed-header CSV writers for features, embeddings, metrics, loss traces and
sweep results, plus a standalone SVG scatter plot for t-SNE embeddings drawn with
matplotlib.
"""

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np

from src.features import FEATURE_NAMES
from src.signal_data import FaultClass

FEATURE_HEADER = ("burst_id", "label", "rpm") + FEATURE_NAMES
EMBEDDING_HEADER = ("burst_id", "label", "source", "dim1", "dim2")
METRICS_HEADER = ("framework", "seed", "accuracy", "f1", "precision", "recall")
CONDITION_HEADER = ("rpm", "classifier", "accuracy", "f1", "precision", "recall")
BOX_HEADER = ("framework", "min", "q1", "median", "q3", "max", "mean", "std")
SWEEP_HEADER = ("preset", "generator_blocks", "discriminator_blocks", "input_len", "rpm", "classifier",
                "accuracy", "f1", "precision", "recall", "train_seconds", "generator_parameters")

SVG_WIDTH = 800
SVG_HEIGHT = 600
SVG_DPI = 72
SVG_HASH_SALT = "faultsynth"
MARKERS = {"real": "o", "synthetic": "^"}
CLASS_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _fmt(value):
    return f"{float(value):.6f}"


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_features_csv(path, bursts, matrix):
    rows = [[i, FaultClass(b.label).label_name, b.condition.rpm] + [_fmt(v) for v in values]
            for i, (b, values) in enumerate(zip(bursts, matrix))]
    return write_csv(path, FEATURE_HEADER, rows)


def write_embedding_csv(path, bursts, embedding):
    rows = [[i, FaultClass(b.label).label_name, b.source, _fmt(p[0]), _fmt(p[1])]
            for i, (b, p) in enumerate(zip(bursts, embedding))]
    return write_csv(path, EMBEDDING_HEADER, rows)


def _metric_cells(metrics):
    return [_fmt(metrics.accuracy), _fmt(metrics.macro_f1), _fmt(metrics.macro_precision),
            _fmt(metrics.macro_recall)]


def write_metrics_csv(path, report):
    """Per-run rows followed by `mean` and `std` rows per framework."""
    rows = [[row.framework, row.seed] + _metric_cells(row.metrics) for row in report.rows]
    for framework, agg in report.aggregate.items():
        rows.append([framework, "mean", _fmt(agg["accuracy_mean"]), _fmt(agg["f1_mean"]),
                     _fmt(agg["precision_mean"]), _fmt(agg["recall_mean"])])
        rows.append([framework, "std", _fmt(agg["accuracy_std"]), "", "", ""])
    return write_csv(path, METRICS_HEADER, rows)


def write_box_csv(path, aggregate):
    rows = []
    for framework, agg in aggregate.items():
        box = agg["box"]
        rows.append([framework] + [_fmt(box[k]) for k in ("min", "q1", "median", "q3", "max")]
                    + [_fmt(agg["accuracy_mean"]), _fmt(agg["accuracy_std"])])
    return write_csv(path, BOX_HEADER, rows)


def write_condition_csv(path, rows):
    return write_csv(path, CONDITION_HEADER, [[r.rpm, r.classifier] + _metric_cells(r.metrics) for r in rows])


def write_confusion_csv(path, matrix):
    names = [c.label_name for c in FaultClass][:len(matrix)]
    rows = [[name] + [int(v) for v in row] for name, row in zip(names, np.asarray(matrix))]
    return write_csv(path, ["true\\predicted"] + names, rows)


def write_trace_csv(path, trace):
    rows = [[step] + [_fmt(v) for v in values] for step, values in enumerate(trace.rows, start=1)]
    return write_csv(path, ("step",) + tuple(trace.columns), rows)


def write_sweep_csv(path, rows):
    out = []
    for r in rows:
        p = r.preset
        out.append([p.name, len(p.generator_widths) + 1, len(p.discriminator_widths), p.input_len, r.rpm,
                    r.classifier] + _metric_cells(r.metrics) + [f"{r.train_seconds:.2f}", r.generator_parameters])
    return write_csv(path, SWEEP_HEADER, out)


# SVG scatter -------------------------------------------------------------------

def scatter_svg(path, embedding, labels, sources, title="t-SNE embedding"):
    """
    Standalone 800x600 SVG: one color per class, circles for real bursts and
    triangles for synthetic ones, one legend entry per (class, source).

    Text is kept as SVG text and the id salt and date are fixed, so the same
    embedding always renders to the same bytes.
    """
    embedding = np.asarray(embedding, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    sources = np.asarray(sources)
    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(SVG_WIDTH / SVG_DPI, SVG_HEIGHT / SVG_DPI), dpi=SVG_DPI)
        try:
            for label, source in sorted({(int(a), str(b)) for a, b in zip(labels, sources)}):
                mask = (labels == label) & (sources == source)
                color = CLASS_COLORS[label % len(CLASS_COLORS)]
                ax.scatter(embedding[mask, 0], embedding[mask, 1], s=18, c=color,
                           marker=MARKERS.get(source, "o"), alpha=0.7,
                           label=f"{FaultClass(label).label_name} ({source})")
            ax.set_title(title)
            ax.set_xlabel("dim1")
            ax.set_ylabel("dim2")
            ax.legend(loc="center left", bbox_to_anchor=(1.0, 0.5), fontsize=9)
            fig.tight_layout()
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return path
