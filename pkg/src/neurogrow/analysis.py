"""Similarity histograms, near-zero fractions and run comparison tables."""

import csv
import statistics
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .network import neuron_matrix
from .similarity import similarity_map

# second hidden layer (0-based index into Network.layers)
DEFAULT_LAYER = 1


@dataclass
class SimilarityHistogram:
    layer: int
    edges: np.ndarray
    counts: np.ndarray
    total_pairs: int
    # raw unordered-pair cosines, kept so thresholds need not snap to bin edges
    pair_values: np.ndarray


def pair_similarities(w):
    """Cosine similarity of every unordered row pair ``i < j``, row-major order."""
    c = similarity_map(w)
    iu = np.triu_indices(c.shape[0], k=1)
    return np.clip(c[iu], -1.0, 1.0)


def bin_counts(values, edges):
    """Counts per ``[lo, hi)`` bin; a value equal to the final edge falls in the last bin."""
    idx = np.searchsorted(edges, values, side="right") - 1
    idx = np.clip(idx, 0, len(edges) - 2)
    return np.bincount(idx, minlength=len(edges) - 1)


def similarity_histogram(net, layer_index=DEFAULT_LAYER, bins=40):
    """Histogram of pairwise neuron cosines for ``net.layer(layer_index)`` over [-1, 1]."""
    w = neuron_matrix(net.layer(layer_index))
    n = w.shape[0]
    if n < 2:
        raise UsageError(f"layer {layer_index} has {n} neuron(s); a histogram needs at least 2")
    if bins < 1:
        raise UsageError(f"bins must be >= 1, got {bins}")
    values = pair_similarities(w)
    edges = np.linspace(-1.0, 1.0, bins + 1)
    return SimilarityHistogram(layer_index, edges, bin_counts(values, edges), n * (n - 1) // 2, values)


def near_zero_fraction(hist, threshold=0.5):
    if not 0 < threshold <= 1:
        raise UsageError(f"threshold must lie in (0, 1], got {threshold}")
    return float(np.mean(np.abs(hist.pair_values) <= threshold))


def write_histogram_csv(hist, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])


COMPARISON_FIELDS = ["method", "runs", "test_acc_mean", "test_acc_std", "train_seconds_mean",
                     "n_iters", "lam", "enable_sim_loss", "enable_weight_penalty"]


def compare_runs(reports, labels=None):
    """Aggregate final test accuracy and wall time per method label, in first-seen order.

    The std is the sample standard deviation, defined as 0 for a single run.
    """
    if not reports:
        raise UsageError("compare_runs needs at least one report")
    labels = labels or [r.config.label or "run" for r in reports]
    groups = {}
    for label, report in zip(labels, reports):
        groups.setdefault(label, []).append(report)
    rows = []
    for label, group in groups.items():
        accs = [r.final_test_acc for r in group]
        reg = group[0].config.reg
        rows.append({
            "method": label,
            "runs": len(group),
            "test_acc_mean": statistics.fmean(accs),
            "test_acc_std": statistics.stdev(accs) if len(accs) > 1 else 0.0,
            "train_seconds_mean": statistics.fmean(r.wall_seconds for r in group),
            "n_iters": reg.n_iters,
            "lam": reg.lam,
            "enable_sim_loss": reg.enable_sim_loss,
            "enable_weight_penalty": reg.enable_weight_penalty,
        })
    return rows


def write_comparison_csv(rows, path, extra_fields=()):
    fields = list(COMPARISON_FIELDS) + [f for f in extra_fields if f not in COMPARISON_FIELDS]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
