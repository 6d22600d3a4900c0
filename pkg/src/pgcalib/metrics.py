"""Calibration and classification metrics.

ECE uses 10 equal-width bins on [0, 1], left-closed right-open with the
last bin closed. AUROC follows the Mann-Whitney convention (ties count
half). Accuracy thresholds strictly at 0.5.
"""

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ReliabilityBin:
    lo: float
    hi: float
    count: int
    mean_pred: float
    frac_pos: float


def _validate(preds, labels):
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels)
    if p.ndim != 1 or p.size == 0 or p.shape != y.shape:
        raise ValueError("preds and labels must be nonempty and equal length")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("predictions must lie in [0, 1]")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    return p, y.astype(np.float64)


def _bin_index(p: np.ndarray, bins: int) -> np.ndarray:
    # floor(p * bins), with p == 1.0 folded into the last (closed) bin
    return np.minimum((p * bins).astype(np.int64), bins - 1)


def reliability(preds, labels, bins: int = 10) -> list[ReliabilityBin]:
    """Per-bin count, mean prediction and positive fraction.

    Empty bins carry NaN summaries so the bin layout stays fixed.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    p, y = _validate(preds, labels)
    idx = _bin_index(p, bins)
    counts = np.bincount(idx, minlength=bins)
    psum = np.bincount(idx, weights=p, minlength=bins)
    ysum = np.bincount(idx, weights=y, minlength=bins)
    out = []
    for b in range(bins):
        c = int(counts[b])
        out.append(ReliabilityBin(
            lo=b / bins, hi=(b + 1) / bins, count=c,
            mean_pred=psum[b] / c if c else float("nan"),
            frac_pos=ysum[b] / c if c else float("nan")))
    return out


def ece(preds, labels, bins: int = 10) -> float:
    """Count-weighted mean |positive fraction - mean prediction| over bins."""
    p, y = _validate(preds, labels)
    idx = _bin_index(p, bins)
    counts = np.bincount(idx, minlength=bins)
    psum = np.bincount(idx, weights=p, minlength=bins)
    ysum = np.bincount(idx, weights=y, minlength=bins)
    nonempty = counts > 0
    gaps = np.abs(ysum[nonempty] - psum[nonempty]) / counts[nonempty]
    return float((counts[nonempty] * gaps).sum() / p.size)


def auroc(preds, labels) -> float:
    """Probability a random positive outranks a random negative (ties 1/2)."""
    p, y = _validate(preds, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC undefined: labels contain a single class")
    # midranks: average rank within tied blocks
    uniq, inverse, counts = np.unique(p, return_inverse=True,
                                      return_counts=True)
    start = np.cumsum(counts) - counts
    midrank = start + (counts + 1) / 2.0
    ranks = midrank[inverse]
    pos_rank_sum = ranks[y == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def accuracy(preds, labels, threshold: float = 0.5) -> float:
    """Fraction where (pred > threshold) agrees with the label."""
    p, y = _validate(preds, labels)
    return float(((p > threshold) == (y == 1)).mean())


def reliability_to_csv(bins_list: list[ReliabilityBin], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count", "mean_pred", "frac_pos"])
        for b in bins_list:
            w.writerow([f"{b.lo:.17g}", f"{b.hi:.17g}", b.count,
                        f"{b.mean_pred:.17g}", f"{b.frac_pos:.17g}"])
