"""Clustering agreement metrics: accuracy under optimal matching, NMI, purity.

All metrics compare a predicted clustering against ground-truth classes on
the same samples (the novel set, in this package's evaluation protocol),
are invariant to relabeling of either side, and live in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class ContingencyTable:
    """Joint counts between predicted cluster ids (rows) and true class ids
    (columns); only ids actually present get a row/column."""

    counts: np.ndarray
    pred_ids: np.ndarray
    true_ids: np.ndarray

    @property
    def num_samples(self) -> int:
        return int(self.counts.sum())


def contingency_table(pred: np.ndarray, truth: np.ndarray) -> ContingencyTable:
    pred, truth = _check_pair(pred, truth)
    pred_ids, pi = np.unique(pred, return_inverse=True)
    true_ids, ti = np.unique(truth, return_inverse=True)
    counts = np.zeros((pred_ids.size, true_ids.size), dtype=int)
    np.add.at(counts, (pi, ti), 1)
    return ContingencyTable(counts=counts, pred_ids=pred_ids, true_ids=true_ids)


def hungarian_match(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-cost one-to-one assignment of rows to columns.

    Rectangular matrices are fine; the smaller side is matched completely.
    Returns (row_indices, col_indices) sorted by row.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.size == 0:
        raise ValueError("cost must be a non-empty 2-d matrix")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost must be finite")
    return linear_sum_assignment(cost)


def clustering_accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of samples correct under the best cluster-to-class matching."""
    table = contingency_table(pred, truth)
    rows, cols = hungarian_match(-table.counts.astype(float))
    return float(table.counts[rows, cols].sum() / table.num_samples)


def nmi(pred: np.ndarray, truth: np.ndarray, average: str = "geometric") -> float:
    """Normalized mutual information (natural log).

    ``average`` picks the normalizing mean of the two entropies; the
    package standard is "geometric" (sqrt normalization). Degenerate
    0/0 cases (either side constant) return 0.0.
    """
    table = contingency_table(pred, truth)
    joint = table.counts / table.num_samples
    # marginals from the integer counts, not from float row sums, so a
    # constant partition gets probability exactly 1 and entropy exactly 0
    p_pred = table.counts.sum(axis=1) / table.num_samples
    p_true = table.counts.sum(axis=0) / table.num_samples
    h_pred = _entropy(p_pred)
    h_true = _entropy(p_true)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * (np.log(joint[nz])
                                   - np.log(np.outer(p_pred, p_true)[nz]))))
    if average == "geometric":
        denom = np.sqrt(h_pred * h_true)
    elif average == "arithmetic":
        denom = 0.5 * (h_pred + h_true)
    else:
        raise ValueError(f"unknown average: {average!r}")
    if denom <= 0:
        return 0.0
    return float(min(1.0, max(0.0, mi / denom)))


def purity(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean over samples of the majority-class fraction of their cluster."""
    table = contingency_table(pred, truth)
    return float(table.counts.max(axis=1).sum() / table.num_samples)


def _entropy(p: np.ndarray) -> float:
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz])))


def _check_pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=int).ravel()
    truth = np.asarray(truth, dtype=int).ravel()
    if pred.size == 0 or pred.size != truth.size:
        raise ValueError(f"need two equal-length non-empty label arrays, "
                         f"got {pred.size} and {truth.size}")
    return pred, truth
