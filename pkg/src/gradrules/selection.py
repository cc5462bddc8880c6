"""Feature scoring and top-k selection over the transformed input space.

Two scorers: unsupervised sensitivity analysis (RMS of per-instance
gradients per output node, maximized over nodes) and supervised mutual
information between sign-discretized features and class labels.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import FeatureMatrix
from .network import FeedForwardClassifier

SIGN_ALPHABET = (-1, 0, 1)

__all__ = [
    "FeatureScores",
    "SelectionResult",
    "sensitivity_scores",
    "mutual_information_scores",
    "mi_from_tables",
    "select_top_k",
]


@dataclass
class FeatureScores:
    scores: np.ndarray
    method: str


@dataclass
class SelectionResult:
    indices: np.ndarray
    k: int


def sensitivity_scores(net: FeedForwardClassifier, fm: FeatureMatrix, batch_size: int = 256) -> FeatureScores:
    """RMS gradient magnitude per (feature, output node), maxed over nodes.

    Uses only the trained weights and the inputs; labels are not read.
    """
    X = fm.X.tocsr()
    n, k = X.shape
    if n == 0:
        raise ValueError("sensitivity analysis needs a nonempty input matrix")
    n_out = len(net.classes_)
    sumsq = np.zeros((n_out, k), dtype=np.float64)
    for start in range(0, n, batch_size):
        xb = X[start : start + batch_size]
        for c in range(n_out):
            g = net.input_gradients(xb, c)
            sumsq[c] += np.square(g).sum(axis=0)
    phi = np.sqrt(sumsq / n)
    return FeatureScores(scores=phi.max(axis=0), method="sa")


def _mi_from_counts(tables: np.ndarray) -> np.ndarray:
    """Plug-in mutual information in nats for count tables of shape (..., A, C).

    Empirical probabilities, 0 * ln 0 := 0. Tiny negative values from
    float rounding are clamped to zero so scores stay non-negative.
    """
    tables = np.asarray(tables, dtype=np.float64)
    n = tables.sum(axis=(-2, -1))
    safe_n = np.where(n > 0, n, 1.0)
    p = tables / safe_n[..., None, None]
    px = p.sum(axis=-1, keepdims=True)
    py = p.sum(axis=-2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = p * np.log(p / (px * py))
    terms = np.where(p > 0, terms, 0.0)
    mi = terms.sum(axis=(-2, -1))
    return np.where(n > 0, np.maximum(mi, 0.0), 0.0)


def mi_from_tables(tables: np.ndarray) -> np.ndarray:
    """Mutual information for a batch of contingency tables (B, A, C)."""
    return _mi_from_counts(tables)


def mutual_information_scores(signs: FeatureMatrix, labels: np.ndarray | None = None) -> FeatureScores:
    """MI between each sign-valued feature and the class label, in nats."""
    if labels is None:
        labels = signs.labels
    if labels is None:
        raise ValueError("mutual information needs labels")
    X = signs.X.tocsr()
    n, k = X.shape
    if n == 0:
        raise ValueError("mutual information needs a nonempty input matrix")
    vals = np.unique(X.data)
    if vals.size and not np.isin(vals, SIGN_ALPHABET).all():
        raise ValueError("sign matrix values must lie in {-1, 0, 1}")
    y = np.asarray(labels, dtype=np.int64)
    n_classes = int(y.max()) + 1

    onehot = sp.csr_matrix(
        (np.ones(n), (np.arange(n), y)), shape=(n, n_classes)
    )
    pos = X.copy()
    pos.data = (X.data == 1).astype(np.float64)
    neg = X.copy()
    neg.data = (X.data == -1).astype(np.float64)
    counts_pos = np.asarray((onehot.T @ pos).todense())
    counts_neg = np.asarray((onehot.T @ neg).todense())
    class_counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    counts_zero = class_counts[:, None] - counts_pos - counts_neg
    # (K, A, C) with the sign alphabet ordered (-1, 0, +1)
    tables = np.stack([counts_neg.T, counts_zero.T, counts_pos.T], axis=1)
    return FeatureScores(scores=_mi_from_counts(tables), method="mi")


def select_top_k(scores: FeatureScores | np.ndarray, k: int = 1000) -> SelectionResult:
    """Indices of the k best-scoring features, ties broken by lower index."""
    values = scores.scores if isinstance(scores, FeatureScores) else np.asarray(scores)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = len(values)
    if k > n:
        warnings.warn(f"k={k} exceeds the {n} available features; taking all")
        k = n
    order = np.lexsort((np.arange(n), -values))
    return SelectionResult(indices=order[:k], k=k)
