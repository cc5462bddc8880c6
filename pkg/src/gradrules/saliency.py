"""Gradient saliency maps and the reweigh / sign-reduce input transform.

The chain turns model gradients into the discrete explanation space:
per-instance gradients of one output probability (saliency), elementwise
product with the original inputs (reweighing), and reduction of the
result to {-1, 0, +1} (sign discretization).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin

from .corpus import FeatureMatrix
from .network import FeedForwardClassifier

PREDICTED = "predicted"
GOLD = "gold"

SIGN_ZERO_TOL = 1e-12

__all__ = [
    "PREDICTED",
    "GOLD",
    "SIGN_ZERO_TOL",
    "SaliencyMap",
    "saliency_map",
    "reweigh",
    "sign_reduce",
    "GradientSignTransformer",
]


class SaliencyMap:
    """J x K gradient matrix, materialized lazily one row-batch at a time.

    Row j holds d p[target_j] / d x evaluated at instance j, where the
    target is either the model's predicted class or the gold label.
    """

    def __init__(self, net: FeedForwardClassifier, X: sp.csr_matrix, targets: np.ndarray, mode: str, batch_size: int = 128):
        self.net = net
        self.X = X
        self.targets = targets
        self.mode = mode
        self.batch_size = batch_size
        self._zero_count: int | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape

    def batches(self):
        """Yield (start, stop, block) with block = dense gradients for rows [start, stop)."""
        n = self.X.shape[0]
        for start in range(0, n, self.batch_size):
            stop = min(start + self.batch_size, n)
            block = self.net.input_gradients(self.X[start:stop], self.targets[start:stop])
            yield start, stop, block

    def row(self, j: int) -> np.ndarray:
        return self.net.input_gradients(self.X[j], int(self.targets[j]))[0]

    def toarray(self) -> np.ndarray:
        out = np.empty(self.shape, dtype=np.float64)
        for start, stop, block in self.batches():
            out[start:stop] = block
        return out

    def zero_entry_count(self, tol: float = SIGN_ZERO_TOL) -> int:
        """Number of gradient entries equal to zero (within tol).

        The discrete value 0 is ambiguous downstream (absent feature vs
        zero gradient); this count lets users audit how often the second
        reading can occur at all.
        """
        if self._zero_count is None:
            count = 0
            for _, _, block in self.batches():
                count += int((np.abs(block) <= tol).sum())
            self._zero_count = count
        return self._zero_count


def saliency_map(net: FeedForwardClassifier, fm: FeatureMatrix, mode: str = PREDICTED, batch_size: int = 128) -> SaliencyMap:
    """Per-instance input gradients of the predicted-class or gold-class output."""
    if mode not in (PREDICTED, GOLD):
        raise ValueError(f"mode must be {PREDICTED!r} or {GOLD!r}, got {mode!r}")
    X = fm.X.tocsr()
    if mode == GOLD:
        if fm.labels is None:
            raise ValueError("gold-class saliency requires labels on the matrix")
        targets = np.searchsorted(net.classes_, fm.labels)
    else:
        targets = np.argmax(net.predict_proba(X), axis=1)
    return SaliencyMap(net, X, targets, mode, batch_size=batch_size)


def reweigh(fm: FeatureMatrix, sal: SaliencyMap) -> FeatureMatrix:
    """Elementwise product of inputs and saliency; keeps the input sparsity."""
    X = fm.X.tocsr()
    if X.shape != sal.shape:
        raise ValueError(f"shape mismatch: inputs {X.shape}, saliency {sal.shape}")
    data = np.empty_like(X.data, dtype=np.float64)
    for start, stop, block in sal.batches():
        lo, hi = X.indptr[start], X.indptr[stop]
        local = np.repeat(np.arange(stop - start), np.diff(X.indptr[start : stop + 1]))
        data[lo:hi] = X.data[lo:hi] * block[local, X.indices[lo:hi]]
    out = sp.csr_matrix((data, X.indices.copy(), X.indptr.copy()), shape=X.shape)
    return FeatureMatrix(X=out, labels=fm.labels, label_names=fm.label_names)


def sign_reduce(rw: FeatureMatrix, tol: float = SIGN_ZERO_TOL) -> FeatureMatrix:
    """Map each entry to its sign; magnitudes within tol of zero become 0."""
    X = rw.X.tocsr()
    data = np.sign(X.data)
    data[np.abs(X.data) <= tol] = 0
    out = sp.csr_matrix((data.astype(np.int8), X.indices.copy(), X.indptr.copy()), shape=X.shape)
    out.eliminate_zeros()
    return FeatureMatrix(X=out, labels=rw.labels, label_names=rw.label_names)


class GradientSignTransformer(BaseEstimator, TransformerMixin):
    """saliency -> reweigh -> sign_reduce as a single transformer.

    After transform, zero_gradient_entries_ holds the audit count of
    zero-valued gradients seen while building the map.
    """

    def __init__(self, network: FeedForwardClassifier, mode: str = PREDICTED, zero_tol: float = SIGN_ZERO_TOL, batch_size: int = 128):
        self.network = network
        self.mode = mode
        self.zero_tol = zero_tol
        self.batch_size = batch_size

    def fit(self, fm: FeatureMatrix, y=None):
        return self

    def transform(self, fm: FeatureMatrix) -> FeatureMatrix:
        sal = saliency_map(self.network, fm, mode=self.mode, batch_size=self.batch_size)
        signs = sign_reduce(reweigh(fm, sal), tol=self.zero_tol)
        self.zero_gradient_entries_ = sal.zero_entry_count(self.zero_tol)
        return signs
