"""Feedforward ReLU/softmax classifier trained with mini-batch Adam.

The network is the model to be explained: two hidden layers, softmax
output, cross-entropy loss. Besides the usual fit/predict surface it
exposes exact gradients of any output probability with respect to the
inputs, computed in 64-bit arithmetic regardless of the training dtype.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

NET_MAGIC = b"GRADRULES-NET v1"

__all__ = ["FeedForwardClassifier", "save_network", "load_network", "NET_MAGIC"]


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_matrix(X, dtype=np.float64):
    if sp.issparse(X):
        return X.tocsr().astype(dtype)
    X = np.asarray(X, dtype=dtype)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    return X


class FeedForwardClassifier(BaseEstimator, ClassifierMixin):
    """2-hidden-layer ReLU network with a softmax head.

    Training is single-threaded and bit-reproducible for a fixed seed:
    initialization and the per-epoch shuffle order are drawn from one
    seeded generator. Weights are kept in float64 after fitting; the
    optimizer itself may run in float32 (train_dtype).
    """

    def __init__(
        self,
        hidden_units=(100, 100),
        epochs: int = 50,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
        batch_size: int = 32,
        seed: int = 0,
        train_dtype: str = "float32",
    ):
        self.hidden_units = hidden_units
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.batch_size = batch_size
        self.seed = seed
        self.train_dtype = train_dtype

    def fit(self, X, y):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if len(self.hidden_units) != 2 or any(h <= 0 for h in self.hidden_units):
            raise ValueError("hidden_units must be two positive layer sizes")
        dtype = np.dtype(self.train_dtype)
        X = _as_matrix(X, dtype)
        y = np.asarray(y)
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y disagree on the number of rows")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        n_classes = len(self.classes_)
        if n_classes < 2:
            raise ValueError("need at least 2 classes")
        n, k = X.shape
        self.n_features_in_ = k

        rng = np.random.default_rng(self.seed)
        sizes = [k, *self.hidden_units, n_classes]
        weights = [
            rng.normal(0.0, np.sqrt(2.0 / sizes[i]), size=(sizes[i], sizes[i + 1])).astype(dtype)
            for i in range(len(sizes) - 1)
        ]
        biases = [np.zeros(sizes[i + 1], dtype=dtype) for i in range(len(sizes) - 1)]

        m_w = [np.zeros_like(w) for w in weights]
        v_w = [np.zeros_like(w) for w in weights]
        m_b = [np.zeros_like(b) for b in biases]
        v_b = [np.zeros_like(b) for b in biases]
        lr, b1, b2, eps = self.learning_rate, self.beta1, self.beta2, self.epsilon
        step = 0

        self.loss_curve_ = []
        for _ in range(self.epochs):
            perm = rng.permutation(n)
            Xs = X[perm]
            ys = y_idx[perm]
            epoch_loss = 0.0
            for start in range(0, n, self.batch_size):
                xb = Xs[start : start + self.batch_size]
                yb = ys[start : start + self.batch_size]
                bsz = xb.shape[0]

                z1 = xb @ weights[0] + biases[0]
                a1 = np.maximum(z1, 0)
                z2 = a1 @ weights[1] + biases[1]
                a2 = np.maximum(z2, 0)
                z3 = a2 @ weights[2] + biases[2]

                zmax = z3.max(axis=1, keepdims=True)
                logits = z3 - zmax
                logsum = np.log(np.exp(logits).sum(axis=1, keepdims=True))
                epoch_loss += float((logsum[:, 0] - logits[np.arange(bsz), yb]).sum())
                probs = np.exp(logits - logsum)

                d3 = probs
                d3[np.arange(bsz), yb] -= 1.0
                d3 /= bsz
                g_w2 = a2.T @ d3
                g_b2 = d3.sum(axis=0)
                d2 = (d3 @ weights[2].T) * (z2 > 0)
                g_w1 = a1.T @ d2
                g_b1 = d2.sum(axis=0)
                d1 = (d2 @ weights[1].T) * (z1 > 0)
                g_w0 = xb.T @ d1
                if sp.issparse(g_w0):
                    g_w0 = np.asarray(g_w0.todense())
                g_b0 = d1.sum(axis=0)

                step += 1
                c1 = 1.0 - b1**step
                c2 = 1.0 - b2**step
                for p, g, m, v in (
                    (weights[0], g_w0, m_w[0], v_w[0]),
                    (biases[0], g_b0, m_b[0], v_b[0]),
                    (weights[1], g_w1, m_w[1], v_w[1]),
                    (biases[1], g_b1, m_b[1], v_b[1]),
                    (weights[2], g_w2, m_w[2], v_w[2]),
                    (biases[2], g_b2, m_b[2], v_b[2]),
                ):
                    m *= b1
                    m += (1 - b1) * g
                    v *= b2
                    v += (1 - b2) * np.square(g)
                    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)

            epoch_loss /= n
            if not np.isfinite(epoch_loss):
                raise RuntimeError("training diverged: non-finite loss")
            self.loss_curve_.append(epoch_loss)

        self.weights_ = [w.astype(np.float64) for w in weights]
        self.biases_ = [b.astype(np.float64) for b in biases]
        return self

    def _forward(self, X):
        z1 = X @ self.weights_[0] + self.biases_[0]
        a1 = np.maximum(z1, 0)
        z2 = a1 @ self.weights_[1] + self.biases_[1]
        a2 = np.maximum(z2, 0)
        z3 = a2 @ self.weights_[2] + self.biases_[2]
        return z1, a1, z2, a2, _softmax(z3)

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "weights_")
        X = _as_matrix(X)
        return self._forward(X)[4]

    def predict(self, X) -> np.ndarray:
        probs = self.predict_proba(X)
        return self.classes_[np.argmax(probs, axis=1)]

    def input_gradients(self, X, outputs) -> np.ndarray:
        """d p[outputs[i]] / d x for each row i, as a dense (n, K) array.

        outputs may be a scalar (same output node for every row) or one
        node index per row. Gradients are generally nonzero at input
        positions where the row itself is zero.
        """
        check_is_fitted(self, "weights_")
        X = _as_matrix(X)
        n = X.shape[0]
        outputs = np.broadcast_to(np.asarray(outputs, dtype=np.int64), (n,))
        if outputs.size and (outputs.min() < 0 or outputs.max() >= len(self.classes_)):
            raise ValueError("output index out of range")
        z1, _, z2, _, p = self._forward(X)
        pt = p[np.arange(n), outputs]
        d3 = -pt[:, None] * p
        d3[np.arange(n), outputs] += pt
        d2 = (d3 @ self.weights_[2].T) * (z2 > 0)
        d1 = (d2 @ self.weights_[1].T) * (z1 > 0)
        return d1 @ self.weights_[0].T

    def input_gradient(self, x, output_index: int) -> np.ndarray:
        """Gradient of one output probability w.r.t. a single input row."""
        return self.input_gradients(x, int(output_index))[0]


def save_network(path: str | Path, net: FeedForwardClassifier) -> None:
    """Checkpoint: magic, one JSON config line, then raw float64 LE arrays."""
    check_is_fitted(net, "weights_")
    config = {
        "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in net.get_params().items()},
        "classes": [c.item() if isinstance(c, np.generic) else c for c in net.classes_],
        "n_features": int(net.n_features_in_),
    }
    with open(path, "wb") as f:
        f.write(NET_MAGIC + b"\n")
        f.write(json.dumps(config, sort_keys=True).encode("utf-8") + b"\n")
        for w, b in zip(net.weights_, net.biases_):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_network(path: str | Path) -> FeedForwardClassifier:
    with open(path, "rb") as f:
        magic = f.readline().rstrip(b"\n")
        if magic != NET_MAGIC:
            raise ValueError(f"{path}: expected checkpoint magic {NET_MAGIC!r}")
        config = json.loads(f.readline().decode("utf-8"))
        params = dict(config["params"])
        params["hidden_units"] = tuple(params["hidden_units"])
        net = FeedForwardClassifier(**params)
        net.classes_ = np.asarray(config["classes"])
        net.n_features_in_ = config["n_features"]
        sizes = [net.n_features_in_, *net.hidden_units, len(net.classes_)]
        net.weights_ = []
        net.biases_ = []
        for i in range(len(sizes) - 1):
            w = np.frombuffer(f.read(8 * sizes[i] * sizes[i + 1]), dtype="<f8")
            net.weights_.append(w.reshape(sizes[i], sizes[i + 1]).copy())
            b = np.frombuffer(f.read(8 * sizes[i + 1]), dtype="<f8")
            net.biases_.append(b.copy())
        if f.read(1):
            raise ValueError(f"{path}: trailing bytes in checkpoint")
    return net
