"""CART regression tree with variance-reduction splits and impurity importances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class _Node:
    value: float
    n: int
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


class RegressionTree:
    """Greedy binary regression tree.

    Splits minimise the summed squared error of the two children. Candidate
    thresholds are midpoints between consecutive distinct values; ties
    between equally good splits go to the lowest feature index, then the
    lowest threshold, so fitting is deterministic.
    """

    def __init__(self, max_depth: int = 8, min_samples_leaf: int = 5):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.root: _Node | None = None
        self.n_features = 0
        self.sse_reduction_: np.ndarray | None = None

    def fit(self, X, y) -> "RegressionTree":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError("X must be (n, d) with one target per row")
        self.n_features = X.shape[1]
        self.sse_reduction_ = np.zeros(self.n_features)
        self.root = self._grow(X, y, depth=0)
        return self

    def _best_split(self, X: np.ndarray, y: np.ndarray):
        n, d = X.shape
        m = self.min_samples_leaf
        y = y - y.mean()  # centring keeps the cumulative-sum SSE formula stable
        total = y.sum()
        parent_sse = float((y**2).sum())
        best_gain, best = 0.0, None
        tol = 1e-12 * max(parent_sse, 1e-300)
        for j in range(d):
            order = np.argsort(X[:, j], kind="stable")
            xs, ys = X[order, j], y[order]
            csum = np.cumsum(ys)[:-1]
            csq = np.cumsum(ys**2)[:-1]
            n_left = np.arange(1, n)
            n_right = n - n_left
            valid = (xs[1:] > xs[:-1]) & (n_left >= m) & (n_right >= m)
            if not valid.any():
                continue
            sse_left = csq - csum**2 / n_left
            sse_right = (csq[-1] + ys[-1] ** 2 - csq) - (total - csum) ** 2 / n_right
            gain = np.where(valid, parent_sse - sse_left - sse_right, -np.inf)
            i = int(np.argmax(gain))
            if gain[i] > best_gain + tol:
                best_gain = float(gain[i])
                best = (j, 0.5 * (xs[i] + xs[i + 1]))
        return best, best_gain

    def _grow(self, X: np.ndarray, y: np.ndarray, depth: int) -> _Node:
        node = _Node(float(y.mean()), len(y))
        if depth >= self.max_depth or len(y) < 2 * self.min_samples_leaf:
            return node
        split, gain = self._best_split(X, y)
        if split is None:
            return node
        node.feature, node.threshold = split
        self.sse_reduction_[node.feature] += gain
        go_left = X[:, node.feature] <= node.threshold
        node.left = self._grow(X[go_left], y[go_left], depth + 1)
        node.right = self._grow(X[~go_left], y[~go_left], depth + 1)
        return node

    @property
    def feature_importances_(self) -> np.ndarray:
        """Normalised total squared-error reduction per feature (zeros if no split)."""
        total = self.sse_reduction_.sum()
        if total <= 0:
            return np.zeros(self.n_features)
        return self.sse_reduction_ / total

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(len(X))
        for i, row in enumerate(X):
            node = self.root
            while not node.is_leaf:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.value
        return out

    def depth(self) -> int:
        def walk(node):
            return 0 if node.is_leaf else 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)
