"""CART trees (Gini) and a bootstrap-aggregated ensemble of them."""

from __future__ import annotations

import math

import numpy as np


def gini(pos: float, n: float) -> float:
    if n == 0:
        return 0.0
    p = pos / n
    return 2.0 * p * (1.0 - p)


def _best_split(x: np.ndarray, y: np.ndarray):
    """Best Gini threshold on one feature: (weighted impurity, threshold) or None."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = ys.size
    cum_pos = np.cumsum(ys)[:-1]
    n_left = np.arange(1, n)
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    total_pos = ys.sum()
    pl = cum_pos / n_left
    pr = (total_pos - cum_pos) / (n - n_left)
    imp = (n_left * 2 * pl * (1 - pl) + (n - n_left) * 2 * pr * (1 - pr)) / n
    imp = np.where(valid, imp, np.inf)
    k = int(np.argmin(imp))
    return float(imp[k]), float((xs[k] + xs[k + 1]) / 2.0)


class DecisionTree:
    """Binary CART grown to purity; nodes stored as flat lists for serialisation."""

    def __init__(self, max_features: int | None = None, min_leaf: int = 1):
        self.max_features = max_features
        self.min_leaf = min_leaf
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _leaf(self, y) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(np.mean(y)) if y.size else 0.0)
        return len(self.value) - 1

    def fit(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> "DecisionTree":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        d = X.shape[1]
        k = self.max_features or d
        stack = [(np.arange(y.size), None, None)]
        while stack:
            idx, parent, side = stack.pop()
            ys = y[idx]
            node = self._leaf(ys)
            if parent is not None:
                (self.left if side == 0 else self.right)[parent] = node
            pos = ys.sum()
            if pos == 0 or pos == ys.size or ys.size < 2 * self.min_leaf:
                continue
            feats = rng.permutation(d)
            best = None
            # draw beyond k only while the first k features give no valid split
            for c, f in enumerate(feats):
                if c >= k and best is not None:
                    break
                s = _best_split(X[idx, f], ys)
                if s is not None and (best is None or s[0] < best[0]):
                    best = (s[0], s[1], int(f))
            if best is None:
                continue
            _, thr, f = best
            go_left = X[idx, f] <= thr
            self.feature[node] = f
            self.threshold[node] = thr
            stack.append((idx[~go_left], node, 1))
            stack.append((idx[go_left], node, 0))
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0])
        for r in range(X.shape[0]):
            node = 0
            while self.feature[node] >= 0:
                node = self.left[node] if X[r, self.feature[node]] <= self.threshold[node] else self.right[node]
            out[r] = self.value[node]
        return out

    def to_json(self) -> dict:
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left,
                "right": self.right, "value": self.value}

    @classmethod
    def from_json(cls, d: dict) -> "DecisionTree":
        t = cls()
        t.feature, t.threshold = list(d["feature"]), list(d["threshold"])
        t.left, t.right, t.value = list(d["left"]), list(d["right"]), list(d["value"])
        return t


class BaggedTrees:
    def __init__(self, n_trees: int = 30, seed: int = 0, min_leaf: int = 1):
        if n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        self.n_trees = n_trees
        self.seed = seed
        self.min_leaf = min_leaf
        self.trees: list[DecisionTree] = []

    def fit(self, X, y) -> "BaggedTrees":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, d = X.shape
        mf = max(1, math.ceil(math.sqrt(d)))
        self.trees = []
        for t in range(self.n_trees):
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, t]))
            idx = rng.integers(0, n, size=n)
            self.trees.append(DecisionTree(mf, self.min_leaf).fit(X[idx], y[idx], rng))
        return self

    def score(self, X) -> np.ndarray:
        """Fraction of trees voting positive."""
        votes = np.zeros(np.asarray(X).shape[0])
        for tree in self.trees:
            votes += tree.predict_proba(X) > 0.5
        return votes / len(self.trees)
