"""CART trees: Gini classification and squared-error regression."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidHyperparameter
from .base import FlowClassifier, check_int, check_max_depth

LEAF = -1


@dataclass
class Tree:
    """Flat array representation; ``feature[i] == -1`` marks a leaf.

    Samples with ``x[feature] <= threshold`` go to ``left``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.intp)
        active = np.arange(len(X))
        while len(active):
            f = self.feature[node[active]]
            inner = f >= 0
            active = active[inner]
            if not len(active):
                break
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max()) if self.n_nodes else 0

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Tree":
        return cls(np.asarray(d["feature"], dtype=np.intp), np.asarray(d["threshold"], dtype=float),
                   np.asarray(d["left"], dtype=np.intp), np.asarray(d["right"], dtype=np.intp),
                   np.asarray(d["value"], dtype=float))


def _best_split_for_feature(xf, targets, weights, criterion, min_leaf):
    """Return (impurity, threshold) of the best split on one feature, or None.

    ``targets`` is the weighted one-hot matrix (gini) or the stacked
    (w, w*r, w*r^2) columns (squared error).
    """
    order = np.argsort(xf, kind="stable")
    xs = xf[order]
    n = len(xs)
    pos = np.flatnonzero(xs[:-1] < xs[1:])
    if min_leaf > 1:
        pos = pos[(pos + 1 >= min_leaf) & (n - pos - 1 >= min_leaf)]
    if not len(pos):
        return None
    cum = np.cumsum(targets[order], axis=0)
    total = cum[-1]
    left = cum[pos]
    right = total - left
    if criterion == "gini":
        wl = np.cumsum(weights[order])[pos]
        wr = weights.sum() - wl
        imp = (wl - (left * left).sum(axis=1) / wl) + (wr - (right * right).sum(axis=1) / wr)
    else:
        imp = (left[:, 2] - left[:, 1] ** 2 / left[:, 0]) + (right[:, 2] - right[:, 1] ** 2 / right[:, 0])
    best = int(np.argmin(imp))
    i = pos[best]
    lo, hi = xs[i], xs[i + 1]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return float(imp[best]), thr


def build_tree(X, y, *, criterion="gini", n_classes=None, sample_weight=None, max_depth=None,
               min_samples_split=2, min_samples_leaf=1, max_features=None, rng=None) -> Tree:
    """Grow a CART tree by exhaustive midpoint search.

    ``y`` holds class indices for ``criterion="gini"`` and real targets for
    ``"squared_error"``.  Any impure node with a valid split is split, even at
    zero impurity decrease.  With ``max_features`` set, features are visited
    in a random order until that many non-constant ones have been scanned;
    equal impurities resolve to the lowest feature index either way.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if criterion == "gini":
        y = np.asarray(y, dtype=np.intp)
        k = int(n_classes if n_classes is not None else y.max() + 1)
        targets = np.zeros((n, k))
        targets[np.arange(n), y] = w
    else:
        r = np.asarray(y, dtype=float)
        targets = np.column_stack([w, w * r, w * r * r])

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        t = targets[idx].sum(axis=0)
        if criterion == "gini":
            value.append(t / t.sum() if t.sum() > 0 else t)
        else:
            value.append([t[1] / t[0]] if t[0] > 0 else [0.0])
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        m = len(idx)
        if m < min_samples_split or m < 2 * min_samples_leaf:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        if criterion == "gini":
            if np.count_nonzero(targets[idx].sum(axis=0) > 0) <= 1:
                continue
        elif np.ptp(targets[idx, 1] / targets[idx, 0]) == 0:
            continue

        if max_features is None or max_features >= d:
            candidates = range(d)
            budget = d
        else:
            candidates = rng.permutation(d)
            budget = max_features
        best = None
        scanned = 0
        Xn, tn, wn = X[idx], targets[idx], w[idx]
        for f in candidates:
            if scanned >= budget:
                break
            col = Xn[:, f]
            if col.min() == col.max():
                continue
            scanned += 1
            res = _best_split_for_feature(col, tn, wn, criterion, min_samples_leaf)
            if res is None:
                continue
            cand = (res[0], int(f), res[1])
            if best is None or cand[:2] < best[:2]:
                best = cand
        if best is None:
            continue
        _, f, thr = best
        mask = Xn[:, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return Tree(np.asarray(feature, dtype=np.intp), np.asarray(threshold, dtype=float),
                np.asarray(left, dtype=np.intp), np.asarray(right, dtype=np.intp),
                np.asarray(value, dtype=float))


def resolve_max_features(max_features, d: int) -> int | None:
    if max_features is None:
        return None
    if max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(d)))
    if isinstance(max_features, (int, np.integer)) and not isinstance(max_features, bool) and max_features >= 1:
        return min(int(max_features), d)
    raise InvalidHyperparameter(f"max_features must be None, 'sqrt' or a positive int, got {max_features!r}")


class DecisionTreeClassifier(FlowClassifier):
    """CART classifier with Gini impurity."""

    kind = "DT"

    def __init__(self, max_depth=None, min_samples_split=2, min_samples_leaf=1, max_features=None,
                 random_state=0):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.random_state = random_state

    def _check_params(self):
        check_max_depth(self.max_depth)
        check_int("min_samples_split", self.min_samples_split, 2)
        check_int("min_samples_leaf", self.min_samples_leaf, 1)

    def _fit(self, X, y, sample_weight=None):
        m = resolve_max_features(self.max_features, X.shape[1])
        rng = np.random.default_rng(self.random_state)
        self.tree_ = build_tree(X, y, n_classes=len(self.classes_), sample_weight=sample_weight,
                                max_depth=self.max_depth, min_samples_split=self.min_samples_split,
                                min_samples_leaf=self.min_samples_leaf, max_features=m, rng=rng)

    def _proba(self, X):
        return self.tree_.predict_value(X)

    def _state(self):
        return {"tree": self.tree_.to_dict()}

    def _load_state(self, state):
        self.tree_ = Tree.from_dict(state["tree"])
