from __future__ import annotations

import numpy as np

from .base import FlowClassifier, check_int, check_max_depth
from .tree import Tree, build_tree, resolve_max_features


class RandomForestClassifier(FlowClassifier):
    """Bagged CART trees with per-split feature subsampling and majority vote.

    Tree ``i`` draws from a generator seeded with ``random_state + i``, so the
    forest is identical whether trees are grown serially or in parallel.
    ``predict_proba`` returns vote fractions.
    """

    kind = "RF"

    def __init__(self, n_estimators=100, max_depth=None, min_samples_split=2, min_samples_leaf=1,
                 max_features="sqrt", bootstrap=True, random_state=0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.random_state = random_state

    def _check_params(self):
        check_int("n_estimators", self.n_estimators, 1)
        check_max_depth(self.max_depth)
        check_int("min_samples_split", self.min_samples_split, 2)
        check_int("min_samples_leaf", self.min_samples_leaf, 1)

    def _fit(self, X, y, sample_weight=None):
        n, d = X.shape
        m = resolve_max_features(self.max_features, d)
        self.trees_ = []
        for i in range(self.n_estimators):
            rng = np.random.default_rng(self.random_state + i)
            rows = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            self.trees_.append(build_tree(
                X[rows], y[rows], n_classes=len(self.classes_), max_depth=self.max_depth,
                min_samples_split=self.min_samples_split, min_samples_leaf=self.min_samples_leaf,
                max_features=m, rng=rng))

    def _proba(self, X):
        votes = np.zeros((len(X), len(self.classes_)))
        rows = np.arange(len(X))
        for tree in self.trees_:
            votes[rows, np.argmax(tree.predict_value(X), axis=1)] += 1
        return votes / len(self.trees_)

    def _state(self):
        return {"trees": [t.to_dict() for t in self.trees_]}

    def _load_state(self, state):
        self.trees_ = [Tree.from_dict(t) for t in state["trees"]]
