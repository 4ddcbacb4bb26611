"""Gradient boosting (logistic / softmax deviance) and SAMME AdaBoost."""
from __future__ import annotations

import numpy as np

from ..errors import InvalidHyperparameter
from .base import FlowClassifier, check_int, check_max_depth, check_positive, softmax
from .tree import Tree, build_tree

NEWTON_FLOOR = 1e-12


def sigmoid(f):
    return np.exp(-np.logaddexp(0.0, -f))


class GradientBoostingClassifier(FlowClassifier):
    """Stage-wise additive regression trees.

    Two classes: one tree per stage on the logistic residuals ``y - p`` with
    Newton leaf values ``sum(r) / sum(p(1-p))``.  K > 2 classes: one tree per
    class per stage on the softmax residuals, leaf values
    ``(K-1)/K * sum(r) / sum(|r|(1-|r|))``.
    """

    kind = "GBM"

    def __init__(self, n_estimators=100, learning_rate=0.1, max_depth=3, min_samples_leaf=1,
                 random_state=0):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.random_state = random_state

    def _check_params(self):
        check_int("n_estimators", self.n_estimators, 1)
        check_positive("learning_rate", self.learning_rate)
        check_max_depth(self.max_depth)
        check_int("min_samples_leaf", self.min_samples_leaf, 1)

    @property
    def _binary(self) -> bool:
        return len(self.classes_) == 2

    def _fit(self, X, y, sample_weight=None):
        k = len(self.classes_)
        prior = np.bincount(y, minlength=k) / len(y)
        if self._binary:
            self.init_ = np.array([np.log(prior[1] / prior[0])])
        else:
            self.init_ = np.log(prior)
        F = self._initial_scores(len(X))
        self.stages_ = []
        for _ in range(self.n_estimators):
            trees = []
            # residuals are the negative loss gradient
            R = -self.loss_gradient(y, F)
            if self._binary:
                p = sigmoid(F)
                tree = self._grow(X, R, p * (1 - p), 1.0)
                F = F + self.learning_rate * tree.predict_value(X)[:, 0]
                trees.append(tree)
            else:
                F = F.copy()
                for c in range(k):
                    r = R[:, c]
                    ar = np.abs(r)
                    tree = self._grow(X, r, ar * (1 - ar), (k - 1) / k)
                    F[:, c] += self.learning_rate * tree.predict_value(X)[:, 0]
                    trees.append(tree)
            self.stages_.append(trees)

    def _grow(self, X, residual, hessian, factor) -> Tree:
        tree = build_tree(X, residual, criterion="squared_error", max_depth=self.max_depth,
                          min_samples_leaf=self.min_samples_leaf)
        leaves = tree.apply(X)
        num = np.bincount(leaves, weights=residual, minlength=tree.n_nodes)
        den = np.bincount(leaves, weights=hessian, minlength=tree.n_nodes)
        tree.value = (factor * num / np.maximum(den, NEWTON_FLOOR))[:, None]
        return tree

    def _initial_scores(self, n):
        if self._binary:
            return np.full(n, self.init_[0])
        return np.tile(self.init_, (n, 1))

    def raw_scores(self, X, n_stages: int | None = None) -> np.ndarray:
        """Additive scores after ``n_stages`` stages (all stages by default)."""
        X = np.asarray(X, dtype=float)
        F = self._initial_scores(len(X)).astype(float)
        for trees in self.stages_[:n_stages]:
            if self._binary:
                F += self.learning_rate * trees[0].predict_value(X)[:, 0]
            else:
                for c, tree in enumerate(trees):
                    F[:, c] += self.learning_rate * tree.predict_value(X)[:, 0]
        return F

    def loss(self, y_idx, F) -> np.ndarray:
        """Per-sample deviance at scores ``F``.

        Written as ``log(1 + sum_{c != y} exp(F_c - F_y))`` so confident
        samples keep full relative precision.
        """
        y_idx = np.asarray(y_idx)
        F = np.asarray(F, dtype=float)
        if self._binary:
            return np.logaddexp(0.0, np.where(y_idx == 1, -F, F))
        rows = np.arange(len(F))
        d = F - F[rows, y_idx][:, None]
        d[rows, y_idx] = -np.inf
        m = d.max(axis=1)
        shift = np.maximum(m, 0.0)
        s = np.exp(d - shift[:, None]).sum(axis=1)
        return np.where(m > 0, shift + np.log(np.exp(-shift) + s), np.log1p(s))

    def loss_gradient(self, y_idx, F) -> np.ndarray:
        """Derivative of :meth:`loss` with respect to each sample's scores."""
        y_idx = np.asarray(y_idx)
        F = np.asarray(F, dtype=float)
        if self._binary:
            return np.where(y_idx == 1, -sigmoid(-F), sigmoid(F))
        g = softmax(F)
        rows = np.arange(len(F))
        g[rows, y_idx] = 0.0
        g[rows, y_idx] = -g.sum(axis=1)
        return g

    def _proba(self, X):
        F = self.raw_scores(X)
        if self._binary:
            p = sigmoid(F)
            return np.column_stack([1 - p, p])
        return softmax(F)

    def _state(self):
        return {"init": self.init_.tolist(),
                "stages": [[t.to_dict() for t in trees] for trees in self.stages_]}

    def _load_state(self, state):
        self.init_ = np.asarray(state["init"], dtype=float)
        self.stages_ = [[Tree.from_dict(t) for t in trees] for trees in state["stages"]]


class AdaBoostClassifier(FlowClassifier):
    """SAMME boosting of depth-1 or depth-2 CART trees."""

    kind = "ADAB"

    def __init__(self, n_estimators=50, max_depth=1, random_state=0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.random_state = random_state

    def _check_params(self):
        check_int("n_estimators", self.n_estimators, 1)
        if self.max_depth not in (1, 2) or isinstance(self.max_depth, bool):
            raise InvalidHyperparameter(f"max_depth must be 1 or 2, got {self.max_depth!r}")

    def _fit(self, X, y, sample_weight=None):
        n, k = len(y), len(self.classes_)
        w = np.full(n, 1.0 / n) if sample_weight is None else np.asarray(sample_weight, float)
        w = w / w.sum()
        self.prior_ = np.bincount(y, minlength=k) / n
        self.trees_, self.alphas_, self.errors_ = [], [], []
        for _ in range(self.n_estimators):
            tree = build_tree(X, y, n_classes=k, sample_weight=w, max_depth=self.max_depth)
            miss = np.argmax(tree.predict_value(X), axis=1) != y
            err = float(w[miss].sum() / w.sum())
            if err >= 1.0 - 1.0 / k:
                break
            self.errors_.append(err)
            self.trees_.append(tree)
            if err <= 0.0:
                self.alphas_.append(1.0)
                break
            alpha = np.log((1.0 - err) / err) + np.log(k - 1.0)
            self.alphas_.append(float(alpha))
            w = w * np.exp(alpha * miss)
            w = w / w.sum()

    def _decision(self, X):
        k = len(self.classes_)
        if not self.trees_:
            return np.tile(self.prior_, (len(X), 1))
        score = np.zeros((len(X), k))
        rows = np.arange(len(X))
        for tree, alpha in zip(self.trees_, self.alphas_):
            score[rows, np.argmax(tree.predict_value(X), axis=1)] += alpha
        return score

    def _scores(self, X):
        return self._decision(X)

    def _proba(self, X):
        if not self.trees_:
            return self._decision(X)
        return softmax(self._decision(X) / (len(self.classes_) - 1))

    def _state(self):
        return {"prior": self.prior_.tolist(), "alphas": self.alphas_, "errors": self.errors_,
                "trees": [t.to_dict() for t in self.trees_]}

    def _load_state(self, state):
        self.prior_ = np.asarray(state["prior"], dtype=float)
        self.alphas_ = list(state["alphas"])
        self.errors_ = list(state["errors"])
        self.trees_ = [Tree.from_dict(t) for t in state["trees"]]
