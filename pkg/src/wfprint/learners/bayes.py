from __future__ import annotations

import numpy as np

from .base import FlowClassifier, softmax

VAR_FLOOR_FACTOR = 1e-9


class GaussianNBClassifier(FlowClassifier):
    """Gaussian naive Bayes scored in log space.

    Per-class variances are floored at 1e-9 times the largest feature
    variance of the training data.
    """

    kind = "NB"

    def __init__(self, random_state=0):
        self.random_state = random_state

    def _fit(self, X, y, sample_weight=None):
        k = len(self.classes_)
        counts = np.bincount(y, minlength=k)
        self.class_log_prior_ = np.log(counts / len(y))
        self.theta_ = np.vstack([X[y == c].mean(axis=0) for c in range(k)])
        var = np.vstack([X[y == c].var(axis=0) for c in range(k)])
        floor = VAR_FLOOR_FACTOR * X.var(axis=0).max()
        if floor <= 0:
            floor = VAR_FLOOR_FACTOR
        self.var_ = np.maximum(var, floor)

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty((len(X), len(self.classes_)))
        for c in range(len(self.classes_)):
            ll = -0.5 * (np.log(2 * np.pi * self.var_[c]) + (X - self.theta_[c]) ** 2 / self.var_[c])
            out[:, c] = self.class_log_prior_[c] + ll.sum(axis=1)
        return out

    def _scores(self, X):
        return self.joint_log_likelihood(X)

    def _proba(self, X):
        return softmax(self.joint_log_likelihood(X))

    def _state(self):
        return {"class_log_prior": self.class_log_prior_.tolist(), "theta": self.theta_.tolist(),
                "var": self.var_.tolist()}

    def _load_state(self, state):
        self.class_log_prior_ = np.asarray(state["class_log_prior"], dtype=float)
        self.theta_ = np.asarray(state["theta"], dtype=float)
        self.var_ = np.asarray(state["var"], dtype=float)
