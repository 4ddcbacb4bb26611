from __future__ import annotations

import numpy as np

from .base import FlowClassifier, check_int

_CHUNK = 512


class KNNClassifier(FlowClassifier):
    """k-nearest neighbours by Euclidean distance with majority vote.

    Equal distances are resolved in favour of the lower training-row index.
    ``k`` larger than the training set is clipped to its size.
    """

    kind = "KNN"

    def __init__(self, k=5, random_state=0):
        self.k = k
        self.random_state = random_state

    def _check_params(self):
        check_int("k", self.k, 1)

    def _fit(self, X, y, sample_weight=None):
        self.fit_X_ = X.copy()
        self.fit_y_ = y.copy()

    def kneighbors(self, X) -> np.ndarray:
        """Indices of the k nearest training rows, nearest first."""
        X = np.asarray(X, dtype=float)
        k = min(self.k, len(self.fit_X_))
        out = np.empty((len(X), k), dtype=np.intp)
        for s in range(0, len(X), _CHUNK):
            block = X[s:s + _CHUNK]
            dist = ((block[:, None, :] - self.fit_X_[None, :, :]) ** 2).sum(axis=2)
            out[s:s + _CHUNK] = np.argsort(dist, axis=1, kind="stable")[:, :k]
        return out

    def _proba(self, X):
        nn = self.kneighbors(X)
        votes = np.zeros((len(X), len(self.classes_)))
        labels = self.fit_y_[nn]
        for j in range(nn.shape[1]):
            votes[np.arange(len(X)), labels[:, j]] += 1
        return votes / nn.shape[1]

    def _state(self):
        return {"X": self.fit_X_.tolist(), "y": self.fit_y_.tolist()}

    def _load_state(self, state):
        self.fit_X_ = np.asarray(state["X"], dtype=float).reshape(-1, self.n_features_in_)
        self.fit_y_ = np.asarray(state["y"], dtype=np.intp)
