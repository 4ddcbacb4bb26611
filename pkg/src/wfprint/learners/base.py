"""Common estimator plumbing: validation, argmax prediction, state export."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..errors import ArityMismatch, DegenerateInput, InvalidHyperparameter, LengthMismatch, Unsupported


def check_int(name, value, minimum):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise InvalidHyperparameter(f"{name} must be an integer >= {minimum}, got {value!r}")


def check_max_depth(value):
    if value is not None:
        check_int("max_depth", value, 1)


def check_positive(name, value):
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise InvalidHyperparameter(f"{name} must be a positive number, got {value!r}")


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class FlowClassifier(ClassifierMixin, BaseEstimator):
    """Base for the native classifiers.

    Subclasses implement ``_fit(X, y_idx, sample_weight)`` on class indices
    and ``_proba`` (or ``_scores`` for margin-only models).  Prediction is the
    argmax of the per-class scores; ``np.argmax`` resolves ties to the lowest
    class index.
    """

    kind = ""
    has_proba = True

    def _check_params(self):
        pass

    def fit(self, X, y, sample_weight=None):
        self._check_params()
        X = check_array(X, dtype=float)
        y = np.asarray(y)
        if len(y) != len(X):
            raise LengthMismatch(f"X has {len(X)} rows but y has {len(y)}")
        classes, y_idx = np.unique(y, return_inverse=True)
        if len(classes) < 2:
            raise DegenerateInput(f"need at least 2 classes, got {classes.tolist()}")
        self.classes_ = classes
        self.n_features_in_ = X.shape[1]
        self._fit(X, y_idx, sample_weight)
        return self

    def _check_X(self, X) -> np.ndarray:
        check_is_fitted(self, "classes_")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ArityMismatch(f"expected {self.n_features_in_} features, got shape {X.shape}")
        return check_array(X, dtype=float, ensure_min_samples=0)

    def _scores(self, X):
        return self._proba(X)

    def decision_function(self, X) -> np.ndarray:
        return self._scores(self._check_X(X))

    def predict_proba(self, X) -> np.ndarray:
        if not self.has_proba:
            raise Unsupported(f"{type(self).__name__} does not define probabilities")
        return self._proba(self._check_X(X))

    def predict(self, X) -> np.ndarray:
        scores = self._scores(self._check_X(X))
        return self.classes_[np.argmax(scores, axis=1)]

    # serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        check_is_fitted(self, "classes_")
        return {"params": self.get_params(), "classes": self.classes_.tolist(),
                "n_features_in": int(self.n_features_in_), "state": self._state()}

    @classmethod
    def from_dict(cls, d) -> "FlowClassifier":
        est = cls(**d["params"])
        est.classes_ = np.asarray(d["classes"])
        est.n_features_in_ = int(d["n_features_in"])
        est._load_state(d["state"])
        return est


class MajorityClassifier(FlowClassifier):
    """Always predicts the most frequent training class (reference baseline)."""

    kind = "MAJORITY"

    def __init__(self, random_state=0):
        self.random_state = random_state

    def _fit(self, X, y, sample_weight=None):
        self.prior_ = np.bincount(y, minlength=len(self.classes_)) / len(y)

    def _proba(self, X):
        return np.tile(self.prior_, (len(X), 1))

    def _state(self):
        return {"prior": self.prior_.tolist()}

    def _load_state(self, state):
        self.prior_ = np.asarray(state["prior"], dtype=float)
