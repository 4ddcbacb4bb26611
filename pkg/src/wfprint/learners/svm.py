from __future__ import annotations

import numpy as np

from .base import FlowClassifier, check_int, check_positive


class LinearSVMClassifier(FlowClassifier):
    """One-vs-rest linear SVM trained with Pegasos subgradient steps.

    The bias is learnt as the weight of a constant input column.  Every
    class column sees the same per-epoch shuffle, drawn from
    ``random_state``, with step size ``1 / (lam * t)`` followed by projection
    onto the ball of radius ``1 / sqrt(lam)``.  The returned weights are the
    end-of-epoch iterate with the lowest objective, so ``objective_history_``
    (best objective after each epoch) never increases.  Only margins are
    exposed; ``predict_proba`` raises :class:`~wfprint.errors.Unsupported`.
    """

    kind = "SVM"
    has_proba = False

    def __init__(self, lam=1e-4, epochs=20, random_state=0):
        self.lam = lam
        self.epochs = epochs
        self.random_state = random_state

    def _check_params(self):
        check_positive("lam", self.lam)
        check_int("epochs", self.epochs, 1)

    @staticmethod
    def _augment(X):
        return np.column_stack([X, np.ones(len(X))])

    def objective(self, X, y_idx) -> float:
        """Regularised mean hinge loss summed over the one-vs-rest problems."""
        Xa = self._augment(np.asarray(X, dtype=float))
        Y = self._signs(np.asarray(y_idx))
        hinge = np.maximum(0.0, 1.0 - Y * (Xa @ self.coef_.T))
        return float(0.5 * self.lam * (self.coef_ ** 2).sum() + hinge.sum(axis=1).mean())

    def _signs(self, y_idx):
        Y = -np.ones((len(y_idx), len(self.classes_)))
        Y[np.arange(len(y_idx)), y_idx] = 1.0
        return Y

    def _fit(self, X, y, sample_weight=None):
        Xa = self._augment(X)
        n, d = Xa.shape
        Y = self._signs(y)
        W = np.zeros((len(self.classes_), d))
        rng = np.random.default_rng(self.random_state)
        lam = float(self.lam)
        radius = 1.0 / np.sqrt(lam)
        t = 0
        best, best_obj = W.copy(), np.inf
        self.objective_history_ = []
        for _ in range(self.epochs):
            for i in rng.permutation(n):
                t += 1
                x, yi = Xa[i], Y[i]
                viol = yi * (W @ x) < 1.0
                W *= 1.0 - 1.0 / t
                if viol.any():
                    W[viol] += (1.0 / (lam * t)) * yi[viol, None] * x
                # projection onto the ball that contains the optimum
                norms = np.linalg.norm(W, axis=1)
                big = norms > radius
                if big.any():
                    W[big] *= (radius / norms[big])[:, None]
            self.coef_ = W
            obj = self.objective(X, y)
            if obj < best_obj:
                best, best_obj = W.copy(), obj
            self.objective_history_.append(best_obj)
        self.coef_ = best

    def _scores(self, X):
        return self._augment(X) @ self.coef_.T

    def _state(self):
        return {"coef": self.coef_.tolist(), "objective_history": self.objective_history_}

    def _load_state(self, state):
        self.coef_ = np.asarray(state["coef"], dtype=float)
        self.objective_history_ = list(state["objective_history"])
