"""Confusion matrices, accuracy/precision/recall/F1, cross-validation and grid search."""
from __future__ import annotations

import csv
import enum
import itertools
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import TARGETED, TEST, TRAIN, LabeledDataset, PreprocessPolicy, Task
from .errors import ClassTooSmall, GridTooLarge, LengthMismatch, UnknownLabel
from .learners.model import ClassifierSpec, TrainedModel, fit

DEFAULT_GRID_CAP = 512
DEFAULT_FOLDS = 5


class Averaging(str, enum.Enum):
    BINARY_POSITIVE = "BINARY_POSITIVE"
    MACRO = "MACRO"
    WEIGHTED = "WEIGHTED"


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[i, j]`` = rows of true class ``classes[i]`` predicted as ``classes[j]``."""

    classes: tuple[str, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def index(self, label) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise UnknownLabel(f"{label!r} is not one of {list(self.classes)}") from None

    def tp(self, label) -> int:
        i = self.index(label)
        return int(self.counts[i, i])

    def fp(self, label) -> int:
        i = self.index(label)
        return int(self.counts[:, i].sum() - self.counts[i, i])

    def fn(self, label) -> int:
        i = self.index(label)
        return int(self.counts[i, :].sum() - self.counts[i, i])

    def tn(self, label) -> int:
        return self.total - self.tp(label) - self.fp(label) - self.fn(label)

    def binary(self, positive) -> tuple[int, int, int, int]:
        """(TP, FP, TN, FN) with ``positive`` as the positive class."""
        return self.tp(positive), self.fp(positive), self.tn(positive), self.fn(positive)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    averaging: Averaging
    per_class: dict
    confusion: ConfusionMatrix
    positive_class: str | None = None


def _ratio(num, den) -> float:
    return num / den if den else 0.0


def f1_score(precision: float, recall: float) -> float:
    return _ratio(2 * precision * recall, precision + recall)


def confusion_matrix(truth, predicted, labels: Sequence | None = None) -> ConfusionMatrix:
    truth = [str(t) for t in truth]
    predicted = [str(p) for p in predicted]
    if len(truth) != len(predicted):
        raise LengthMismatch(f"{len(truth)} true labels but {len(predicted)} predictions")
    if labels is None:
        classes = tuple(sorted(set(truth) | set(predicted)))
    else:
        classes = tuple(str(c) for c in labels)
        unknown = (set(truth) | set(predicted)) - set(classes)
        if unknown:
            raise UnknownLabel(f"labels {sorted(unknown)} are outside {list(classes)}")
    pos = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    np.add.at(counts, ([pos[t] for t in truth], [pos[p] for p in predicted]), 1)
    return ConfusionMatrix(classes, counts)


def compute_metrics(truth, predicted, positive_class: str | None = None,
                    averaging: Averaging | str | None = None, labels: Sequence | None = None
                    ) -> MetricsReport:
    """Accuracy, precision, recall and F1.

    With ``positive_class`` the binary formulas are applied to that class.
    Otherwise per-class one-vs-rest scores are averaged (MACRO: unweighted
    mean over classes; WEIGHTED, the default: weighted by true support).
    Zero denominators give 0.
    """
    if len(truth) == 0:
        raise LengthMismatch("need at least one row")
    if positive_class is not None and labels is None:
        labels = sorted({str(t) for t in truth} | {str(p) for p in predicted} | {str(positive_class)})
    cm = confusion_matrix(truth, predicted, labels)
    if positive_class is not None:
        averaging = Averaging.BINARY_POSITIVE
        positive_class = str(positive_class)
    averaging = Averaging(averaging or Averaging.WEIGHTED)

    per_class = {}
    for c in cm.classes:
        tp, fp, fn = cm.tp(c), cm.fp(c), cm.fn(c)
        p, r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        per_class[c] = ClassMetrics(p, r, f1_score(p, r), tp + fn)

    total = cm.total
    accuracy = int(np.trace(cm.counts)) / total
    if averaging is Averaging.BINARY_POSITIVE:
        if positive_class is None:
            raise ValueError("BINARY_POSITIVE averaging needs positive_class")
        if len(cm.classes) > 2:
            raise ValueError(f"binary metrics need at most 2 classes, got {list(cm.classes)}")
        tp, fp, tn, fn = cm.binary(positive_class)
        accuracy = (tp + tn) / (tp + tn + fp + fn)
        precision = _ratio(tp, tp + fp)
        recall = _ratio(tp, tp + fn)
        f1 = f1_score(precision, recall)
    elif averaging is Averaging.MACRO:
        k = len(cm.classes)
        precision = sum(m.precision for m in per_class.values()) / k
        recall = sum(m.recall for m in per_class.values()) / k
        f1 = sum(m.f1 for m in per_class.values()) / k
    else:
        precision = sum(m.support * m.precision for m in per_class.values()) / total
        # support * tp / support == tp, so weighted recall is exactly the accuracy
        recall = sum(cm.tp(c) for c in cm.classes) / total
        f1 = sum(m.support * m.f1 for m in per_class.values()) / total
    return MetricsReport(accuracy, precision, recall, f1, averaging, per_class, cm, positive_class)


# --------------------------------------------------------------------------
# Cross-validation and grid search
# --------------------------------------------------------------------------

def stratified_folds(y, k: int, seed: int) -> np.ndarray:
    """Fold index per row: classes shuffled then dealt round-robin across folds."""
    if k < 2:
        raise ValueError(f"need k >= 2 folds, got {k}")
    y = np.asarray(y).astype(str)
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=int)
    offset = 0
    for c in sorted(set(y)):
        members = np.flatnonzero(y == c)
        if len(members) < k:
            raise ClassTooSmall(f"class {c!r} has {len(members)} rows, fewer than {k} folds")
        members = members[rng.permutation(len(members))]
        folds[members] = (offset + np.arange(len(members))) % k
        offset += len(members)
    return folds


def score_predictions(truth, predicted, task: Task, scoring: str = "accuracy") -> float:
    if scoring == "accuracy":
        return float(np.mean(np.asarray(truth) == np.asarray(predicted)))
    if scoring == "f1":
        if task is Task.BINARY:
            return compute_metrics(truth, predicted, positive_class=TARGETED).f1
        return compute_metrics(truth, predicted, averaging=Averaging.WEIGHTED).f1
    raise ValueError(f"unknown scoring {scoring!r}")


@dataclass(frozen=True)
class CVResult:
    scores: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.scores))


def cross_validate(spec: ClassifierSpec, data: LabeledDataset, k: int = DEFAULT_FOLDS,
                   task: Task | str = Task.BINARY, seed: int = 0,
                   policy: PreprocessPolicy = PreprocessPolicy(), scoring: str = "accuracy") -> CVResult:
    """Stratified k-fold scores; preprocessing is refit inside every fold."""
    task = Task(task)
    rows = data.task_rows(task)
    y = data.labels(task)[rows].astype(str)
    folds = stratified_folds(y, k, seed)
    scores = []
    for f in range(k):
        held = rows[folds == f]
        model = fit(spec, data.subset(rows[folds != f]), task, policy)
        pred = model.predict(data.X[held])
        scores.append(score_predictions(data.labels(task)[held].astype(str), pred, task, scoring))
    return CVResult(tuple(scores))


def grid_combinations(grid: Mapping[str, Sequence]) -> list[dict]:
    """Cartesian product with parameter names sorted and values in the given order."""
    names = sorted(grid)
    for name in names:
        if len(grid[name]) == 0:
            raise ValueError(f"grid entry {name!r} has no values")
    return [dict(zip(names, combo)) for combo in itertools.product(*(grid[n] for n in names))]


@dataclass
class GridSearchResult:
    best_spec: ClassifierSpec
    results: list[tuple[dict, CVResult]]
    model: TrainedModel | None = None
    best_index: int = 0

    def write_csv(self, fh) -> None:
        names = sorted(self.results[0][0]) if self.results else []
        k = len(self.results[0][1].scores) if self.results else 0
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(names + [f"fold_{i + 1}" for i in range(k)] + ["mean"])
        for params, cv in self.results:
            w.writerow([json.dumps(params[n]) for n in names]
                       + [repr(s) for s in cv.scores] + [repr(cv.mean)])


def grid_search(kind: str, grid: Mapping[str, Sequence], data: LabeledDataset, k: int = DEFAULT_FOLDS,
                task: Task | str = Task.BINARY, seed: int = 0, *,
                base_params: Mapping | None = None, policy: PreprocessPolicy = PreprocessPolicy(),
                scoring: str = "accuracy", cap: int = DEFAULT_GRID_CAP, refit: bool = True
                ) -> GridSearchResult:
    """Cross-validate every grid combination and refit the best on all of ``data``.

    The first combination (in :func:`grid_combinations` order) with the
    highest mean score wins.
    """
    combos = grid_combinations(grid)
    if len(combos) > cap:
        raise GridTooLarge(f"grid has {len(combos)} combinations, cap is {cap}")
    base = dict(base_params or {})
    results = []
    best_i, best_score = 0, -np.inf
    for i, params in enumerate(combos):
        spec = ClassifierSpec(kind, {**base, **params}, seed)
        cv = cross_validate(spec, data, k, task, seed, policy, scoring)
        results.append((params, cv))
        if cv.mean > best_score:
            best_i, best_score = i, cv.mean
    best_spec = ClassifierSpec(kind, {**base, **combos[best_i]}, seed)
    model = fit(best_spec, data, task, policy) if refit else None
    return GridSearchResult(best_spec, results, model, best_i)


# --------------------------------------------------------------------------
# Suite evaluation and report tables
# --------------------------------------------------------------------------

REPORT_COLUMNS = ("Model", "Accuracy", "Precision", "Recall", "F1")


@dataclass
class SuiteRow:
    model: str
    metrics: MetricsReport
    spec: ClassifierSpec
    cv_mean: float | None = None

    def values(self) -> tuple[float, float, float, float]:
        m = self.metrics
        return m.accuracy, m.precision, m.recall, m.f1


@dataclass
class SuiteReport:
    task: Task
    averaging: Averaging
    rows: list[SuiteRow] = field(default_factory=list)

    def table(self) -> list[tuple[str, ...]]:
        return [REPORT_COLUMNS] + [(r.model,) + tuple(f"{v:.4f}" for v in r.values()) for r in self.rows]

    def to_text(self) -> str:
        table = self.table()
        widths = [max(len(row[i]) for row in table) for i in range(len(REPORT_COLUMNS))]
        return "".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n"
                       for row in table)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerows(self.table())


def evaluate_suite(specs: Sequence[ClassifierSpec], data: LabeledDataset, task: Task | str = Task.BINARY,
                   grids: Mapping[str, Mapping[str, Sequence]] | None = None, k: int = DEFAULT_FOLDS,
                   policy: PreprocessPolicy = PreprocessPolicy(), positive_class: str = TARGETED,
                   averaging: Averaging | str | None = None, scoring: str = "accuracy") -> SuiteReport:
    """Tune each spec on TRAIN by cross-validated grid search, then score it once on TEST.

    Binary reports use ``positive_class`` metrics; multi-class reports use
    WEIGHTED averaging unless ``averaging`` says otherwise.
    """
    task = Task(task)
    if data.split is None:
        raise ValueError("evaluate_suite needs a dataset with a split")
    if task is Task.BINARY and averaging in (None, Averaging.BINARY_POSITIVE, "BINARY_POSITIVE"):
        averaging = Averaging.BINARY_POSITIVE
    else:
        averaging = Averaging(averaging or Averaging.WEIGHTED)
    train, test = data.partition(TRAIN), data.partition(TEST)
    X_test, y_test = test.task_arrays(task)
    report = SuiteReport(task, averaging)
    for spec in specs:
        grid = (grids or {}).get(spec.kind)
        cv_mean = None
        if grid is not None:
            gs = grid_search(spec.kind, grid, train, k, task, spec.seed, base_params=spec.hyperparameters,
                             policy=policy, scoring=scoring)
            model, spec_used = gs.model, gs.best_spec
            cv_mean = gs.results[gs.best_index][1].mean
        else:
            model, spec_used = fit(spec, train, task, policy), spec
        pred = model.predict(X_test)
        if averaging is Averaging.BINARY_POSITIVE:
            metrics = compute_metrics(y_test, pred, positive_class=positive_class)
        else:
            metrics = compute_metrics(y_test, pred, averaging=averaging)
        report.rows.append(SuiteRow(spec.display_name, metrics, spec_used, cv_mean))
    return report
