"""Classifier specs, the fitted-model wrapper and its JSON document format."""
from __future__ import annotations

import inspect
import json
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from ..dataset import LabeledDataset, PreprocessPolicy, ScalerParams, Task, preprocess
from ..errors import CorruptDocument, InvalidHyperparameter, VersionMismatch
from .base import FlowClassifier, MajorityClassifier
from .bayes import GaussianNBClassifier
from .boosting import AdaBoostClassifier, GradientBoostingClassifier
from .forest import RandomForestClassifier
from .neighbors import KNNClassifier
from .svm import LinearSVMClassifier
from .tree import DecisionTreeClassifier

MODEL_FORMAT = "wfprint.model"
MODEL_SCHEMA_VERSION = 1

KINDS: dict[str, type[FlowClassifier]] = {
    "DT": DecisionTreeClassifier,
    "RF": RandomForestClassifier,
    "GBM": GradientBoostingClassifier,
    "ADAB": AdaBoostClassifier,
    "SVM": LinearSVMClassifier,
    "NB": GaussianNBClassifier,
    "KNN": KNNClassifier,
}
# Reference baseline; not part of the default roster.
EXTRA_KINDS: dict[str, type[FlowClassifier]] = {"MAJORITY": MajorityClassifier}

PAPER_KINDS = tuple(KINDS)

DISPLAY_NAMES = {"DT": "DT", "RF": "RF", "GBM": "GBM", "ADAB": "AdaB", "SVM": "SVM", "NB": "NB",
                 "KNN": "KNN", "MAJORITY": "Majority"}

ALIASES = {"lambda": "lam"}

DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "DT": {"max_depth": [4, 8, 16, None]},
    "RF": {"n_estimators": [100, 300], "max_depth": [8, 16, None]},
    "GBM": {"n_estimators": [100, 300], "learning_rate": [0.05, 0.1], "max_depth": [2, 3]},
    "ADAB": {"n_estimators": [50, 200]},
    "SVM": {"lam": [1e-4, 1e-2], "epochs": [20]},
    "NB": {},
    "KNN": {"k": [3, 5, 11]},
}


def estimator_class(kind: str) -> type[FlowClassifier]:
    kind = kind.upper()
    if kind in KINDS:
        return KINDS[kind]
    if kind in EXTRA_KINDS:
        return EXTRA_KINDS[kind]
    raise InvalidHyperparameter(f"unknown classifier kind {kind!r}")


def hyperparameter_names(kind: str) -> tuple[str, ...]:
    sig = inspect.signature(estimator_class(kind).__init__)
    return tuple(p for p in sig.parameters if p not in ("self", "random_state"))


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        kind = self.kind.upper()
        estimator_class(kind)
        params = {ALIASES.get(k, k): v for k, v in dict(self.hyperparameters).items()}
        allowed = hyperparameter_names(kind)
        unknown = sorted(set(params) - set(allowed))
        if unknown:
            raise InvalidHyperparameter(f"{kind} has no hyperparameter(s) {unknown}; allowed: {list(allowed)}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "hyperparameters", {k: params[k] for k in sorted(params)})
        self.build()._check_params()

    def build(self) -> FlowClassifier:
        return estimator_class(self.kind)(**self.hyperparameters, random_state=self.seed)

    def with_params(self, **params) -> "ClassifierSpec":
        return ClassifierSpec(self.kind, {**self.hyperparameters, **params}, self.seed)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyperparameters": dict(self.hyperparameters), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClassifierSpec":
        return cls(d["kind"], d.get("hyperparameters", {}), d.get("seed", 0))

    @property
    def display_name(self) -> str:
        return DISPLAY_NAMES.get(self.kind, self.kind)


@dataclass
class TrainedModel:
    """A fitted estimator together with the preprocessing it was trained behind."""

    spec: ClassifierSpec
    task: Task
    policy: PreprocessPolicy
    scaler: ScalerParams
    estimator: FlowClassifier
    feature_names: tuple[str, ...]

    @property
    def classes(self) -> list[str]:
        return self.estimator.classes_.tolist()

    def transform(self, rows) -> np.ndarray:
        return self.scaler.apply(np.atleast_2d(np.asarray(rows, dtype=float)))

    def predict(self, rows) -> np.ndarray:
        return self.estimator.predict(self.transform(rows))

    def predict_proba(self, rows) -> np.ndarray:
        return self.estimator.predict_proba(self.transform(rows))

    def decision_function(self, rows) -> np.ndarray:
        return self.estimator.decision_function(self.transform(rows))

    # document format ----------------------------------------------------

    def to_document(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "schema_version": MODEL_SCHEMA_VERSION,
            "spec": self.spec.to_dict(),
            "task": self.task.value,
            "policy": self.policy.to_dict(),
            "feature_names": list(self.feature_names),
            "classes": self.classes,
            "scaler": self.scaler.to_dict(),
            "estimator": self.estimator.to_dict(),
        }

    def save(self) -> bytes:
        return dumps(self.to_document()).encode("utf-8")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), default=_json_default,
                      allow_nan=False) + "\n"


def save(model: TrainedModel) -> bytes:
    return model.save()


def load(document: bytes | str) -> TrainedModel:
    try:
        text = document.decode("utf-8") if isinstance(document, (bytes, bytearray)) else document
        doc = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptDocument(f"model document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise CorruptDocument("not a wfprint model document")
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise VersionMismatch(f"model schema_version {version!r}, this build reads {MODEL_SCHEMA_VERSION}")
    try:
        spec = ClassifierSpec.from_dict(doc["spec"])
        estimator = estimator_class(spec.kind).from_dict(doc["estimator"])
        model = TrainedModel(spec, Task(doc["task"]), PreprocessPolicy(**doc["policy"]),
                             ScalerParams.from_dict(doc["scaler"]), estimator,
                             tuple(doc["feature_names"]))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptDocument(f"model document is incomplete: {exc}") from exc
    if model.classes != list(doc["classes"]):
        raise CorruptDocument("class list does not match estimator state")
    return model


def fit(spec: ClassifierSpec, train: LabeledDataset, task: Task | str = Task.BINARY,
        policy: PreprocessPolicy = PreprocessPolicy()) -> TrainedModel:
    """Preprocess ``train`` (all rows, split ignored) and fit ``spec`` on the task's labels."""
    task = Task(task)
    rows = train.subset(train.task_rows(task)).with_split(None)
    prepared, scaler = preprocess(rows, policy)
    X, y = prepared.task_arrays(task)
    estimator = spec.build().fit(X, y)
    return TrainedModel(spec, task, policy, scaler, estimator, tuple(train.feature_names))
