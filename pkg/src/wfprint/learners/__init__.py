"""Native implementations of the seven flow classifiers."""
from .base import FlowClassifier, MajorityClassifier
from .bayes import GaussianNBClassifier
from .boosting import AdaBoostClassifier, GradientBoostingClassifier
from .forest import RandomForestClassifier
from .model import (
    DEFAULT_GRIDS,
    KINDS,
    PAPER_KINDS,
    ClassifierSpec,
    TrainedModel,
    fit,
    load,
    save,
)
from .neighbors import KNNClassifier
from .svm import LinearSVMClassifier
from .tree import DecisionTreeClassifier, Tree, build_tree

__all__ = [
    "AdaBoostClassifier", "ClassifierSpec", "DEFAULT_GRIDS", "DecisionTreeClassifier",
    "FlowClassifier", "GaussianNBClassifier", "GradientBoostingClassifier", "KINDS",
    "KNNClassifier", "LinearSVMClassifier", "MajorityClassifier", "PAPER_KINDS",
    "RandomForestClassifier", "TrainedModel", "Tree", "build_tree", "fit", "load", "save",
]
