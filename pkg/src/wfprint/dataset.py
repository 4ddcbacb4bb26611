"""Labelled flow datasets: labelling, preprocessing, splitting and CSV I/O."""
from __future__ import annotations

import csv
import enum
import ipaddress
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import (
    AmbiguousMatch,
    ClassTooSmall,
    EmptyAfterFilter,
    EmptyFile,
    HeaderMismatch,
    LengthMismatch,
)
from .features import FEATURE_NAMES, FeatureVector, feature_matrix
from .flows import Flow

SCHEMA_VERSION = 1

TARGETED = "TARGETED"
UNTARGETED = "UNTARGETED"

TRAIN = "TRAIN"
VALIDATION = "VALIDATION"
TEST = "TEST"
PARTITIONS = (TRAIN, VALIDATION, TEST)

LABEL_COLUMNS = ("binary_label", "site_label")
DATASET_CSV_COLUMNS = FEATURE_NAMES + LABEL_COLUMNS

IGNORE = "IGNORE"
ONEHOT = "ONEHOT"
MAX_CATEGORIES = 32


class Task(str, enum.Enum):
    BINARY = "BINARY"
    MULTICLASS = "MULTICLASS"


class MissingPolicy(str, enum.Enum):
    DROP = "DROP"
    IMPUTE_MEDIAN = "IMPUTE_MEDIAN"


class ScalerKind(str, enum.Enum):
    ZSCORE = "ZSCORE"
    MINMAX = "MINMAX"
    NONE = "NONE"


# --------------------------------------------------------------------------
# Monitored list
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MonitoredList:
    """Site labels with the address predicates (exact IPs or CIDR prefixes) that identify them."""

    entries: tuple[tuple[str, tuple], ...]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "MonitoredList":
        grouped: dict[str, list] = {}
        for label, matcher in pairs:
            grouped.setdefault(label, []).append(ipaddress.ip_network(matcher.strip(), strict=False))
        mlist = cls(tuple((label, tuple(nets)) for label, nets in grouped.items()))
        mlist.check_disjoint()
        return mlist

    @classmethod
    def parse(cls, text: str) -> "MonitoredList":
        pairs = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            label, sep, matcher = line.partition(",")
            if not sep or not label.strip() or not matcher.strip():
                raise ValueError(f"line {lineno}: expected 'label,matcher', got {line!r}")
            pairs.append((label.strip(), matcher.strip()))
        return cls.from_pairs(pairs)

    def to_text(self) -> str:
        return "".join(f"{label},{net}\n" for label, nets in self.entries for net in nets)

    def check_disjoint(self) -> None:
        for i, (la, nets_a) in enumerate(self.entries):
            for lb, nets_b in self.entries[i + 1:]:
                for na in nets_a:
                    for nb in nets_b:
                        if na.version == nb.version and na.overlaps(nb):
                            raise AmbiguousMatch(f"{na} ({la}) overlaps {nb} ({lb})")

    def matches(self, addr) -> set[str]:
        addr = ipaddress.ip_address(addr)
        return {label for label, nets in self.entries
                if any(addr.version == n.version and addr in n for n in nets)}


# --------------------------------------------------------------------------
# Dataset container
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix (NaN marks MISSING) with binary/site labels and an optional split.

    ``binary`` entries are TARGETED/UNTARGETED, or None for unlabelled rows.
    """

    X: np.ndarray
    binary: np.ndarray
    site: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES
    split: np.ndarray | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float).reshape(-1, len(self.feature_names))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "binary", np.asarray(self.binary, dtype=object).reshape(-1))
        object.__setattr__(self, "site", np.asarray(self.site, dtype=object).reshape(-1))
        n = len(X)
        if len(self.binary) != n or len(self.site) != n:
            raise LengthMismatch("features and labels are not aligned")
        for b, s in zip(self.binary, self.site):
            if b not in (TARGETED, UNTARGETED, None):
                raise ValueError(f"invalid binary label {b!r}")
            if (s is not None) != (b == TARGETED):
                raise ValueError("site_label must be set exactly for TARGETED rows")
        if self.split is not None:
            split = np.asarray(self.split, dtype=object).reshape(-1)
            if len(split) != n or not set(split) <= set(PARTITIONS):
                raise ValueError("split must assign every row to TRAIN/VALIDATION/TEST")
            object.__setattr__(self, "split", split)

    def __len__(self) -> int:
        return len(self.X)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=int)
        return replace(self, X=self.X[idx], binary=self.binary[idx], site=self.site[idx],
                       split=None if self.split is None else self.split[idx])

    def partition(self, name: str) -> "LabeledDataset":
        if self.split is None:
            raise ValueError("dataset has no split")
        return self.subset(np.flatnonzero(self.split == name))

    def with_split(self, split) -> "LabeledDataset":
        return replace(self, split=split)

    def rows(self):
        for x, b, s in zip(self.X, self.binary, self.site):
            yield x, b, s

    def labels(self, task: Task | str) -> np.ndarray:
        task = Task(task)
        if task is Task.BINARY:
            return self.binary
        return self.site

    def task_rows(self, task: Task | str) -> np.ndarray:
        """Indices of rows that take part in ``task``.

        Multi-class classification only sees TARGETED rows: untargeted traffic
        is filtered out by the binary stage first.
        """
        task = Task(task)
        if task is Task.BINARY:
            return np.flatnonzero(self.binary != None)  # noqa: E711
        return np.flatnonzero(self.binary == TARGETED)

    def task_arrays(self, task: Task | str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.task_rows(task)
        return self.X[idx], self.labels(task)[idx].astype(str)


def label(flows: Sequence[Flow], features: Sequence[FeatureVector] | np.ndarray,
          mlist: MonitoredList) -> LabeledDataset:
    """Tag each flow TARGETED with its site when an endpoint matches the monitored list."""
    X = features if isinstance(features, np.ndarray) else feature_matrix(features)
    if len(flows) != len(X):
        raise LengthMismatch(f"{len(flows)} flows but {len(X)} feature vectors")
    binary, site = [], []
    for flow in flows:
        hits = set()
        for addr in flow.endpoints():
            hits |= mlist.matches(addr)
        if len(hits) > 1:
            raise AmbiguousMatch(f"flow {flow.key} matches sites {sorted(hits)}")
        if hits:
            binary.append(TARGETED)
            site.append(hits.pop())
        else:
            binary.append(UNTARGETED)
            site.append(None)
    return LabeledDataset(X, binary, site)


# --------------------------------------------------------------------------
# Preprocessing
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalerParams:
    """Fitted imputation and scaling statistics, applied column-wise."""

    kind: ScalerKind
    medians: np.ndarray
    center: np.ndarray
    scale: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = np.array(X, dtype=float, copy=True)
        if X.ndim != 2 or X.shape[1] != len(self.center):
            from .errors import ArityMismatch
            raise ArityMismatch(f"expected {len(self.center)} features, got shape {X.shape}")
        nan = np.isnan(X)
        if nan.any():
            X[nan] = np.broadcast_to(self.medians, X.shape)[nan]
        out = np.zeros_like(X)
        np.divide(X - self.center, self.scale, out=out, where=self.scale != 0)
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "medians": self.medians.tolist(),
                "center": self.center.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScalerParams":
        return cls(ScalerKind(d["kind"]), np.asarray(d["medians"], dtype=float),
                   np.asarray(d["center"], dtype=float), np.asarray(d["scale"], dtype=float))


class FeatureScaler(TransformerMixin, BaseEstimator):
    """Median imputation followed by z-score, min-max or no scaling.

    Z-scores use the population standard deviation.  Constant columns map
    to 0 under both scalers.
    """

    def __init__(self, scaler="ZSCORE"):
        self.scaler = scaler

    def fit(self, X, y=None):
        X = check_array(X, ensure_all_finite="allow-nan", dtype=float)
        kind = ScalerKind(self.scaler)
        medians = np.zeros(X.shape[1])
        for j in range(X.shape[1]):
            col = X[:, j][~np.isnan(X[:, j])]
            if len(col):
                medians[j] = np.median(col)
        filled = np.where(np.isnan(X), medians, X)
        if kind is ScalerKind.ZSCORE:
            center, scale = filled.mean(axis=0), filled.std(axis=0)
        elif kind is ScalerKind.MINMAX:
            center = filled.min(axis=0)
            scale = filled.max(axis=0) - center
        else:
            center, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
        self.params_ = ScalerParams(kind, medians, center, scale)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return self.params_.apply(X)


@dataclass(frozen=True)
class PreprocessPolicy:
    dedup: bool = True
    missing: MissingPolicy = MissingPolicy.IMPUTE_MEDIAN
    scaler: ScalerKind = ScalerKind.ZSCORE

    def __post_init__(self):
        object.__setattr__(self, "missing", MissingPolicy(self.missing))
        object.__setattr__(self, "scaler", ScalerKind(self.scaler))

    def to_dict(self) -> dict:
        return {"dedup": self.dedup, "missing": self.missing.value, "scaler": self.scaler.value}


def _row_key(x, b, s, p):
    return (tuple(None if math.isnan(v) else v for v in x), b, s, p)


def dedup_rows(ds: LabeledDataset) -> LabeledDataset:
    seen, keep = set(), []
    for i, (x, b, s) in enumerate(ds.rows()):
        key = _row_key(x, b, s, None)
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return ds.subset(keep)


def preprocess(ds: LabeledDataset, policy: PreprocessPolicy = PreprocessPolicy()
               ) -> tuple[LabeledDataset, ScalerParams]:
    """Deduplicate, handle MISSING values and scale.

    Statistics come from TRAIN rows when a split is present, otherwise from
    every row.
    """
    if policy.dedup:
        ds = dedup_rows(ds)
    if policy.missing is MissingPolicy.DROP:
        ds = ds.subset(np.flatnonzero(~np.isnan(ds.X).any(axis=1)))
    if len(ds) == 0:
        raise EmptyAfterFilter("no rows left after preprocessing")
    fit_rows = ds.X if ds.split is None else ds.X[ds.split == TRAIN]
    if len(fit_rows) == 0:
        raise EmptyAfterFilter("no TRAIN rows left after preprocessing")
    scaler = FeatureScaler(policy.scaler).fit(fit_rows)
    return replace(ds, X=scaler.transform(ds.X)), scaler.params_


# --------------------------------------------------------------------------
# Splitting
# --------------------------------------------------------------------------

def largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    """Apportion ``n`` items to ``ratios``; ties in remainders go to the earlier slot."""
    quotas = [n * r for r in ratios]
    sizes = [math.floor(q) for q in quotas]
    left = n - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:left]:
        sizes[i] += 1
    return sizes


def stratum_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    sizes = largest_remainder(n, ratios)
    if n >= len(ratios):
        for i in range(len(sizes)):
            if sizes[i] == 0:
                donor = max(range(len(sizes)), key=lambda j: (sizes[j], -j))
                sizes[donor] -= 1
                sizes[i] = 1
    return sizes


def split(ds: LabeledDataset, ratios=(0.7, 0.15, 0.15), stratify_on: Task | str = Task.BINARY,
          seed: int = 0) -> LabeledDataset:
    """Stratified TRAIN/VALIDATION/TEST assignment, deterministic in ``seed``."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    strata: dict[str, list[int]] = {}
    for i, lab in enumerate(ds.labels(stratify_on)):
        strata.setdefault("" if lab is None else str(lab), []).append(i)
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(ds), dtype=object)
    for key in sorted(strata):
        members = np.asarray(strata[key])
        if len(members) < len(PARTITIONS):
            raise ClassTooSmall(f"stratum {key or '<none>'!r} has {len(members)} rows")
        members = members[rng.permutation(len(members))]
        start = 0
        for name, size in zip(PARTITIONS, stratum_sizes(len(members), ratios)):
            assignment[members[start:start + size]] = name
            start += size
    return ds.with_split(assignment)


# --------------------------------------------------------------------------
# CSV formats
# --------------------------------------------------------------------------

def _fmt(v: float, decimals: int | None) -> str:
    if math.isnan(v):
        return ""
    if decimals is not None:
        return f"{v:.{decimals}f}"
    if float(v).is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def write_dataset_csv(fh, ds: LabeledDataset, decimals: int | None = None) -> None:
    """Write the dataset CSV (MISSING as empty field).

    ``decimals`` rounds feature values for presentation; the default keeps
    full precision so files round-trip exactly.
    """
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(ds.feature_names + LABEL_COLUMNS)
    for x, b, s in ds.rows():
        w.writerow([_fmt(v, decimals) for v in x] + [b or "", s or ""])


def _parse_float(cell: str) -> float:
    try:
        v = float(cell)
    except (TypeError, ValueError):
        return math.nan
    return v if math.isfinite(v) else math.nan


def read_dataset_csv(fh) -> LabeledDataset:
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None:
        raise EmptyFile("dataset CSV is empty")
    if tuple(header[-2:]) != LABEL_COLUMNS or len(header) < 3:
        raise HeaderMismatch(f"dataset CSV must end with {LABEL_COLUMNS}, got {header}")
    names = tuple(header[:-2])
    X, binary, site = [], [], []
    for row in reader:
        if not row:
            continue
        if len(row) != len(header):
            raise HeaderMismatch(f"row has {len(row)} fields, header has {len(header)}")
        X.append([_parse_float(c) for c in row[:-2]])
        binary.append(row[-2] or None)
        site.append(row[-1] or None)
    return LabeledDataset(np.asarray(X, dtype=float).reshape(-1, len(names)), binary, site,
                          feature_names=names)


def write_split_csv(fh, ds: LabeledDataset) -> None:
    if ds.split is None:
        raise ValueError("dataset has no split")
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(("row", "partition"))
    for i, p in enumerate(ds.split):
        w.writerow((i, p))


def read_split_csv(fh, n_rows: int) -> np.ndarray:
    reader = csv.reader(fh)
    if tuple(next(reader, ())) != ("row", "partition"):
        raise HeaderMismatch("split CSV header must be 'row,partition'")
    out = np.empty(n_rows, dtype=object)
    seen = 0
    for row in reader:
        if row:
            out[int(row[0])] = row[1]
            seen += 1
    if seen != n_rows:
        raise LengthMismatch(f"split file covers {seen} rows, dataset has {n_rows}")
    return out


def import_external_csv(path, column_map: Mapping[str, str], label_column: str,
                        targeted_labels: Iterable[str] | None = None,
                        max_categories: int = MAX_CATEGORIES) -> LabeledDataset:
    """Import a third-party flow CSV by selecting and renaming columns.

    ``column_map`` maps external column names to an internal feature name,
    ``IGNORE`` or ``ONEHOT`` (one-hot encode a categorical column).  Rows
    whose label is in ``targeted_labels`` (or every labelled row when it is
    None) become TARGETED with the label as site.  Unparseable or
    non-finite numeric cells become MISSING.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path} is empty")
        header = [h.strip() for h in header]
        rows = [r for r in reader if r]
    if not rows:
        raise EmptyFile(f"{path} has no data rows")
    col = {name: i for i, name in enumerate(header)}
    wanted = [c for c, target in column_map.items() if target != IGNORE]
    missing = [c for c in wanted + [label_column] if c not in col]
    if missing:
        raise HeaderMismatch(f"columns not found in {path}: {missing}")
    for c, target in column_map.items():
        if target not in FEATURE_NAMES and target not in (IGNORE, ONEHOT):
            raise ValueError(f"unknown internal feature {target!r} for column {c!r}")

    numeric = sorted(((FEATURE_NAMES.index(t), c) for c, t in column_map.items() if t in FEATURE_NAMES))
    names = [FEATURE_NAMES[i] for i, _ in numeric]
    columns = [[_parse_float(r[col[c]]) for r in rows] for _, c in numeric]
    for c, target in column_map.items():
        if target != ONEHOT:
            continue
        values = [r[col[c]].strip() for r in rows]
        cats = sorted(set(values))
        if len(cats) > max_categories:
            raise ValueError(f"column {c!r} has {len(cats)} categories (max {max_categories})")
        for cat in cats:
            names.append(f"{c}={cat}")
            columns.append([1.0 if v == cat else 0.0 for v in values])

    targeted = None if targeted_labels is None else set(targeted_labels)
    binary, site = [], []
    for r in rows:
        lab = r[col[label_column]].strip()
        if lab and (targeted is None or lab in targeted):
            binary.append(TARGETED)
            site.append(lab)
        else:
            binary.append(UNTARGETED)
            site.append(None)
    X = np.asarray(columns, dtype=float).T.reshape(len(rows), len(names))
    return LabeledDataset(X, binary, site, feature_names=tuple(names))
