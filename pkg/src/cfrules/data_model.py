"""Tabular data, target sets and axis-aligned boxes shared by every module."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


class IngestionError(ValueError):
    """Raised when a CSV/schema pair cannot be turned into a Dataset."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str = CONTINUOUS
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.kind == CATEGORICAL and len(self.categories) < 2:
            raise ValueError(f"categorical feature {self.name!r} needs at least 2 categories")
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def encode(self, value: str) -> float:
        if self.is_categorical:
            return float(self.categories.index(value))
        return float(value)

    def decode(self, code):
        if self.is_categorical:
            return self.categories[int(code)]
        return float(code)

    def to_json(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.is_categorical:
            out["categories"] = list(self.categories)
        return out

    @classmethod
    def from_json(cls, d: Mapping) -> "FeatureSpec":
        return cls(d["name"], d.get("kind", CONTINUOUS), tuple(d.get("categories", ())))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable n x p table with a target vector.

    Categorical columns hold integer codes (as floats) indexing
    ``FeatureSpec.categories``. ``target_kind`` is ``"class"`` (y holds class
    codes indexing ``classes``) or ``"real"``.
    """

    features: tuple[FeatureSpec, ...]
    X: np.ndarray
    y: np.ndarray
    target_name: str = "y"
    target_kind: str = "class"
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("X must be a non-empty 2-d array")
        if X.shape[1] != len(self.features):
            raise ValueError("feature count does not match X")
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one entry per row")
        if np.isnan(X).any() or np.isnan(y).any():
            raise ValueError("missing values are not supported")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        for j, f in enumerate(self.features):
            if f.is_categorical:
                col = X[:, j]
                if np.any(col != np.round(col)) or col.min() < 0 or col.max() >= len(f.categories):
                    raise ValueError(f"invalid category code in column {f.name!r}")
        if self.target_kind not in ("class", "real"):
            raise ValueError(f"unknown target kind {self.target_kind!r}")
        classes = tuple(str(c) for c in self.classes)
        if self.target_kind == "class":
            if not classes:
                classes = tuple(str(int(c)) for c in np.unique(y))
            if np.any(y != np.round(y)) or y.min() < 0 or y.max() >= len(classes):
                raise ValueError("class targets must be codes 0..C-1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "classes", classes)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array([f.is_categorical for f in self.features])

    def subset(self, rows) -> "Dataset":
        return Dataset(self.features, self.X[rows], self.y[rows],
                       self.target_name, self.target_kind, self.classes)

    def with_target(self, y, target_kind=None, classes=None) -> "Dataset":
        """Same features with a replacement target (e.g. a model's predictions)."""
        kind = target_kind or self.target_kind
        if classes is None:
            classes = self.classes if kind == self.target_kind else ()
        return Dataset(self.features, self.X, y, self.target_name, kind, classes)

    def decode_row(self, x) -> dict:
        return {f.name: f.decode(v) for f, v in zip(self.features, x)}


def load_schema(path) -> tuple[list[FeatureSpec], dict]:
    """Read a JSON sidecar ``{"features": [...], "target": {...}}``."""
    with open(path) as fh:
        doc = json.load(fh)
    if "features" not in doc or "target" not in doc:
        raise IngestionError(f"{path}: schema needs 'features' and 'target'")
    return [FeatureSpec.from_json(d) for d in doc["features"]], doc["target"]


def load_csv(path, schema: Sequence[FeatureSpec], target: str,
             target_kind: str = "class", classes: Sequence[str] | None = None) -> Dataset:
    """Read a headered CSV, coding categoricals in schema order.

    For class targets without explicit ``classes`` the sorted distinct labels
    are used. Errors name the 1-based data row and the column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        index = {h: i for i, h in enumerate(header)}
        for name in [f.name for f in schema] + [target]:
            if name not in index:
                raise IngestionError(f"{path}: missing column {name!r}")
        rows = list(reader)
    if not rows:
        raise IngestionError(f"{path}: no data rows")

    X = np.empty((len(rows), len(schema)))
    raw_y = []
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise IngestionError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        for j, f in enumerate(schema):
            cell = row[index[f.name]].strip()
            if cell == "":
                raise IngestionError(f"{path}: empty cell at row {r}, column {f.name!r}")
            try:
                X[r - 1, j] = f.encode(cell)
            except ValueError:
                what = "unknown category" if f.is_categorical else "unparseable value"
                raise IngestionError(
                    f"{path}: {what} {cell!r} at row {r}, column {f.name!r}") from None
            if not f.is_categorical and not math.isfinite(X[r - 1, j]):
                raise IngestionError(f"{path}: non-finite value at row {r}, column {f.name!r}")
        cell = row[index[target]].strip()
        if cell == "":
            raise IngestionError(f"{path}: empty cell at row {r}, column {target!r}")
        raw_y.append(cell)

    if target_kind == "real":
        try:
            y = np.array([float(v) for v in raw_y])
        except ValueError as exc:
            raise IngestionError(f"{path}: unparseable target: {exc}") from None
        classes = ()
    else:
        classes = tuple(str(c) for c in classes) if classes else tuple(sorted(set(raw_y)))
        lookup = {c: i for i, c in enumerate(classes)}
        y = np.empty(len(raw_y))
        for r, v in enumerate(raw_y, start=1):
            if v not in lookup:
                raise IngestionError(f"{path}: unknown class {v!r} at row {r}, column {target!r}")
            y[r - 1] = lookup[v]
    return Dataset(tuple(schema), X, y, target, target_kind, classes)


def load_dataset(csv_path, schema_path) -> Dataset:
    """CSV plus JSON sidecar in one call."""
    features, target = load_schema(schema_path)
    return load_csv(csv_path, features, target["name"], target.get("kind", "class"),
                    target.get("classes"))


def split(ds: Dataset, train_fraction: float = 0.75, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded shuffle split; the train part gets ``round(n * train_fraction)`` rows."""
    tr, te = split_indices(ds.n, train_fraction, seed)
    return ds.subset(tr), ds.subset(te)


def split_indices(n: int, train_fraction: float = 0.75, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sorted row indices of the train and test parts used by :func:`split`."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    if n < 2:
        raise ValueError("need at least two rows to split")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = min(max(int(round(n * train_fraction)), 1), n - 1)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def minmax_normalize(train: Dataset, *others: Dataset) -> list[Dataset]:
    """Rescale continuous columns to [0, 1] using the ranges of ``train``.

    Categorical codes are left as they are. Values of ``others`` outside the
    training range are clipped.
    """
    lo = train.X.min(axis=0)
    span = train.X.max(axis=0) - lo
    span[span == 0] = 1.0
    cont = ~train.categorical_mask
    out = []
    for ds in (train,) + others:
        X = ds.X.copy()
        X[:, cont] = np.clip((X[:, cont] - lo[cont]) / span[cont], 0.0, 1.0)
        out.append(Dataset(ds.features, X, ds.y, ds.target_name, ds.target_kind, ds.classes))
    return out


@dataclass(frozen=True)
class TargetSet:
    """Desired outcome: one class code, or a closed real interval."""

    kind: str
    class_label: int | None = None
    interval: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind == "class":
            if self.class_label is None:
                raise ValueError("class target needs class_label")
        elif self.kind == "interval":
            if self.interval is None:
                raise ValueError("interval target needs bounds")
            a, b = (float(v) for v in self.interval)
            if not a <= b:
                raise ValueError("interval target needs a <= b")
            object.__setattr__(self, "interval", (a, b))
        else:
            raise ValueError(f"unknown target kind {self.kind!r}")

    @classmethod
    def of_class(cls, label: int) -> "TargetSet":
        return cls("class", class_label=int(label))

    @classmethod
    def of_interval(cls, lo: float, hi: float) -> "TargetSet":
        return cls("interval", interval=(lo, hi))

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind == "class":
            return y == self.class_label
        a, b = self.interval
        return (y >= a) & (y <= b)

    def complement_contains(self, y) -> np.ndarray:
        return ~self.contains(y)

    def to_json(self):
        if self.kind == "class":
            return {"kind": "class", "class": self.class_label}
        return {"kind": "interval", "interval": [_enc(v) for v in self.interval]}

    @classmethod
    def from_json(cls, d) -> "TargetSet":
        if d["kind"] == "class":
            return cls.of_class(d["class"])
        return cls.of_interval(*(_dec(v) for v in d["interval"]))


def _enc(v: float):
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return float(v)


def _dec(v) -> float:
    return float(v)


@dataclass(frozen=True)
class Hyperrectangle:
    """Product of closed intervals over a support set of feature indices.

    Features outside the support are unconstrained.
    """

    intervals: Mapping[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for j, (lo, hi) in sorted(self.intervals.items()):
            lo, hi = float(lo), float(hi)
            if not lo <= hi:
                raise ValueError(f"empty interval [{lo}, {hi}] on feature {j}")
            clean[int(j)] = (lo, hi)
        object.__setattr__(self, "intervals", clean)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(self.intervals)

    def __hash__(self):
        return hash(tuple(self.intervals.items()))

    def __eq__(self, other):
        return isinstance(other, Hyperrectangle) and self.intervals == other.intervals

    def __repr__(self):
        body = ", ".join(f"{j}: [{lo:g}, {hi:g}]" for j, (lo, hi) in self.intervals.items())
        return f"Hyperrectangle({{{body}}})"

    def contains(self, x) -> bool:
        return all(lo <= x[j] <= hi for j, (lo, hi) in self.intervals.items())

    def contains_rows(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        mask = np.ones(X.shape[0], dtype=bool)
        for j, (lo, hi) in self.intervals.items():
            mask &= (X[:, j] >= lo) & (X[:, j] <= hi)
        return mask

    def project(self, dims: Iterable[int]) -> "Hyperrectangle":
        """Restrict to ``dims``; dims missing from the support become unbounded."""
        return Hyperrectangle({j: self.intervals.get(j, (-math.inf, math.inf)) for j in dims})

    def restrict(self, dims: Iterable[int]) -> "Hyperrectangle":
        """Keep only the supported dims that are in ``dims``."""
        dims = set(dims)
        return Hyperrectangle({j: iv for j, iv in self.intervals.items() if j in dims})

    def bounds(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.full(p, -math.inf)
        hi = np.full(p, math.inf)
        for j, (a, b) in self.intervals.items():
            lo[j], hi[j] = a, b
        return lo, hi

    def intersects(self, other: "Hyperrectangle") -> bool:
        for j in set(self.intervals) & set(other.intervals):
            a, b = self.intervals[j]
            c, d = other.intervals[j]
            if b < c or d < a:
                return False
        return True

    def to_json(self, features: Sequence[FeatureSpec] | None = None) -> dict:
        """``{name: [lo, hi]}`` with "-inf"/"inf" sentinels.

        Categorical dimensions are written as the list of category labels whose
        codes fall inside the interval.
        """
        out = {}
        for j, (lo, hi) in self.intervals.items():
            if features is None:
                out[str(j)] = [_enc(lo), _enc(hi)]
                continue
            f = features[j]
            if f.is_categorical:
                out[f.name] = [c for k, c in enumerate(f.categories) if lo <= k <= hi]
            else:
                out[f.name] = [_enc(lo), _enc(hi)]
        return out

    @classmethod
    def from_json(cls, d: Mapping, features: Sequence[FeatureSpec] | None = None):
        names = {f.name: j for j, f in enumerate(features)} if features else {}
        intervals = {}
        for key, val in d.items():
            j = names[key] if key in names else int(key)
            if features is not None and features[j].is_categorical and not _is_bounds(val):
                codes = [features[j].categories.index(c) for c in val]
                intervals[j] = (min(codes), max(codes))
            else:
                intervals[j] = (_dec(val[0]), _dec(val[1]))
        return cls(intervals)


def _is_bounds(val) -> bool:
    return len(val) == 2 and all(isinstance(v, (int, float)) or v in ("inf", "-inf") for v in val)


def contains(rect: Hyperrectangle, x) -> bool:
    return rect.contains(x)
