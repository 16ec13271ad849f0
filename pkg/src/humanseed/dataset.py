"""Tabular binary-classification data: CSV loading, splitting, class-skewed
subsampling and standardization.

Rows are held as a float64 matrix plus an int8 label vector. Every random
operation takes an explicit integer seed and is a pure function of its inputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DatasetError


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class FeatureSchema:
    feature_names: tuple[str, ...]
    label_name: str

    def __post_init__(self):
        names = tuple(self.feature_names)
        object.__setattr__(self, "feature_names", names)
        if len(names) < 2:
            raise DatasetError(f"need at least 2 features, got {len(names)}")
        if any(not n for n in names):
            raise DatasetError("feature names must be non-empty")
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DatasetError(f"duplicate feature names: {dupes}")
        if not self.label_name:
            raise DatasetError("label name must be non-empty")
        if self.label_name in names:
            raise DatasetError(f"label {self.label_name!r} is also listed as a feature")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise DatasetError(f"unknown feature {name!r}") from None


@dataclass(frozen=True, eq=False)
class Dataset:
    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        y = np.array(self.y, copy=True)
        if X.ndim != 2:
            X = X.reshape(-1, self.schema.n_features)
        if X.shape[1] != self.schema.n_features:
            raise DatasetError(
                f"rows have {X.shape[1]} values, schema has {self.schema.n_features} features"
            )
        if y.shape != (X.shape[0],):
            raise DatasetError(f"label vector shape {y.shape} does not match {X.shape[0]} rows")
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DatasetError(
                f"non-finite value at row {r}, column {self.schema.feature_names[c]!r}"
            )
        if y.size and not np.all((y == 0) | (y == 1)):
            raise DatasetError("labels must be 0 or 1")
        X.setflags(write=False)
        y = y.astype(np.int8)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_positive(self) -> int:
        return int(self.y.sum())

    @property
    def n_negative(self) -> int:
        return len(self) - self.n_positive

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.schema, self.X[idx], self.y[idx])

    def require_both_classes(self) -> None:
        if self.n_positive == 0 or self.n_negative == 0:
            raise DatasetError(
                f"need both classes, got {self.n_positive} positive / {self.n_negative} negative"
            )


@dataclass(frozen=True)
class SampleSpec:
    size: int
    tp_rate: float
    rng_seed: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise DatasetError(f"sample size must be positive, got {self.size}")
        if not 0.0 < self.tp_rate < 1.0:
            raise DatasetError(f"tp_rate must lie in (0, 1), got {self.tp_rate}")
        if self.n_positive < 1 or self.n_negative < 1:
            raise DatasetError(
                f"size {self.size} at tp_rate {self.tp_rate} leaves a class empty"
            )

    @property
    def n_positive(self) -> int:
        return round_half_up(self.size * self.tp_rate)

    @property
    def n_negative(self) -> int:
        return self.size - self.n_positive


@dataclass(frozen=True, eq=False)
class ScalerParams:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def load_csv(path, schema: FeatureSchema) -> Dataset:
    """Read a headered CSV. Extra columns are ignored; row order is kept."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        col = {}
        for name in (*schema.feature_names, schema.label_name):
            if name not in header:
                raise DatasetError(f"{path}: missing column {name!r}")
            col[name] = header.index(name)

        rows, labels = [], []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) < len(header):
                raise DatasetError(
                    f"{path}:{lineno}: expected {len(header)} cells, got {len(record)}"
                )
            vals = []
            for name in schema.feature_names:
                cell = record[col[name]].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"{path}:{lineno}: column {name!r}: cannot parse {cell!r} as a number"
                    ) from None
                if not math.isfinite(v):
                    raise DatasetError(f"{path}:{lineno}: column {name!r}: non-finite value {cell!r}")
                vals.append(v)
            raw = record[col[schema.label_name]].strip()
            if raw not in ("0", "1"):
                raise DatasetError(
                    f"{path}:{lineno}: column {schema.label_name!r}: label {raw!r} is not 0 or 1"
                )
            rows.append(vals)
            labels.append(int(raw))

    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), schema.n_features)
    return Dataset(schema, X, np.asarray(labels, dtype=np.int8))


def write_csv(ds: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.schema.feature_names, ds.schema.label_name])
        for row, label in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def train_test_split(ds: Dataset, train_fraction: float, rng_seed: int) -> tuple[Dataset, Dataset]:
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if len(ds) == 0:
        raise DatasetError("cannot split an empty dataset")
    n_train = round_half_up(train_fraction * len(ds))
    perm = np.random.default_rng(rng_seed).permutation(len(ds))
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


def biased_sample(ds: Dataset, spec: SampleSpec) -> Dataset:
    """Draw exactly ``spec.size`` rows without replacement, of which exactly
    ``round(size * tp_rate)`` are positive."""
    pos = np.flatnonzero(ds.y == 1)
    neg = np.flatnonzero(ds.y == 0)
    k_pos, k_neg = spec.n_positive, spec.n_negative
    if k_pos > pos.size:
        raise DatasetError(f"need {k_pos} positive rows, only {pos.size} available")
    if k_neg > neg.size:
        raise DatasetError(f"need {k_neg} negative rows, only {neg.size} available")
    rng = np.random.default_rng(spec.rng_seed)
    take = np.concatenate([rng.choice(pos, k_pos, replace=False), rng.choice(neg, k_neg, replace=False)])
    return ds.subset(np.sort(take))


def standardize(ds: Dataset) -> tuple[Dataset, ScalerParams]:
    if len(ds) == 0:
        raise DatasetError("cannot standardize an empty dataset")
    mean = ds.X.mean(axis=0)
    std = ds.X.std(axis=0)
    # constant columns map to zero rather than dividing by ~0
    constant = np.ptp(ds.X, axis=0) == 0
    std = np.where(constant, 1.0, std)
    params = ScalerParams(mean, std)
    return apply_scaler(ds, params), params


def apply_scaler(ds: Dataset, params: ScalerParams) -> Dataset:
    return Dataset(ds.schema, (ds.X - params.mean) / params.std, ds.y)


def inverse_scaler(ds: Dataset, params: ScalerParams) -> Dataset:
    return Dataset(ds.schema, ds.X * params.std + params.mean, ds.y)


def schema_from_names(features: Sequence[str] | str, label: str) -> FeatureSchema:
    if isinstance(features, str):
        features = [f.strip() for f in features.split(",") if f.strip()]
    return FeatureSchema(tuple(features), label)
