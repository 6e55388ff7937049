"""CSV ingestion, bounded rescaling and synthetic datasets."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .validation import second_moment  # noqa: F401  (re-exported)

logger = logging.getLogger(__name__)

DEFAULT_MISSING = ("", "na", "nan", "null", "none", "?")


class DatasetError(ValueError):
    pass


@dataclass
class RawTable:
    """Parsed numeric table; missing cells hold NaN and are flagged in ``missing``."""

    columns: list
    values: np.ndarray
    missing: np.ndarray

    @property
    def n_missing(self) -> int:
        return int(self.missing.sum())


def load_csv(path, delimiter=",", header=True, missing_tokens=DEFAULT_MISSING) -> RawTable:
    """Read a numeric CSV file.

    Raises
    ------
    DatasetError
        On ragged rows or a non-numeric cell; the message names the 1-based
        file row and column.
    """
    tokens = {t.lower() for t in missing_tokens}
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        rows = list(reader)
    first = 0
    if header:
        if not rows:
            raise DatasetError(f"{path} is empty")
        columns = [c.strip() for c in rows[0]]
        first = 1
    else:
        columns = [f"x{i}" for i in range(len(rows[0]))] if rows else []
    body = [r for r in rows[first:] if any(c.strip() for c in r)]
    width = len(columns)
    values = np.full((len(body), width), np.nan)
    missing = np.zeros((len(body), width), dtype=bool)
    for i, r in enumerate(body):
        lineno = i + first + 1
        if len(r) != width:
            raise DatasetError(f"row {lineno}: expected {width} fields, found {len(r)}")
        for j, cell in enumerate(r):
            cell = cell.strip()
            if cell.lower() in tokens:
                missing[i, j] = True
                continue
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DatasetError(
                    f"row {lineno}, column {j + 1} ({columns[j]!r}): non-numeric value {cell!r}"
                ) from None
    return RawTable(columns, values, missing)


class BoundedScaler(TransformerMixin, BaseEstimator):
    """Map each column affinely from ``[min, max]`` onto ``[-1, 1]``, then center.

    Constant columns are dropped. The fitted minima, maxima and means are
    treated as public metadata; nothing here is private.

    Attributes
    ----------
    data_min_, data_max_ : ndarray of shape (n_features_in_,)
    keep_ : ndarray of bool
        Columns with at least two distinct values.
    mean_ : ndarray
        Column means after rescaling (kept columns only).
    bound_ : float
        Largest absolute entry of the transformed training data.
    """

    def __init__(self, center=True):
        self.center = center

    def fit(self, X, y=None):
        X = self._check(X, reset=True)
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        self.keep_ = self.data_max_ > self.data_min_
        if not self.keep_.any():
            raise DatasetError("every column is constant")
        Z = self._rescale(X)
        self.mean_ = Z.mean(axis=0) if self.center else np.zeros(Z.shape[1])
        self.bound_ = float(np.max(np.abs(Z - self.mean_)))
        return self

    def _check(self, X, reset):
        X = check_array(X, dtype=np.float64)
        if reset:
            self.n_features_in_ = X.shape[1]
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def _rescale(self, X):
        lo, hi = self.data_min_[self.keep_], self.data_max_[self.keep_]
        return 2.0 * (X[:, self.keep_] - lo) / (hi - lo) - 1.0

    def transform(self, X):
        check_is_fitted(self, "keep_")
        X = self._check(X, reset=False)
        return self._rescale(X) - self.mean_


@dataclass
class Dataset:
    """Preprocessed data with the bound ``B`` its estimators must use."""

    name: str
    X: np.ndarray
    columns: list
    B: float = 1.0
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def save(self, path):
        """Write ``X`` and metadata to a single ``.npz`` file."""
        meta = {"name": self.name, "columns": list(self.columns), "B": self.B, "provenance": self.provenance}
        np.savez(path, X=self.X, meta=np.array(json.dumps(meta)))

    @classmethod
    def load(cls, path) -> "Dataset":
        with np.load(path, allow_pickle=False) as f:
            meta = json.loads(str(f["meta"]))
            return cls(meta["name"], f["X"], meta["columns"], meta["B"], meta["provenance"])


def preprocess(table: RawTable, name="data") -> Dataset:
    """Drop incomplete rows and constant columns, rescale to ``[-1, 1]``, center.

    Centering can push entries past 1, so the returned ``B`` is the largest
    absolute entry after centering rather than 1.
    """
    bad = table.missing.any(axis=1) | ~np.isfinite(table.values).all(axis=1)
    X = table.values[~bad]
    if X.shape[0] == 0:
        raise DatasetError("no complete rows remain after dropping missing values")
    scaler = BoundedScaler().fit(X)
    dropped = [c for c, k in zip(table.columns, scaler.keep_) if not k]
    if dropped:
        warnings.warn(f"dropping constant columns: {dropped}")
    Z = scaler.transform(X)
    kept = [c for c, k in zip(table.columns, scaler.keep_) if k]
    prov = {
        "rows_dropped": int(bad.sum()),
        "columns_dropped": dropped,
        "min": scaler.data_min_[scaler.keep_].tolist(),
        "max": scaler.data_max_[scaler.keep_].tolist(),
        "mean_after_rescale": scaler.mean_.tolist(),
    }
    return Dataset(name, Z, kept, B=max(scaler.bound_, np.finfo(float).tiny), provenance=prov)


def load_dataset(path, name=None, **csv_options) -> Dataset:
    path = Path(path)
    if path.suffix == ".npz":
        return Dataset.load(path)
    return preprocess(load_csv(path, **csv_options), name=name or path.stem)


def ar1_covariance(d, corr):
    idx = np.arange(d)
    return corr ** np.abs(np.subtract.outer(idx, idx)).astype(float)


def synth_ar1(d, n, corr, seed=None) -> Dataset:
    """Gaussian AR(1) data scaled by 1/3 and clipped to ``[-1, 1]`` (so ``B = 1``)."""
    if not -1 < corr < 1:
        raise ValueError(f"corr must lie in (-1, 1), got {corr}")
    rng = np.random.default_rng(seed)
    C = ar1_covariance(d, corr)
    Z = rng.standard_normal((n, d)) @ np.linalg.cholesky(C).T
    X = np.clip(Z / 3.0, -1.0, 1.0)
    prov = {"generator": "ar1", "d": d, "n": n, "corr": corr, "seed": seed, "clipped": int(np.sum(np.abs(Z) > 3))}
    return Dataset(f"ar1_d{d}_n{n}_c{corr:g}", X, [f"x{j}" for j in range(d)], 1.0, prov)
