"""Inverse-variance weighted store of noisy covariance-entry measurements."""

from __future__ import annotations

import json

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc


def canonical(j: int, k: int) -> tuple[int, int]:
    """Order a pair so the row index is the larger one (lower triangle)."""
    return (j, k) if j >= k else (k, j)


class MeasurementStore:
    """Per-entry precision-weighted observations of a symmetric ``d x d`` matrix.

    Indices are 0-based. Each canonical pair ``(j, k)`` with ``j >= k`` keeps
    the combined precision ``lam`` (sum of ``1 / sigma^2`` over its raw
    measurements) and the precision-weighted mean ``y`` of those measurements.

    Parameters
    ----------
    d : int
        Matrix dimension.
    keep_raw : bool, default=True
        Retain every raw ``(j, k, z, sigma2)`` measurement in ``raw_log``.
    """

    def __init__(self, d: int, keep_raw: bool = True):
        if d < 1:
            raise ValueError(f"d must be >= 1, got {d}")
        self.d = int(d)
        self.keep_raw = keep_raw
        self._y: dict[tuple[int, int], float] = {}
        self._lam: dict[tuple[int, int], float] = {}
        self.raw_log: list[tuple[int, int, float, float]] = []

    def _check(self, j, k):
        if not (0 <= j < self.d and 0 <= k < self.d):
            raise IndexError(f"pair ({j}, {k}) out of range for d={self.d}")

    def record(self, j: int, k: int, z: float, sigma2: float) -> "MeasurementStore":
        """Fold one measurement ``z ~ N(Sigma_jk, sigma2)`` into the entry."""
        if not sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {sigma2}")
        self._check(j, k)
        key = canonical(int(j), int(k))
        prec = 1.0 / sigma2
        lam = self._lam.get(key, 0.0)
        y = self._y.get(key, 0.0)
        self._y[key] = (lam * y + prec * z) / (lam + prec)
        self._lam[key] = lam + prec
        if self.keep_raw:
            self.raw_log.append((key[0], key[1], float(z), float(sigma2)))
        return self

    def y(self, j: int, k: int) -> float:
        return self._y.get(canonical(j, k), 0.0)

    def precision(self, j: int, k: int) -> float:
        return self._lam.get(canonical(j, k), 0.0)

    def __contains__(self, pair) -> bool:
        return canonical(*pair) in self._lam

    def __len__(self) -> int:
        return len(self._lam)

    def support(self) -> set[tuple[int, int]]:
        return set(self._lam)

    def arrays(self):
        """Return ``rows, cols, y, lam`` over the support in sorted pair order."""
        keys = sorted(self._lam)
        rows = np.array([p[0] for p in keys], dtype=np.intp)
        cols = np.array([p[1] for p in keys], dtype=np.intp)
        y = np.array([self._y[p] for p in keys])
        lam = np.array([self._lam[p] for p in keys])
        return rows, cols, y, lam

    def n_diagonal(self) -> int:
        return sum(1 for j, k in self._lam if j == k)

    def n_offdiagonal(self) -> int:
        return sum(1 for j, k in self._lam if j != k)

    def connected_components(self) -> list[list[int]]:
        """Vertex partition induced by the measured off-diagonal pairs.

        Components are sorted by their smallest vertex; vertices within a
        component are sorted.
        """
        off = [(j, k) for j, k in self._lam if j != k]
        if off:
            r, c = np.array(off).T
        else:
            r = c = np.empty(0, dtype=np.intp)
        graph = coo_matrix((np.ones(len(r)), (r, c)), shape=(self.d, self.d))
        _, labels = _cc(graph, directed=False)
        groups: dict[int, list[int]] = {}
        for v, lab in enumerate(labels):
            groups.setdefault(lab, []).append(v)
        return sorted(groups.values(), key=lambda g: g[0])

    def to_dict(self) -> dict:
        keys = sorted(self._lam)
        out = {
            "d": self.d,
            "pairs": [list(p) for p in keys],
            "y": [self._y[p] for p in keys],
            "lam": [self._lam[p] for p in keys],
        }
        if self.keep_raw:
            out["raw_log"] = [list(r) for r in self.raw_log]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "MeasurementStore":
        store = cls(data["d"], keep_raw="raw_log" in data)
        for (j, k), y, lam in zip(data["pairs"], data["y"], data["lam"]):
            key = canonical(j, k)
            store._y[key] = float(y)
            store._lam[key] = float(lam)
        for j, k, z, s2 in data.get("raw_log", []):
            store.raw_log.append((int(j), int(k), float(z), float(s2)))
        return store

    @classmethod
    def from_json(cls, text: str) -> "MeasurementStore":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"MeasurementStore(d={self.d}, measured={len(self)})"
