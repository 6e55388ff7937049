"""Input checks shared by the estimators."""

import warnings

import numpy as np
from sklearn.utils import check_array


class ClippingWarning(UserWarning):
    """Some coordinates exceeded the declared bound and were clipped."""


def check_bounded(X, B):
    """Validate ``X`` as a finite 2-D float array and clip it into ``[-B, B]``.

    Returns the clipped copy and the number of coordinates that changed. The
    sensitivity calculations assume the bound holds, so violations are clipped
    rather than passed through.
    """
    if not B > 0:
        raise ValueError(f"B must be positive, got {B}")
    X = check_array(X, dtype=np.float64, ensure_min_samples=1, ensure_min_features=1)
    clipped = np.clip(X, -B, B)
    n = int(np.count_nonzero(clipped != X))
    if n:
        warnings.warn(f"{n} coordinates exceeded the bound B={B} and were clipped", ClippingWarning)
    return clipped, n


def second_moment(X):
    """Empirical second-moment matrix ``X^T X / n``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a nonempty 2-D array")
    S = X.T @ X / X.shape[0]
    return (S + S.T) / 2
