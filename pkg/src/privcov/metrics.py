"""Error metrics and structural statistics for covariance estimates."""

import numpy as np


class InvalidTruthError(ValueError):
    pass


def _pair(est, truth):
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    return est, truth


def frobenius_error(est, truth) -> float:
    est, truth = _pair(est, truth)
    return float(np.linalg.norm(est - truth))


def inverse_sqrt(truth) -> np.ndarray:
    """Symmetric ``truth^{-1/2}`` with eigenvalues floored at ``1e-12 * trace / d``.

    Raises
    ------
    InvalidTruthError
        If ``truth`` has an eigenvalue below ``-1e-8 * trace``.
    """
    truth = np.asarray(truth, dtype=float)
    truth = (truth + truth.T) / 2
    d = truth.shape[0]
    tr = float(np.trace(truth))
    vals, vecs = np.linalg.eigh(truth)
    if vals[0] < -1e-8 * abs(tr):
        raise InvalidTruthError(f"reference matrix is not PSD (min eigenvalue {vals[0]:.3g})")
    floor = 1e-12 * tr / d if tr > 0 else 1e-12
    vals = np.maximum(vals, floor)
    return (vecs / np.sqrt(vals)) @ vecs.T


def mahalanobis_error(est, truth) -> float:
    """``|| truth^{-1/2} est truth^{-1/2} - I ||_F``; affine invariant."""
    est, truth = _pair(est, truth)
    R = inverse_sqrt(truth)
    M = R @ est @ R
    return float(np.linalg.norm(M - np.eye(len(M))))


def off_diag_energy(sigma) -> float:
    """Fraction of the squared Frobenius norm carried by off-diagonal entries."""
    sigma = np.asarray(sigma, dtype=float)
    total = float(np.sum(sigma**2))
    if total == 0:
        return 0.0
    return (total - float(np.sum(np.diag(sigma) ** 2))) / total


def effective_rank(sigma) -> float:
    """Exponential of the Shannon entropy of the normalized eigenvalues."""
    vals = np.linalg.eigvalsh(np.asarray(sigma, dtype=float))
    vals = np.clip(vals, 0.0, None)
    if vals.sum() <= 0:
        raise ValueError("matrix has no positive eigenvalues")
    p = vals / vals.sum()
    p = p[p > 0]
    return float(np.exp(-np.sum(p * np.log(p))))
