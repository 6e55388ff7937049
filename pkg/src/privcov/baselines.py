"""Non-adaptive private covariance baselines."""

import numpy as np

from .privacy import (
    BudgetLedger,
    SensitivitySpec,
    entry_sensitivity,
    full_matrix_sensitivity,
    gaussian_mechanism,
    make_rng,
)
from .validation import check_bounded, second_moment


def ssp_estimate(X, rho, B=1.0, rng=None, ledger=None):
    """Gaussian mechanism on every distinct entry of ``X^T X / n``.

    A single release of the ``d(d+1)/2`` lower-triangular entries, calibrated
    to the full-matrix sensitivity and the whole budget. The result is
    symmetric but deliberately left unprojected, so it may be indefinite.
    """
    X, _ = check_bounded(X, B)
    n, d = X.shape
    rng = make_rng(rng)
    ledger = BudgetLedger(rho) if ledger is None else ledger
    S = second_moment(X)
    rows, cols = np.tril_indices(d)
    delta = full_matrix_sensitivity(SensitivitySpec(B, n, d))
    noisy = gaussian_mechanism(S[rows, cols], delta, rho, ledger, rng, "ssp")
    out = np.zeros((d, d))
    out[rows, cols] = noisy
    out[cols, rows] = noisy
    return out


def diagonal_only_estimate(X, rho, B=1.0, rng=None, ledger=None):
    """Spend the whole budget on the diagonal (``rho / d`` per entry), zero elsewhere.

    Projection onto the PSD cone of a diagonal matrix is clamping at zero.
    """
    X, _ = check_bounded(X, B)
    n, d = X.shape
    rng = make_rng(rng)
    ledger = BudgetLedger(rho) if ledger is None else ledger
    S = second_moment(X)
    delta = entry_sensitivity(SensitivitySpec(B, n, d))
    per_entry = rho / d
    diag = [gaussian_mechanism([S[j, j]], delta, per_entry, ledger, rng, f"diag[{j}]")[0] for j in range(d)]
    return np.diag(np.maximum(diag, 0.0))
