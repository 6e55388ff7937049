"""scikit-learn style wrappers around the private covariance estimators."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import pace
from .baselines import diagonal_only_estimate, ssp_estimate
from .metrics import frobenius_error, mahalanobis_error
from .privacy import BudgetLedger, make_rng
from .validation import check_bounded, second_moment


class _PrivateCovariance(BaseEstimator):
    """Shared scoring and validation; subclasses implement ``_estimate``."""

    def _validate(self, X):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        X, n_clipped = check_bounded(X, self.B)
        self.n_features_in_ = X.shape[1]
        self.n_clipped_ = n_clipped
        return X

    def fit(self, X, y=None):
        X = self._validate(X)
        self.covariance_ = self._estimate(X)
        return self

    def error(self, reference, metric="frobenius") -> float:
        """Distance from ``covariance_`` to ``reference`` (``"frobenius"`` or ``"mahalanobis"``)."""
        check_is_fitted(self, "covariance_")
        if metric == "frobenius":
            return frobenius_error(self.covariance_, reference)
        if metric == "mahalanobis":
            return mahalanobis_error(self.covariance_, reference)
        raise ValueError(f"unknown metric {metric!r}")

    def score(self, X, y=None) -> float:
        """Negative Frobenius distance to the (non-private) second moment of ``X``."""
        X, _ = check_bounded(X, self.B)
        return -self.error(second_moment(X))


class PaceGGMCovariance(_PrivateCovariance):
    """Adaptive private covariance via selective entry measurement and max-entropy fill-in.

    Parameters
    ----------
    rho : float
        Total zCDP budget.
    alpha : float, default=0.3
        Fraction of ``rho`` spent measuring the diagonal up front.
    beta : float, default=0.5
        Fraction of each round spent on selection.
    T : int, optional
        Round count used to size per-round budgets; ``d * (d - 1)`` by default.
    B : float, default=1.0
        Bound on ``|x_ij|``; rows are clipped to it.
    solver : {"ipm", "pgd_zeros", "pgd_ones"}
    components : bool, default=True
        Reconstruct each connected block of the measurement graph separately.
    warm_start : bool, default=True
    random_state : int, Generator or None

    Attributes
    ----------
    covariance_ : ndarray of shape (n_features, n_features)
    rho_used_ : float
    n_rounds_ : int
    n_diagonal_, n_offdiagonal_ : int
        Distinct diagonal and off-diagonal entries measured.
    round_log_ : list of RoundRecord
    store_ : MeasurementStore
    flags_ : list of str
        Reconstruction diagnostics (blocks that stopped short of tolerance).
    """

    def __init__(
        self,
        rho=1.0,
        alpha=0.3,
        beta=0.5,
        T=None,
        B=1.0,
        solver="ipm",
        components=True,
        warm_start=True,
        random_state=None,
    ):
        self.rho = rho
        self.alpha = alpha
        self.beta = beta
        self.T = T
        self.B = B
        self.solver = solver
        self.components = components
        self.warm_start = warm_start
        self.random_state = random_state

    def _estimate(self, X):
        config = pace.PaceConfig(
            rho=self.rho,
            alpha=self.alpha,
            beta=self.beta,
            T=self.T,
            B=self.B,
            components=self.components,
            solver=self.solver,
            warm_start=self.warm_start,
        )
        res = pace.run(X, config, rng=make_rng(self.random_state))
        self.rho_used_ = res.rho_used
        self.n_rounds_ = res.rounds
        self.n_diagonal_ = res.n_diagonal
        self.n_offdiagonal_ = res.n_offdiagonal
        self.round_log_ = res.round_log
        self.store_ = res.store
        self.ledger_ = res.ledger
        self.flags_ = res.flags
        return res.sigma_hat


class SSPCovariance(_PrivateCovariance):
    """Gaussian noise on every entry of the second-moment matrix at once."""

    def __init__(self, rho=1.0, B=1.0, random_state=None):
        self.rho = rho
        self.B = B
        self.random_state = random_state

    def _estimate(self, X):
        self.ledger_ = BudgetLedger(self.rho)
        out = ssp_estimate(X, self.rho, self.B, make_rng(self.random_state), self.ledger_)
        self.rho_used_ = self.ledger_.rho_used
        return out


class DiagonalCovariance(_PrivateCovariance):
    """Noisy diagonal only, clamped at zero; off-diagonals are reported as 0."""

    def __init__(self, rho=1.0, B=1.0, random_state=None):
        self.rho = rho
        self.B = B
        self.random_state = random_state

    def _estimate(self, X):
        self.ledger_ = BudgetLedger(self.rho)
        out = diagonal_only_estimate(X, self.rho, self.B, make_rng(self.random_state), self.ledger_)
        self.rho_used_ = self.ledger_.rho_used
        return out


ESTIMATORS = {
    "pace_ggm": PaceGGMCovariance,
    "ssp": SSPCovariance,
    "diagonal": DiagonalCovariance,
}


def make_estimator(name, **params):
    """Build a registered estimator, silently dropping parameters it does not take."""
    try:
        cls = ESTIMATORS[name]
    except KeyError:
        raise ValueError(f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}") from None
    accepted = cls().get_params()
    return cls(**{k: v for k, v in params.items() if k in accepted})

