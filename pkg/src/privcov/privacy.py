"""zCDP primitives: sensitivities, Gaussian and exponential mechanisms, budget ledger."""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

BUDGET_SLACK = 1e-12


class BudgetExceededError(RuntimeError):
    """Raised when a charge would push the ledger past its total budget."""


class InvalidBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class SensitivitySpec:
    """Coordinate-wise bound ``|x_j| <= B`` for ``n`` records of dimension ``d``."""

    B: float
    n: int
    d: int = 1

    def __post_init__(self):
        if not self.B >= 0:
            raise ValueError(f"B must be nonnegative, got {self.B}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")


def entry_sensitivity(spec: SensitivitySpec) -> float:
    """l2 sensitivity of one entry of ``X^T X / n`` under an l-infinity bound."""
    return 2.0 * spec.B**2 / spec.n


def full_matrix_sensitivity(spec: SensitivitySpec) -> float:
    """Frobenius sensitivity of the whole matrix ``X^T X / n`` under an l-infinity bound."""
    return math.sqrt(2.0) * spec.d * spec.B**2 / spec.n


def gaussian_noise_sigma(sensitivity: float, rho: float) -> float:
    """Noise scale giving ``rho``-zCDP for a query of the given l2 sensitivity."""
    if not rho > 0:
        raise InvalidBudgetError(f"rho must be positive, got {rho}")
    if sensitivity < 0:
        raise ValueError(f"sensitivity must be nonnegative, got {sensitivity}")
    return math.sqrt(sensitivity**2 / (2.0 * rho))


def zcdp_to_approx_dp(rho: float, delta: float) -> float:
    """Epsilon such that ``rho``-zCDP implies ``(epsilon, delta)``-DP."""
    if rho < 0:
        raise InvalidBudgetError(f"rho must be nonnegative, got {rho}")
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    return rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))


@dataclass
class BudgetLedger:
    """Running record of zCDP charges against a fixed total.

    ``rho_used`` is the correctly rounded value of the exact sum of the charge
    records, kept as a rational so each charge costs O(1).
    """

    rho_total: float
    entries: list = field(default_factory=list)

    def __post_init__(self):
        if not self.rho_total > 0:
            raise InvalidBudgetError(f"rho_total must be positive, got {self.rho_total}")
        self._exact = sum((Fraction(r) for _, r in self.entries), Fraction(0))
        self._used = float(self._exact)

    @property
    def rho_used(self) -> float:
        return self._used

    def can_charge(self, rho: float) -> bool:
        return float(self._exact + Fraction(rho)) <= self.rho_total + BUDGET_SLACK

    def charge(self, rho: float, label: str = "") -> None:
        if not rho > 0:
            raise InvalidBudgetError(f"charge must be positive, got {rho}")
        if not self.can_charge(rho):
            raise BudgetExceededError(
                f"charge {rho:.6g} ({label}) exceeds remaining budget "
                f"{self.rho_total - self._used:.6g}"
            )
        self.entries.append((label, float(rho)))
        self._exact += Fraction(float(rho))
        self._used = float(self._exact)

    def remaining(self) -> float:
        """Largest charge that keeps ``rho_used <= rho_total`` with no slack."""
        rem = self.rho_total - self._used
        if rem <= 0:
            return 0.0
        while rem > 0 and float(self._exact + Fraction(rem)) > self.rho_total:
            rem = math.nextafter(rem, 0.0)
        return rem


def make_rng(seed=None) -> np.random.Generator:
    """Return a PCG64 generator; generators pass through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_rngs(seed, n: int) -> list[np.random.Generator]:
    """Independent, reproducible child streams of ``seed``."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def gaussian_mechanism(values, sensitivity, rho, ledger, rng, label="gaussian"):
    """Release ``values + N(0, sigma^2 I)`` with sigma calibrated to ``rho``.

    The ledger is checked before any noise is drawn, so a rejected call leaves
    both the ledger and the generator untouched.
    """
    sigma = gaussian_noise_sigma(sensitivity, rho)
    if not ledger.can_charge(rho):
        raise BudgetExceededError(
            f"charge {rho:.6g} ({label}) exceeds remaining budget "
            f"{ledger.rho_total - ledger.rho_used:.6g}"
        )
    values = np.asarray(values, dtype=float)
    noisy = values + rng.normal(0.0, sigma, size=values.shape)
    ledger.charge(rho, label)
    return noisy


def exponential_select(scores, sensitivity, rho, ledger, rng, label="select"):
    """Sample an index with probability proportional to ``exp(eps * score / (2 * sensitivity))``.

    ``eps = sqrt(8 * rho)`` so that the selection is ``rho``-zCDP. Sampling uses
    the Gumbel-max trick, which avoids overflow for large exponents; ties go to
    the lowest index.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    if scores.size == 0:
        raise ValueError("scores must be nonempty")
    if not sensitivity > 0:
        raise ValueError(f"score sensitivity must be positive, got {sensitivity}")
    if not rho > 0:
        raise InvalidBudgetError(f"rho must be positive, got {rho}")
    if not ledger.can_charge(rho):
        raise BudgetExceededError(
            f"charge {rho:.6g} ({label}) exceeds remaining budget "
            f"{ledger.rho_total - ledger.rho_used:.6g}"
        )
    eps = math.sqrt(8.0 * rho)
    logits = eps * scores / (2.0 * sensitivity)
    idx = int(np.argmax(logits + rng.gumbel(size=scores.size)))
    ledger.charge(rho, label)
    return idx
