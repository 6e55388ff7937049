"""Adaptive select / measure / reconstruct loop for private covariance estimation."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .measurements import MeasurementStore
from .privacy import (
    BudgetLedger,
    SensitivitySpec,
    entry_sensitivity,
    exponential_select,
    gaussian_mechanism,
    gaussian_noise_sigma,
    make_rng,
)
from .validation import check_bounded, second_moment
from .reconstruction import IpmSchedule, pgd_solve, ReconstructionProblem, solve_max_entropy

logger = logging.getLogger(__name__)

ANNEAL_THRESHOLD = math.sqrt(2.0 / math.pi)


@dataclass
class PaceConfig:
    """Run parameters.

    ``T`` defaults to ``d * (d - 1)`` when left as None. ``solver`` is one of
    ``"ipm"``, ``"pgd_zeros"`` or ``"pgd_ones"``. With ``warm_start`` each
    reconstruction starts from the previous round's estimate and runs only the
    last ``warm_stages`` barrier weights (None runs the full schedule).
    ``max_inner_iter`` caps every inner solve.
    """

    rho: float
    alpha: float = 0.3
    beta: float = 0.5
    T: int | None = None
    B: float = 1.0
    seed: int | None = None
    schedule: IpmSchedule | None = None
    anneal_cap: int = 60
    components: bool = True
    solver: str = "ipm"
    warm_start: bool = True
    warm_stages: int | None = 1
    max_inner_iter: int = 500
    pgd_iter: int = 5000

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.T is not None and self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if not self.B > 0:
            raise ValueError(f"B must be positive, got {self.B}")
        if self.solver not in ("ipm", "pgd_zeros", "pgd_ones"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.warm_stages is not None and self.warm_stages < 1:
            raise ValueError("warm_stages must be >= 1 or None")
        if self.max_inner_iter < 1:
            raise ValueError("max_inner_iter must be >= 1")
        if self.anneal_cap < 0:
            raise ValueError("anneal_cap must be nonnegative")

    def rounds_for(self, d: int) -> int:
        return self.T if self.T is not None else max(1, d * (d - 1))


@dataclass
class BudgetState:
    rho: float
    beta: float
    rho_sel: float
    rho_meas: float
    rho_used: float
    n_anneals: int = 0
    anneal_cap: int = 60
    final: bool = False

    @property
    def remaining(self) -> float:
        return self.rho - self.rho_used


@dataclass
class RoundRecord:
    t: int
    pair: tuple
    sigma: float
    rho_sel: float
    rho_meas: float
    annealed: bool
    final: bool
    seconds: float


@dataclass
class PaceResult:
    sigma_hat: np.ndarray
    rounds: int
    rho_used: float
    round_log: list
    n_diagonal: int
    n_offdiagonal: int
    store: MeasurementStore
    ledger: BudgetLedger
    flags: list = field(default_factory=list)
    n_clipped: int = 0

    def round_log_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r)) + "\n" for r in self.round_log)


def initialize_diagonal(sigma_x, config: PaceConfig, sensitivity, ledger, rng, keep_raw=True):
    """Measure every diagonal entry once with budget ``alpha * rho / d`` each.

    Returns the store and the starting estimate ``diag(max(y_jj, 0))``.
    """
    d = sigma_x.shape[0]
    per_entry = config.alpha * config.rho / d
    sigma2 = gaussian_noise_sigma(sensitivity, per_entry) ** 2
    store = MeasurementStore(d, keep_raw=keep_raw)
    for j in range(d):
        z = gaussian_mechanism([sigma_x[j, j]], sensitivity, per_entry, ledger, rng, f"diag[{j}]")[0]
        store.record(j, j, z, sigma2)
    sigma0 = np.diag([max(store.y(j, j), 0.0) for j in range(d)])
    return store, sigma0


def candidate_pairs(d: int):
    """All canonical pairs ``(j, k)`` with ``j >= k``, in row-major order."""
    return np.tril_indices(d)


def select_entry(sigma_x, sigma_prev, sensitivity, rho_sel, ledger, rng, t=None):
    """Pick the pair whose current estimate is worst, via the exponential mechanism."""
    rows, cols = candidate_pairs(sigma_x.shape[0])
    err = np.abs(sigma_x[rows, cols] - sigma_prev[rows, cols])
    label = "select" if t is None else f"select[{t}]"
    i = exponential_select(err, sensitivity, rho_sel, ledger, rng, label)
    return int(rows[i]), int(cols[i])


def measure_entry(sigma_x, pair, sensitivity, rho_meas, store, ledger, rng, t=None):
    """Gaussian-mechanism measurement of one entry, folded into ``store``."""
    j, k = pair
    sigma = gaussian_noise_sigma(sensitivity, rho_meas)
    label = "measure" if t is None else f"measure[{t}]"
    z = gaussian_mechanism([sigma_x[j, k]], sensitivity, rho_meas, ledger, rng, label)[0]
    store.record(j, k, z, sigma**2)
    return z, sigma


def anneal_budgets(sigma_new, sigma_prev, pair, sigma_t, state: BudgetState):
    """Grow per-round budgets when the last measurement barely moved the estimate.

    Doubling the selection budget and quadrupling the measurement budget halves
    the measurement noise. When fewer than two rounds' worth of budget remain,
    the next round is sized to spend exactly what is left.

    Returns the updated state and whether the doubling fired.
    """
    j, k = pair
    change = abs(sigma_new[j, k] - sigma_prev[j, k])
    annealed = False
    rho_sel, rho_meas, n_anneals = state.rho_sel, state.rho_meas, state.n_anneals
    if change <= ANNEAL_THRESHOLD * sigma_t and n_anneals < state.anneal_cap:
        rho_sel, rho_meas = 2.0 * rho_sel, 4.0 * rho_meas
        n_anneals += 1
        annealed = True
    state = replace(state, rho_sel=rho_sel, rho_meas=rho_meas, n_anneals=n_anneals)
    return _exhaust_if_last(state), annealed


def _exhaust_if_last(state: BudgetState) -> BudgetState:
    remaining = state.rho - state.rho_used
    if remaining < 2.0 * (state.rho_sel + state.rho_meas):
        return replace(
            state,
            rho_sel=state.beta * remaining,
            rho_meas=(1.0 - state.beta) * remaining,
            final=True,
        )
    return state


def _reconstruct(store, config, previous):
    if config.solver == "ipm":
        return solve_max_entropy(
            store,
            schedule=config.schedule,
            components=config.components,
            warm_start=previous if config.warm_start else None,
            warm_stages=config.warm_stages,
            max_inner_iter=config.max_inner_iter,
            return_info=True,
        )
    prob = ReconstructionProblem.from_store(store)
    init = "zeros" if config.solver == "pgd_zeros" else "ones"
    return pgd_solve(prob, init=init, max_iter=config.pgd_iter), {"flags": []}


def run(X, config: PaceConfig, rng=None, keep_raw=True) -> PaceResult:
    """Run the full adaptive estimator on data ``X`` (``n x d``).

    Phase 1 spends ``alpha * rho`` on the diagonal. Phase 2 repeats
    select / measure / reconstruct / anneal until the ledger is exhausted.
    """
    X, n_clipped = check_bounded(X, config.B)
    n, d = X.shape
    rng = make_rng(config.seed) if rng is None else make_rng(rng)
    sigma_x = second_moment(X)
    delta = entry_sensitivity(SensitivitySpec(config.B, n, d))
    ledger = BudgetLedger(config.rho)

    store, sigma_hat = initialize_diagonal(sigma_x, config, delta, ledger, rng, keep_raw)
    T = config.rounds_for(d)
    per_round = (config.rho - ledger.rho_used) / T
    state = BudgetState(
        rho=config.rho,
        beta=config.beta,
        rho_sel=config.beta * per_round,
        rho_meas=(1.0 - config.beta) * per_round,
        rho_used=ledger.rho_used,
        anneal_cap=config.anneal_cap,
    )
    state = _exhaust_if_last(state)
    stop_at = 1e-12 * config.rho
    log, flags = [], []
    t = 0
    while ledger.remaining() > stop_at:
        t += 1
        t0 = time.perf_counter()
        final = state.final
        rho_sel = min(state.rho_sel, ledger.remaining())
        pair = select_entry(sigma_x, sigma_hat, delta, rho_sel, ledger, rng, t)
        # the last round spends whatever the ledger has left, to the last ulp
        rho_meas = ledger.remaining() if state.final else min(state.rho_meas, ledger.remaining())
        if rho_meas <= 0:
            break
        _, sigma_t = measure_entry(sigma_x, pair, delta, rho_meas, store, ledger, rng, t)
        new_hat, info = _reconstruct(store, config, sigma_hat)
        flags.extend(f"round {t}: {f}" for f in info["flags"])
        state = replace(state, rho_used=ledger.rho_used)
        state, annealed = anneal_budgets(new_hat, sigma_hat, pair, sigma_t, state)
        log.append(RoundRecord(t, pair, sigma_t, rho_sel, rho_meas, annealed, final, time.perf_counter() - t0))
        sigma_hat = new_hat
    return PaceResult(
        sigma_hat=sigma_hat,
        rounds=t,
        rho_used=ledger.rho_used,
        round_log=log,
        n_diagonal=store.n_diagonal(),
        n_offdiagonal=store.n_offdiagonal(),
        store=store,
        ledger=ledger,
        flags=flags,
        n_clipped=n_clipped,
    )
