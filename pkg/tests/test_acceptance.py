"""Acceptance criteria, one test per criterion, each at its stated tolerance and time limit.

Every test records a ``PASS``/``FAIL`` line (shown in the terminal summary).
"""

import itertools
import math
import time

import numpy as np
import pytest

from privcov.baselines import diagonal_only_estimate
from privcov.dataio import ar1_covariance, synth_ar1
from privcov.estimators import DiagonalCovariance, PaceGGMCovariance, SSPCovariance
from privcov.harness import trial_seed
from privcov.measurements import MeasurementStore
from privcov.metrics import frobenius_error
from privcov.pace import BudgetState, anneal_budgets
from privcov.privacy import (
    BudgetLedger,
    SensitivitySpec,
    entry_sensitivity,
    exponential_select,
    full_matrix_sensitivity,
    gaussian_mechanism,
    make_rng,
    zcdp_to_approx_dp,
)
from privcov.reconstruction import (
    ReconstructionProblem,
    barrier_value_and_gradient,
    ipm_solve,
    loss,
    pgd_solve,
    solve_max_entropy,
)
from privcov.validation import second_moment

SWEEP_RHOS = (1e-3, 1e-2, 1.0)
TRIALS = 10


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def verdict(record, number, title, ok, detail, seconds, limit, note=""):
    in_time = seconds < limit
    status = "PASS" if ok and in_time else "FAIL"
    line = f"{status} {number}: {title} | {detail} | {seconds:.1f}s (limit {limit:g}s)"
    if note:
        line += f" | {note}"
    record(line)
    return ok and in_time


def test_criterion_01_sensitivities(acceptance_line):
    with Clock() as clk:
        worst_entry = worst_full = worst_ratio = 0.0
        for B, n, d in itertools.product([0.1, 0.5, 1.0, 3.0], [1, 7, 100, 8192], [1, 2, 10, 32, 500]):
            spec = SensitivitySpec(B, n, d)
            e, f = entry_sensitivity(spec), full_matrix_sensitivity(spec)
            worst_entry = max(worst_entry, abs(e - 2 * B**2 / n))
            worst_full = max(worst_full, abs(f - math.sqrt(2) * d * B**2 / n))
            worst_ratio = max(worst_ratio, abs(f / e - d / math.sqrt(2)) / (d / math.sqrt(2)))
    ok = worst_entry <= 1e-12 and worst_full <= 1e-12 and worst_ratio <= 1e-12
    detail = f"max abs error entry {worst_entry:.1e}, full {worst_full:.1e}; ratio rel error {worst_ratio:.1e}"
    assert verdict(acceptance_line, 1, "sensitivity formulas", ok, detail, clk.seconds, 1)


@pytest.mark.xfail(strict=True, reason="stated target 5.75636 disagrees with its own formula, which gives 5.756522")
def test_criterion_02_conversion(acceptance_line):
    with Clock() as clk:
        eps = zcdp_to_approx_dp(0.5, 1e-6)
    ok = abs(eps - 5.75636) <= 1e-4
    formula = 0.5 + 2 * math.sqrt(0.5 * math.log(1e6))
    detail = f"got {eps:.7f} (formula evaluates to {formula:.7f}); target 5.75636 +/- 1e-4"
    note = "expected failure: target inconsistent with formula" if not ok else ""
    assert verdict(acceptance_line, 2, "zCDP to (eps, delta) conversion", ok, detail, clk.seconds, 1, note)


def test_criterion_03_mechanism_laws(acceptance_line):
    with Clock() as clk:
        draws = gaussian_mechanism(np.zeros(10**6), 1.0, 0.5, BudgetLedger(1.0), make_rng(20240101))
        std_err = abs(draws.std() - 1.0)
        scores = np.array([0.0, 0.4, 1.0])
        delta, rho, n = 1.0, 0.5, 100_000
        rng, led = make_rng(7), BudgetLedger(rho * n * 2)
        counts = np.bincount([exponential_select(scores, delta, rho, led, rng) for _ in range(n)], minlength=3)
        w = np.exp(math.sqrt(8 * rho) * scores / (2 * delta))
        p = w / w.sum()
        z = np.abs(counts / n - p) / np.sqrt(p * (1 - p) / n)
    ok = std_err <= 0.02 and bool(np.all(z <= 3))
    detail = f"gaussian std off by {std_err:.4f} (<= 0.02); selection z-scores {np.round(z, 2).tolist()} (<= 3)"
    assert verdict(acceptance_line, 3, "mechanism distributions", ok, detail, clk.seconds, 10)


def test_criterion_04_chain_oracle(acceptance_line):
    with Clock() as clk:
        prob = ReconstructionProblem(3, [0, 1, 2, 1, 2], [0, 1, 2, 0, 1], [1.0, 1.0, 1.0, 0.5, 0.4], np.full(5, 1e6))
        S = ipm_solve(prob).sigma
        K = np.linalg.inv(S)
    s31, k31, kmax = S[2, 0], abs(K[2, 0]), np.abs(np.diag(K)).max()
    ok = abs(s31 - 0.20) <= 1e-3 and k31 <= 1e-4 * kmax
    detail = f"Sigma31 = {s31:.9f} (0.20 +/- 1e-3); |K31| = {k31:.1e} <= {1e-4 * kmax:.1e}"
    assert verdict(acceptance_line, 4, "chain reconstruction", ok, detail, clk.seconds, 5)


def _random_instance(rng, d=8, p=0.4):
    A = rng.normal(size=(d, d))
    S = A @ A.T / d + 0.3 * np.eye(d)
    pairs = [(j, j) for j in range(d)] + [(j, k) for j in range(d) for k in range(j) if rng.random() < p]
    r = np.array([a for a, _ in pairs])
    c = np.array([b for _, b in pairs])
    y = S[r, c] + rng.normal(scale=0.05, size=len(r))
    return ReconstructionProblem(d, r, c, y, 10 ** rng.uniform(0, 3, len(r)))


def _central_difference(f, L, h):
    G = np.zeros_like(L)
    for j, k in zip(*np.tril_indices(L.shape[0])):
        E = np.zeros_like(L)
        E[j, k] = h
        G[j, k] = (f(L + E) - f(L - E)) / (2 * h)
    return G


def test_criterion_05_gradient_check(acceptance_line):
    worst = 0.0
    with Clock() as clk:
        rng = np.random.default_rng(5)
        for _ in range(20):
            prob = _random_instance(rng)
            L = np.tril(rng.normal(scale=0.4, size=(8, 8)))
            np.fill_diagonal(L, rng.uniform(0.5, 1.5, 8))
            for mu in (1.0, 1e-3):
                _, g = barrier_value_and_gradient(L, prob, mu)
                fd = _central_difference(lambda M: barrier_value_and_gradient(M, prob, mu)[0], L, 1e-5)
                worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    ok = worst <= 1e-5
    detail = f"worst relative error {worst:.1e} over 20 instances x 2 barrier weights (<= 1e-5)"
    assert verdict(acceptance_line, 5, "barrier gradient vs finite differences", ok, detail, clk.seconds, 30)


def _history(seed, d=5, m=30):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(d, d))
    S = A @ A.T / d + 0.3 * np.eye(d)
    lower = [(j, k) for j in range(d) for k in range(j + 1)]
    pairs = [(j, j) for j in range(d)] + [lower[i] for i in rng.integers(0, len(lower), m - d)]
    store = MeasurementStore(d)
    for j, k in pairs:
        v = 10 ** rng.uniform(-3, -1)
        store.record(j, k, S[j, k] + rng.normal(scale=math.sqrt(v)), v)
    return store


def test_criterion_06_ivw_collapse(acceptance_line):
    worst, exact = 0.0, 0
    with Clock() as clk:
        for seed in range(10):
            store = _history(seed)
            assert len(store.raw_log) == 30
            collapsed = ipm_solve(ReconstructionProblem.from_store(store))
            raw = ipm_solve(ReconstructionProblem.from_raw_log(store))
            worst = max(worst, np.linalg.norm(collapsed.sigma - raw.sigma))
            exact += collapsed.exact
    ok = worst <= 1e-6
    detail = f"worst Frobenius gap {worst:.1e} over 10 histories ({exact} well-posed) (<= 1e-6)"
    assert verdict(acceptance_line, 6, "collapsed vs raw-log objective", ok, detail, clk.seconds, 30)


def _block_store(seed, d=20):
    rng = np.random.default_rng(seed)
    n_blocks = int(rng.integers(3, 6))
    labels = np.arange(d) % n_blocks
    rng.shuffle(labels)
    A = rng.normal(size=(d, d))
    truth = (A @ A.T / d + 0.5 * np.eye(d)) * (labels[:, None] == labels[None, :])
    store = MeasurementStore(d)
    for j in range(d):
        store.record(j, j, truth[j, j] + rng.normal(scale=0.05), 2.5e-3)
    for b in range(n_blocks):
        members = rng.permutation(np.flatnonzero(labels == b))
        for a, c in zip(members[:-1], members[1:]):
            store.record(int(a), int(c), truth[a, c] + rng.normal(scale=0.05), 2.5e-3)
        for _ in range(len(members) // 2):
            j, k = rng.choice(members, 2, replace=False)
            store.record(int(j), int(k), truth[j, k] + rng.normal(scale=0.05), 2.5e-3)
    return store


def test_criterion_07_components(acceptance_line):
    worst, t_dense, t_comp, n_comp = 0.0, 0.0, 0.0, []
    with Clock() as clk:
        for seed in range(10):
            store = _block_store(seed)
            n_comp.append(len(store.connected_components()))
            t0 = time.perf_counter()
            dense = solve_max_entropy(store, components=False)
            t1 = time.perf_counter()
            comp = solve_max_entropy(store, components=True)
            t2 = time.perf_counter()
            t_dense += t1 - t0
            t_comp += t2 - t1
            worst = max(worst, np.linalg.norm(dense - comp))
    ok = worst <= 1e-6 and min(n_comp) >= 3
    detail = (f"worst Frobenius gap {worst:.1e} (<= 1e-6); components per instance {n_comp}; "
              f"wall time dense {t_dense:.2f}s vs components {t_comp:.2f}s (soft check, "
              f"{'met' if t_comp <= t_dense else 'not met'})")
    assert verdict(acceptance_line, 7, "component-wise vs dense solve", ok, detail, clk.seconds, 60)


def test_criterion_09_anneal_threshold(acceptance_line):
    with Clock() as clk:
        state = BudgetState(rho=1.0, beta=0.5, rho_sel=0.001, rho_meas=0.002, rho_used=0.3)
        sigma_t = 0.05
        prev = np.zeros((3, 3))
        moved_half, moved_one = prev.copy(), prev.copy()
        moved_half[2, 1] = 0.5 * sigma_t
        moved_one[2, 1] = 1.0 * sigma_t
        s_half, fired_half = anneal_budgets(moved_half, prev, (2, 1), sigma_t, state)
        s_one, fired_one = anneal_budgets(moved_one, prev, (2, 1), sigma_t, state)
    ok = (fired_half and math.isclose(s_half.rho_sel, 0.002) and math.isclose(s_half.rho_meas, 0.008)
          and not fired_one and (s_one.rho_sel, s_one.rho_meas) == (0.001, 0.002))
    detail = (f"0.5 sigma -> fired={fired_half}, budgets x{s_half.rho_sel / 0.001:g}/x{s_half.rho_meas / 0.002:g}; "
              f"1.0 sigma -> fired={fired_one}")
    assert verdict(acceptance_line, 9, "anneal threshold", ok, detail, clk.seconds, 1)


@pytest.fixture(scope="module")
def trend_sweep():
    """PACE-GGM and SSP on AR(1) data with correlation 0.5, 10 pinned-seed trials per budget."""
    data = synth_ar1(32, 8192, 0.5, seed=0)
    truth = second_moment(data.X)
    out = {"pace": {}, "ssp": {}, "runs": []}
    t0 = time.perf_counter()
    for rho in SWEEP_RHOS:
        pace_err, ssp_err, off = [], [], []
        for t in range(TRIALS):
            est = PaceGGMCovariance(rho=rho, alpha=0.3, beta=0.5, B=data.B,
                                    random_state=trial_seed(0, "pace_ggm", rho, t)).fit(data.X)
            pace_err.append(frobenius_error(est.covariance_, truth))
            off.append(est.n_offdiagonal_)
            out["runs"].append((rho, est))
            if rho < 1:
                ssp = SSPCovariance(rho=rho, B=data.B, random_state=trial_seed(0, "ssp", rho, t)).fit(data.X)
                ssp_err.append(frobenius_error(ssp.covariance_, truth))
        out["pace"][rho] = (pace_err, off)
        out["ssp"][rho] = ssp_err
    out["seconds"] = time.perf_counter() - t0
    return out


@pytest.mark.slow
def test_criterion_08_budget_exhaustion(trend_sweep, acceptance_line):
    with Clock() as clk:
        bad_used, worst_sum = [], 0.0
        for rho, est in trend_sweep["runs"]:
            if not rho - 1e-9 <= est.rho_used_ <= rho:
                bad_used.append((rho, est.rho_used_))
            logged = 0.3 * rho + math.fsum(r.rho_sel + r.rho_meas for r in est.round_log_)
            worst_sum = max(worst_sum, abs(logged - est.rho_used_))
    ok = not bad_used and worst_sum <= 1e-12
    detail = (f"{len(trend_sweep['runs'])} runs; rho_used outside [rho - 1e-9, rho]: {len(bad_used)}; "
              f"worst |round-log total - rho_used| {worst_sum:.1e}")
    seconds = clk.seconds + trend_sweep["seconds"]
    assert verdict(acceptance_line, 8, "budget exhaustion", ok, detail, seconds, 600, "time shared with criterion 10")


@pytest.mark.slow
def test_criterion_10_end_to_end_trend(trend_sweep, acceptance_line):
    parts, ok = [], True
    for rho in (1e-3, 1e-2):
        pace_med = float(np.median(trend_sweep["pace"][rho][0]))
        ssp_med = float(np.median(trend_sweep["ssp"][rho]))
        ok &= pace_med <= ssp_med
        parts.append(f"rho={rho:g}: PACE {pace_med:.4f} vs SSP {ssp_med:.4f}")
    detail = "median Frobenius " + "; ".join(parts)
    assert verdict(acceptance_line, 10, "PACE-GGM beats SSP at low budget", ok, detail, trend_sweep["seconds"], 600)


@pytest.mark.slow
def test_criterion_11_measurement_growth(trend_sweep, acceptance_line):
    low = float(np.median(trend_sweep["pace"][1e-3][1]))
    high = float(np.median(trend_sweep["pace"][1.0][1]))
    ok = high >= low
    detail = f"median off-diagonal count rho=1: {high:g} vs rho=1e-3: {low:g}"
    assert verdict(acceptance_line, 11, "measurements grow with budget", ok, detail, trend_sweep["seconds"], 600,
                   "time shared with criterion 10")


@pytest.mark.slow
def test_criterion_12_diagonal_adaptivity(acceptance_line):
    with Clock() as clk:
        flat = synth_ar1(32, 8192, 0.0, seed=0)
        flat_truth = second_moment(flat.X)
        diag_err, ssp_err = [], []
        for t in range(TRIALS):
            d = DiagonalCovariance(rho=1e-2, B=flat.B, random_state=trial_seed(0, "diagonal", 1e-2, t)).fit(flat.X)
            s = SSPCovariance(rho=1e-2, B=flat.B, random_state=trial_seed(0, "ssp", 1e-2, t)).fit(flat.X)
            diag_err.append(frobenius_error(d.covariance_, flat_truth))
            ssp_err.append(frobenius_error(s.covariance_, flat_truth))
        corr = synth_ar1(32, 8192, 0.9, seed=0)
        corr_truth = second_moment(corr.X)
        pace_err, diag9_err = [], []
        for t in range(TRIALS):
            p = PaceGGMCovariance(rho=1.0, B=corr.B, random_state=trial_seed(0, "pace_ggm", 1.0, t)).fit(corr.X)
            d = DiagonalCovariance(rho=1.0, B=corr.B, random_state=trial_seed(0, "diagonal", 1.0, t)).fit(corr.X)
            pace_err.append(frobenius_error(p.covariance_, corr_truth))
            diag9_err.append(frobenius_error(d.covariance_, corr_truth))
    a, b = float(np.median(diag_err)), float(np.median(ssp_err))
    c, e = float(np.median(pace_err)), float(np.median(diag9_err))
    ok = a <= b and c <= e
    detail = (f"corr=0, rho=1e-2: diagonal {a:.4f} vs SSP {b:.4f}; "
              f"corr=0.9, rho=1: PACE {c:.4f} vs diagonal {e:.4f} (medians of {TRIALS})")
    assert verdict(acceptance_line, 12, "diagonal structure adaptivity", ok, detail, clk.seconds, 300)


def _pgd_instance(seed, d=10, p=0.3, corr=0.75):
    """Exact entries of a permuted AR(1) matrix on a random support, with heterogeneous weights."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(d)
    S = ar1_covariance(d, corr)[np.ix_(perm, perm)]
    pairs = [(j, j) for j in range(d)] + [(j, k) for j in range(d) for k in range(j) if rng.random() < p]
    r = np.array([a for a, _ in pairs])
    c = np.array([b for _, b in pairs])
    return ReconstructionProblem(d, r, c, S[r, c], 10 ** rng.uniform(0, 2, len(r)))


def _zero_fill_indefinite(prob):
    Z = np.zeros((prob.n, prob.n))
    Z[prob.rows, prob.cols] = prob.y
    Z[prob.cols, prob.rows] = prob.y
    return np.linalg.eigvalsh(Z).min() < 0


def test_criterion_13_pgd_comparison(acceptance_line):
    rows = []
    with Clock() as clk:
        # instances where zero-filling is not already PSD, so PGD has real work to do
        seeds = [s for s in range(100) if _zero_fill_indefinite(_pgd_instance(s))][:5]
        for s in seeds:
            prob = _pgd_instance(s)
            zeros = loss(pgd_solve(prob, init="zeros", max_iter=500), prob)
            ones = loss(pgd_solve(prob, init="ones", max_iter=500), prob)
            ipm = loss(ipm_solve(prob).sigma, prob)
            rows.append((s, zeros, ones, ipm))
    wins = sum(z <= o for _, z, o, _ in rows)
    ipm_ok = all(i <= 1.01 * min(z, o) for _, z, o, i in rows)
    ok = len(rows) == 5 and wins >= 4 and ipm_ok
    table = ", ".join(f"seed {s}: zeros {z:.1e} ones {o:.1e} ipm {i:.1e}" for s, z, o, i in rows)
    detail = f"zeros <= ones on {wins}/5; IPM within 1.01x of best PGD on all: {ipm_ok} ({table})"
    assert verdict(acceptance_line, 13, "PGD initialisation sensitivity", ok, detail, clk.seconds, 120)
