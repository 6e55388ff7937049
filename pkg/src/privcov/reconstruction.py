"""Maximum-entropy PSD reconstruction from weighted partial observations.

The estimate is the limit, as the barrier weight ``mu`` goes to zero, of

    argmin_{W PSD}  sum_{(j,k) in S} w_jk / 2 * (W_jk - y_jk)^2  -  mu * log det W

with ``W = L L^T`` parameterized by a lower-triangular Cholesky factor. Each
barrier subproblem is solved by bound-constrained L-BFGS on the entries of
``L``, warm-started from the previous (larger) ``mu``.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.sparse import csr_matrix

logger = logging.getLogger(__name__)

DIAG_LOWER_BOUND = 1e-12
RETRY_PG_FACTOR = 1e3
FLOOR_PG_FACTOR = 10.0
COMPLETION_MAX_COND = 1e10
_DENSE_MAX = 64


class ReconstructionWarning(UserWarning):
    pass


@dataclass
class ReconstructionProblem:
    """Weighted observations on one block of vertices.

    ``rows``/``cols`` are local 0-based indices with ``rows >= cols``. Repeated
    pairs are allowed, in which case each occurrence contributes its own term.
    ``vertices`` maps local indices back to the full matrix.
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    y: np.ndarray
    w: np.ndarray
    vertices: np.ndarray | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.intp)
        self.cols = np.asarray(self.cols, dtype=np.intp)
        self.y = np.asarray(self.y, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if self.vertices is None:
            self.vertices = np.arange(self.n)
        self.vertices = np.asarray(self.vertices, dtype=np.intp)
        if not (len(self.rows) == len(self.cols) == len(self.y) == len(self.w)):
            raise ValueError("rows, cols, y and w must have equal length")
        if np.any(self.rows < self.cols):
            raise ValueError("pairs must be canonical (row >= col)")
        if np.any(self.w <= 0):
            raise ValueError("weights must be positive")
        diag = set(self.rows[self.rows == self.cols].tolist())
        missing = set(range(self.n)) - diag
        if missing:
            raise ValueError(f"diagonal entries {sorted(missing)} are not observed")

    @classmethod
    def from_store(cls, store, vertices=None) -> "ReconstructionProblem":
        """Collapsed ``(y, lam)`` observations of ``store`` restricted to ``vertices``."""
        vertices = np.arange(store.d) if vertices is None else np.asarray(vertices)
        rows, cols, y, lam = store.arrays()
        return cls._restrict(rows, cols, y, lam, vertices)

    @classmethod
    def from_raw_log(cls, store, vertices=None) -> "ReconstructionProblem":
        """One term per raw measurement, weighted by ``1 / sigma^2``."""
        vertices = np.arange(store.d) if vertices is None else np.asarray(vertices)
        if not store.raw_log:
            raise ValueError("store has no raw log")
        j, k, z, s2 = (np.array(c) for c in zip(*store.raw_log))
        return cls._restrict(j.astype(np.intp), k.astype(np.intp), z, 1.0 / s2, vertices)

    @classmethod
    def _restrict(cls, rows, cols, y, w, vertices):
        vertices = np.sort(np.asarray(vertices, dtype=np.intp))
        local = -np.ones(max(vertices.max() + 1, rows.max(initial=0) + 1), dtype=np.intp)
        local[vertices] = np.arange(len(vertices))
        lr, lc = local[rows], local[cols]
        keep = (lr >= 0) & (lc >= 0)
        return cls(len(vertices), lr[keep], lc[keep], y[keep], w[keep], vertices)

    def diagonal_means(self) -> np.ndarray:
        """Weighted mean observed value of each diagonal entry."""
        d = self.rows == self.cols
        num = np.bincount(self.rows[d], self.w[d] * self.y[d], minlength=self.n)
        den = np.bincount(self.rows[d], self.w[d], minlength=self.n)
        return num / den

    def scaled(self, c: float) -> "ReconstructionProblem":
        return ReconstructionProblem(self.n, self.rows, self.cols, self.y, c * self.w, self.vertices)


@dataclass(frozen=True)
class IpmSchedule:
    """Geometric barrier schedule ``mu0, c_mu * mu0, ...`` stopping at ``mu_min``.

    ``tol_of_mu`` gives the projected-gradient tolerance of each inner solve;
    when left as None the default rule ``max(1e-10, 1e-4 * mu)`` is used. The
    gradient of the barrier term in an unobserved direction is proportional to
    ``mu`` times the matching precision-matrix entry, so a tolerance that
    shrinks with ``mu`` is what keeps those entries near zero.
    """

    mu0: float
    c_mu: float = 0.2
    mu_min: float | None = None
    tol_of_mu: Callable[[float], float] | None = None
    max_inner_iter: int = 5000

    def __post_init__(self):
        mu_min = 1e-7 * self.mu0 if self.mu_min is None else self.mu_min
        object.__setattr__(self, "mu_min", mu_min)
        if not 0 < mu_min < self.mu0:
            raise ValueError("need 0 < mu_min < mu0")
        if not 0 < self.c_mu < 1:
            raise ValueError("c_mu must lie in (0, 1)")

    @classmethod
    def default_for(cls, problem: ReconstructionProblem, **kw) -> "IpmSchedule":
        mu0 = max(1.0, float(np.mean(problem.diagonal_means())))
        return cls(mu0=mu0, **kw)

    def tol(self, mu: float) -> float:
        if self.tol_of_mu is not None:
            return self.tol_of_mu(mu)
        return max(1e-10, 1e-4 * mu)

    def mus(self) -> list[float]:
        out, mu = [], self.mu0
        while mu > self.mu_min:
            out.append(mu)
            mu *= self.c_mu
        return out

    def scaled(self, c: float) -> "IpmSchedule":
        """Schedule for weights multiplied by ``c`` (mu and tolerances scale with them)."""
        return IpmSchedule(
            self.mu0 * c, self.c_mu, self.mu_min * c, lambda mu: c * self.tol(mu / c), self.max_inner_iter
        )


def loss(W, problem: ReconstructionProblem) -> float:
    """Weighted squared misfit ``sum w/2 (W_jk - y_jk)^2`` over observed pairs."""
    W = np.asarray(W, dtype=float)
    r = W[problem.rows, problem.cols] - problem.y
    return 0.5 * float(np.dot(problem.w, r * r))


def _residual_matrix(problem, vals):
    """Symmetric matrix ``H + H^T`` with ``H[r, c] += vals``; dense for small blocks."""
    n = problem.n
    if n <= _DENSE_MAX:
        flat = np.bincount(problem.rows * n + problem.cols, vals, minlength=n * n)
        flat += np.bincount(problem.cols * n + problem.rows, vals, minlength=n * n)
        return flat.reshape(n, n)
    idx_r = np.concatenate([problem.rows, problem.cols])
    idx_c = np.concatenate([problem.cols, problem.rows])
    return csr_matrix((np.concatenate([vals, vals]), (idx_r, idx_c)), shape=(n, n))


def barrier_value_and_gradient(L, problem: ReconstructionProblem, mu: float):
    """Value and gradient of ``loss(L L^T) - 2 mu sum log L_jj`` in ``L``.

    Only observed entries of ``L L^T`` are formed (row dot products), so the
    data term costs ``O(|S| n)``. The gradient is returned as a lower-triangular
    ``n x n`` array.
    """
    L = np.asarray(L, dtype=float)
    diag = np.diag(L)
    if np.any(diag <= 0):
        raise ValueError("Cholesky factor must have a positive diagonal")
    s = np.einsum("ij,ij->i", L[problem.rows], L[problem.cols])
    res = s - problem.y
    wres = problem.w * res
    value = 0.5 * float(np.dot(wres, res)) - 2.0 * mu * float(np.sum(np.log(diag)))
    G = _residual_matrix(problem, wres)
    grad = np.tril(G @ L)
    grad[np.diag_indices_from(grad)] -= 2.0 * mu / diag
    return value, grad


@dataclass
class BoundedResult:
    x: np.ndarray
    fun: float
    n_iter: int
    converged: bool
    pg_norm: float
    message: str = ""
    status: str = "converged"


def projected_gradient_norm(x, g, lower) -> float:
    pg = np.array(g, dtype=float)
    at_bound = (x <= lower) & (pg > 0)
    pg[at_bound] = 0.0
    return float(np.max(np.abs(pg), initial=0.0))


def minimize_bounded(fun_and_grad, x0, lower=None, tol=1e-8, max_iter=5000, memory=10, ftol=0.0):
    """Bound-constrained limited-memory BFGS (scipy's L-BFGS-B).

    Parameters
    ----------
    fun_and_grad : callable
        ``x -> (value, gradient)``.
    x0 : array_like
        Feasible starting point.
    lower : array_like or None
        Lower bounds; ``-inf`` for free variables.
    tol : float
        Target infinity norm of the projected gradient.

    Returns
    -------
    BoundedResult
        ``converged`` is False when the iteration budget ran out or the line
        search failed before reaching ``tol``. ``status`` is one of
        ``"converged"``, ``"max_iter"``, ``"precision_floor"`` (line search
        stalled within ``FLOOR_PG_FACTOR * tol``) or ``"line_search"``.
    """
    x0 = np.asarray(x0, dtype=float)
    lower = np.full_like(x0, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    if np.any(x0 < lower):
        raise ValueError("x0 violates the lower bounds")
    bounds = optimize.Bounds(lower, np.full_like(x0, np.inf))
    res = optimize.minimize(
        fun_and_grad,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"gtol": tol, "ftol": ftol, "maxiter": max_iter, "maxcor": memory},
    )
    _, g = fun_and_grad(res.x)
    pg = projected_gradient_norm(res.x, g, lower)
    if pg <= tol:
        status = "converged"
    elif res.status == 1 or res.nit >= max_iter:
        status = "max_iter"
    elif pg <= FLOOR_PG_FACTOR * tol:
        # the line search can no longer resolve decreases in float64
        status = "precision_floor"
    else:
        status = "line_search"
    return BoundedResult(res.x, float(res.fun), int(res.nit), pg <= tol, pg, str(res.message), status)


def initial_factor(problem: ReconstructionProblem) -> np.ndarray:
    ydiag = problem.diagonal_means()
    eps0 = 1e-6 * np.maximum(ydiag, 1.0)
    return np.diag(np.sqrt(np.maximum(ydiag, eps0)))


@dataclass
class IpmResult:
    sigma: np.ndarray
    L: np.ndarray
    converged: bool
    trace: list = field(default_factory=list)
    retried: bool = False
    completed: bool = False
    exact: bool = False


def _run_path(problem, schedule, L0, mus):
    n = problem.n
    tri = np.tril_indices(n)
    on_diag = tri[0] == tri[1]
    lower = np.where(on_diag, DIAG_LOWER_BOUND, -np.inf)

    def fg(x):
        L = np.zeros((n, n))
        L[tri] = x
        if np.any(np.diag(L) <= 0):
            return np.inf, np.zeros_like(x)
        v, g = barrier_value_and_gradient(L, problem, mu)
        return v, g[tri]

    x = L0[tri].copy()
    x[on_diag] = np.maximum(x[on_diag], 10 * DIAG_LOWER_BOUND)
    trace, last = [], None
    for mu in mus:
        tol = schedule.tol(mu)
        out = minimize_bounded(fg, x, lower, tol, schedule.max_inner_iter)
        if not np.all(np.isfinite(out.x)) or not np.isfinite(out.fun):
            return None, trace, None
        x = out.x
        L = np.zeros((n, n))
        L[tri] = x
        trace.append({
            "mu": mu, "tol": tol, "n_iter": out.n_iter, "pg_norm": out.pg_norm,
            "converged": out.converged, "status": out.status, "loss": loss(L @ L.T, problem),
        })
        last = out
    L = np.zeros((n, n))
    L[tri] = x
    return L, trace, last


def _needs_retry(last, tol) -> bool:
    # A stall within RETRY_PG_FACTOR of the tolerance is the float64 floor of a
    # badly conditioned block; restarting from a jittered point cannot beat it.
    return last is None or (not _stage_ok(last) and last.pg_norm > RETRY_PG_FACTOR * tol)


def _stage_ok(out) -> bool:
    return out.converged or out.status == "precision_floor"


@dataclass
class CompletionResult:
    sigma: np.ndarray
    converged: bool
    n_iter: int
    logdet_gain: float


def maxent_completion(sigma, observed, tol=1e-12, max_iter=30, max_cond=COMPLETION_MAX_COND) -> CompletionResult:
    """Maximise ``log det`` over the unobserved entries of ``sigma``.

    Observed entries (a symmetric boolean mask; the diagonal counts as
    observed) are held fixed. Damped Newton steps on the free off-diagonal
    entries run until the precision matrix is zero on every free pair to
    within ``tol`` relative to its diagonal, or the Newton decrement drops
    below 1e-20.

    Every accepted step keeps the matrix positive definite and does not lower
    ``log det``, so an unconverged result is still a valid improvement on the
    input. The input is returned unchanged (``n_iter == 0``) when it is not
    positive definite or its rough Cholesky condition estimate exceeds
    ``max_cond``, where float64 cannot resolve the free precision entries.
    """
    sigma = np.array(sigma, dtype=float)
    free_r, free_c = np.nonzero(np.tril(~np.asarray(observed, dtype=bool), -1))
    if free_r.size == 0:
        return CompletionResult(sigma, True, 0, 0.0)
    try:
        cdiag = np.diag(np.linalg.cholesky(sigma))
    except np.linalg.LinAlgError:
        return CompletionResult(sigma, False, 0, 0.0)
    if (cdiag.max() / cdiag.min()) ** 2 > max_cond:
        return CompletionResult(sigma, False, 0, 0.0)
    start = logdet = 2.0 * np.log(cdiag).sum()
    for it in range(max_iter):
        K = np.linalg.inv(sigma)
        K = (K + K.T) / 2
        scale = np.sqrt(np.outer(np.diag(K), np.diag(K)))[free_r, free_c]
        if np.max(np.abs(K[free_r, free_c]) / scale) <= tol:
            return CompletionResult(sigma, True, it, logdet - start)
        # objective -log det in the free entries x; each x moves S_jk and S_kj
        grad = -2.0 * K[free_r, free_c]
        hess = 2.0 * (K[np.ix_(free_c, free_r)] * K[np.ix_(free_r, free_c)]
                      + K[np.ix_(free_c, free_c)] * K[np.ix_(free_r, free_r)])
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        decrement = -float(grad @ step)
        if not decrement >= 0:
            break
        slack = 1e-13 * max(1.0, abs(logdet))
        t = 1.0
        while t >= 1e-10:
            trial = sigma.copy()
            trial[free_r, free_c] += t * step
            trial[free_c, free_r] = trial[free_r, free_c]
            try:
                new_logdet = 2.0 * np.log(np.diag(np.linalg.cholesky(trial))).sum()
            except np.linalg.LinAlgError:
                new_logdet = -np.inf
            if new_logdet >= logdet - slack:
                break
            t /= 2
        else:
            break
        sigma, logdet = trial, max(new_logdet, logdet)
        if decrement <= 1e-20:
            return CompletionResult(sigma, True, it + 1, logdet - start)
    else:
        it = max_iter
    return CompletionResult(sigma, False, it, logdet - start)


def observed_mask(problem: ReconstructionProblem) -> np.ndarray:
    mask = np.eye(problem.n, dtype=bool)
    mask[problem.rows, problem.cols] = True
    mask[problem.cols, problem.rows] = True
    return mask


def observed_means(problem: ReconstructionProblem) -> np.ndarray:
    """Symmetric matrix of weighted mean observations (the loss minimiser entrywise); 0 where unobserved."""
    num = np.zeros((problem.n, problem.n))
    den = np.zeros((problem.n, problem.n))
    np.add.at(num, (problem.rows, problem.cols), problem.w * problem.y)
    np.add.at(den, (problem.rows, problem.cols), problem.w)
    M = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return np.tril(M) + np.tril(M, -1).T


def _exact_limit(S, problem, mask):
    """Max-entropy completion of the observed means, if they admit a PD completion."""
    snapped = np.where(mask, observed_means(problem), S)
    try:
        np.linalg.cholesky(snapped)
    except np.linalg.LinAlgError:
        return None
    comp = maxent_completion(snapped, mask)
    return comp.sigma if comp.converged else None


def ipm_solve(
    problem: ReconstructionProblem,
    schedule: IpmSchedule | None = None,
    L0=None,
    rng=None,
    stages: int | None = None,
    complete: bool = True,
):
    """Follow the barrier path to its small-``mu`` end and return ``L L^T``.

    Parameters
    ----------
    stages : int, optional
        Run only the last ``stages`` barrier weights of the schedule. Useful
        when ``L0`` already sits near the end of the path.

    If the final inner solve stalls far from its tolerance, or the iterates
    blow up, the path is restarted once from ``L0`` with 1% relative Gaussian
    jitter. The result is PSD by construction; ``converged`` reports whether
    the last inner solve met its tolerance or stalled at the float64 floor
    just above it.

    With ``complete`` on, the unobserved entries of the final ``L L^T`` are
    then re-solved by Newton's method in :func:`maxent_completion`;
    ``completed`` reports whether that step converged. Every point on the
    barrier path already has a precision matrix vanishing at unobserved
    pairs, so this only removes the inner solver's residual error there,
    which is large in directions where the barrier is the sole source of
    curvature. Observed entries, and hence the loss, are left untouched.

    Before that, if setting the observed entries to their weighted means
    gives a positive definite matrix, the observations admit a PD
    completion. The small-``mu`` limit is then known exactly: zero loss, and
    the max-entropy completion of those means. When Newton's method
    converges on it, that limit is returned and ``exact`` is set.
    """
    schedule = IpmSchedule.default_for(problem) if schedule is None else schedule
    L0 = initial_factor(problem) if L0 is None else np.asarray(L0, dtype=float)
    mus = schedule.mus()
    if stages is not None:
        mus = mus[-max(1, stages):]
    L, trace, last = _run_path(problem, schedule, L0, mus)
    retried = False
    if _needs_retry(last, schedule.tol(mus[-1])):
        retried = True
        rng = np.random.default_rng(0) if rng is None else rng
        L0j = np.tril(L0 * (1.0 + 0.01 * rng.standard_normal(L0.shape)))
        np.fill_diagonal(L0j, np.abs(np.diag(L0j)))
        L2, trace2, last2 = _run_path(problem, schedule, L0j, mus)
        better = last2 is not None and (last is None or last2.pg_norm < last.pg_norm)
        if better:
            L, trace, last = L2, trace2, last2
    if L is None:
        raise FloatingPointError("barrier path produced non-finite iterates")
    S = L @ L.T
    S = (S + S.T) / 2
    completed = exact = False
    if complete:
        mask = observed_mask(problem)
        limit = _exact_limit(S, problem, mask)
        if limit is not None:
            S, completed, exact = limit, True, True
        else:
            comp = maxent_completion(S, mask)
            if comp.n_iter > 0:
                S = comp.sigma
            completed = comp.converged
        L = np.linalg.cholesky(S)
    return IpmResult(S, L, _stage_ok(last), trace, retried, completed, exact)


def psd_project(M) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped to 0)."""
    M = np.asarray(M, dtype=float)
    M = (M + M.T) / 2
    vals, vecs = np.linalg.eigh(M)
    if vals[0] >= 0:
        return M
    out = (vecs * np.maximum(vals, 0.0)) @ vecs.T
    return (out + out.T) / 2


def pgd_solve(problem: ReconstructionProblem, init="zeros", step=None, max_iter=5000, return_trace=False):
    """Projected gradient descent on the weighted misfit over the PSD cone.

    Observed entries start at their observed values and unobserved ones at 0
    (``init="zeros"``) or 1 (``init="ones"``). Each iteration takes a gradient
    step on ``loss`` and projects back onto the PSD cone.
    """
    if init not in ("zeros", "ones"):
        raise ValueError(f"init must be 'zeros' or 'ones', got {init!r}")
    n = problem.n
    W = np.zeros((n, n)) if init == "zeros" else np.ones((n, n))
    observed = observed_mask(problem)
    W[observed] = observed_means(problem)[observed]
    step = 1.0 / (2.0 * problem.w.max()) if step is None else step
    trace = []
    for _ in range(max_iter):
        G = _residual_matrix(problem, problem.w * (W[problem.rows, problem.cols] - problem.y))
        G = np.asarray(G.todense()) if hasattr(G, "todense") else G
        # H + H^T double-counts the diagonal; the symmetric-entry gradient does not
        G[np.diag_indices(n)] /= 2.0
        W = psd_project(W - step * G)
        if return_trace:
            trace.append(loss(W, problem))
    return (W, trace) if return_trace else W


def solve_max_entropy(
    store,
    schedule=None,
    components=True,
    warm_start=None,
    warm_stages=None,
    max_inner_iter=None,
    return_info=False,
):
    """Maximum-entropy PSD estimate from every measurement in ``store``.

    The measurement graph is split into connected components; singleton blocks
    take ``max(y_jj, 0)`` directly and larger blocks go through :func:`ipm_solve`.
    Blocks are assembled into a block-diagonal matrix. A block whose solve
    breaks down numerically falls back to its clamped diagonal.

    Parameters
    ----------
    store : MeasurementStore
    schedule : IpmSchedule, optional
        Fixed schedule for every block. By default each block gets
        :meth:`IpmSchedule.default_for`.
    components : bool, default=True
        Solve per connected component; False solves one dense block.
    warm_start : ndarray, optional
        Previous ``d x d`` estimate; its block Cholesky factors seed the path.
    warm_stages : int, optional
        With ``warm_start``, run only this many trailing barrier weights.
        None runs the whole schedule.
    max_inner_iter : int, optional
        Iteration cap for the per-block default schedules; ignored when
        ``schedule`` is given.
    return_info : bool, default=False
        Also return a dict of per-block diagnostics.
    """
    d = store.d
    rows, cols, y, lam = store.arrays()
    diag_seen = set(rows[rows == cols].tolist())
    if len(diag_seen) < d:
        missing = sorted(set(range(d)) - diag_seen)
        raise ValueError(f"all diagonal entries must be measured; missing {missing}")
    blocks = store.connected_components() if components else [list(range(d))]
    sigma = np.zeros((d, d))
    info = {"blocks": [], "flags": []}
    for block in blocks:
        t0 = time.perf_counter()
        if len(block) == 1:
            j = block[0]
            sigma[j, j] = max(store.y(j, j), 0.0)
            continue
        prob = ReconstructionProblem.from_store(store, block)
        L0, stages = None, None
        if warm_start is not None:
            L0 = _warm_factor(np.asarray(warm_start)[np.ix_(block, block)], prob)
            stages = warm_stages
        idx = np.ix_(block, block)
        sched = schedule
        if sched is None and max_inner_iter is not None:
            sched = IpmSchedule.default_for(prob, max_inner_iter=max_inner_iter)
        try:
            res = ipm_solve(prob, sched, L0=L0, stages=stages)
        except FloatingPointError:
            msg = f"block {block} failed; using clamped diagonal"
            warnings.warn(msg, ReconstructionWarning)
            info["flags"].append(msg)
            sigma[idx] = np.diag(np.maximum(prob.diagonal_means(), 0.0))
            continue
        sigma[idx] = res.sigma
        if not res.converged:
            last = res.trace[-1]
            info["flags"].append(
                f"block of size {len(block)} stopped short of tolerance "
                f"({last['status']}, projected gradient {last['pg_norm']:.1e} vs {last['tol']:.0e})"
            )
        info["blocks"].append({
            "size": len(block), "converged": res.converged, "retried": res.retried,
            "seconds": time.perf_counter() - t0, "trace": res.trace,
        })
    return (sigma, info) if return_info else sigma


def _warm_factor(S, problem):
    """Cholesky factor of a previous estimate, diagonal-loaded until it factors."""
    base = initial_factor(problem)
    S = (S + S.T) / 2
    scale = max(float(np.max(np.diag(S))), 1e-12)
    for jitter in (0.0, 1e-10, 1e-8, 1e-6, 1e-4):
        try:
            L = np.linalg.cholesky(S + jitter * scale * np.eye(len(S)))
        except np.linalg.LinAlgError:
            continue
        diag = np.diag(L)
        # vertices that were singletons last round may carry a zero diagonal
        if np.all(diag > 1e-6 * math.sqrt(scale)):
            return L
    return base
