"""Seeded multi-trial sweeps over budgets and estimators, with JSONL/CSV output."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .dataio import Dataset, load_dataset, synth_ar1
from .estimators import ESTIMATORS, make_estimator
from .metrics import InvalidTruthError, frobenius_error, mahalanobis_error
from .validation import second_moment

logger = logging.getLogger(__name__)

SOLVERS = ("ipm", "pgd_zeros", "pgd_ones")
_MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One sweep: every estimator at every budget, ``trials`` times.

    Exactly one of ``dataset`` (a CSV or ``.npz`` path) and ``synthetic``
    (keyword arguments for :func:`synth_ar1`, e.g. ``{"d": 32, "n": 8192,
    "corr": 0.5}``) must be set. Wall-clock times are only written when
    ``record_timing`` is on, so that repeated runs produce identical files.
    """

    rho: list = field(default_factory=lambda: [0.01, 0.1, 1.0])
    estimators: list = field(default_factory=lambda: ["pace_ggm", "ssp", "diagonal"])
    trials: int = 10
    seed: int = 0
    alpha: float = 0.3
    beta: float = 0.5
    T: int | None = None
    solver: str = "ipm"
    components: bool = True
    dataset: str | None = None
    synthetic: dict | None = None
    output: str | None = None
    record_timing: bool = False
    n_jobs: int = 1

    def __post_init__(self):
        self.rho = [float(r) for r in np.atleast_1d(self.rho)]
        self.estimators = list(self.estimators)
        self.validate()

    def validate(self):
        if not self.rho or any(not (r > 0 and math.isfinite(r)) for r in self.rho):
            raise ConfigError(f"rho values must be positive and finite, got {self.rho}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError(f"trials must be a positive integer, got {self.trials}")
        unknown = [e for e in self.estimators if e not in ESTIMATORS]
        if unknown or not self.estimators:
            raise ConfigError(f"unknown estimators {unknown}; choose from {sorted(ESTIMATORS)}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if not 0 < self.alpha < 1 or not 0 < self.beta < 1:
            raise ConfigError("alpha and beta must lie in (0, 1)")
        if self.T is not None and self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if (self.dataset is None) == (self.synthetic is None):
            raise ConfigError("set exactly one of dataset and synthetic")
        if self.synthetic is not None:
            missing = {"d", "n", "corr"} - set(self.synthetic)
            extra = set(self.synthetic) - {"d", "n", "corr", "seed"}
            if missing or extra:
                raise ConfigError(f"synthetic spec needs d, n, corr (and optionally seed); got {sorted(self.synthetic)}")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)

    def load_data(self) -> Dataset:
        if self.dataset is not None:
            return load_dataset(self.dataset)
        spec = dict(self.synthetic)
        return synth_ar1(int(spec["d"]), int(spec["n"]), float(spec["corr"]), seed=spec.get("seed", 0))


@dataclass
class TrialRecord:
    dataset: str
    estimator: str
    rho: float
    trial: int
    seed: int
    frobenius: float | None = None
    mahalanobis: float | None = None
    n_diagonal: int | None = None
    n_offdiagonal: int | None = None
    rounds: int | None = None
    seconds: float | None = None
    flags: list = field(default_factory=list)
    error: str | None = None

    @property
    def key(self):
        return (self.estimator, self.rho, self.trial)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def trial_seed(base_seed: int, estimator: str, rho: float, trial: int) -> int:
    """``base_seed`` XOR a stable 64-bit hash of the trial key."""
    h = hashlib.blake2b(f"{estimator}|{float(rho)!r}|{int(trial)}".encode(), digest_size=8)
    return (int(base_seed) ^ int.from_bytes(h.digest(), "little")) & _MASK64


def run_trial(config: ExperimentConfig, data: Dataset, estimator: str, rho: float, trial: int, truth=None):
    """Fit one estimator once and score it against the non-private second moment."""
    seed = trial_seed(config.seed, estimator, rho, trial)
    rec = TrialRecord(data.name, estimator, float(rho), int(trial), seed)
    truth = second_moment(data.X) if truth is None else truth
    t0 = time.perf_counter()
    try:
        est = make_estimator(
            estimator,
            rho=rho,
            alpha=config.alpha,
            beta=config.beta,
            T=config.T,
            B=data.B,
            solver=config.solver,
            components=config.components,
            random_state=seed,
        ).fit(data.X)
    except Exception as exc:  # one bad trial must not sink the sweep
        logger.warning("trial %s failed: %s", rec.key, exc)
        rec.error = f"{type(exc).__name__}: {exc}"
        return rec
    if config.record_timing:
        rec.seconds = time.perf_counter() - t0
    rec.frobenius = frobenius_error(est.covariance_, truth)
    try:
        rec.mahalanobis = mahalanobis_error(est.covariance_, truth)
    except InvalidTruthError as exc:
        rec.flags.append(str(exc))
    if estimator == "pace_ggm":
        rec.n_diagonal = est.n_diagonal_
        rec.n_offdiagonal = est.n_offdiagonal_
        rec.rounds = est.n_rounds_
        rec.flags.extend(est.flags_)
    return rec


def read_records(path) -> list[TrialRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(TrialRecord(**json.loads(line)))
    return out


def _worker(args):
    return run_trial(*args)


def run_experiment(config: ExperimentConfig, data: Dataset | None = None) -> list[TrialRecord]:
    """Run every pending (estimator, rho, trial) and return all records sorted by key.

    With ``config.output`` set, each record is appended to that JSON-lines file
    as soon as it finishes, keys already present there are skipped, and the
    file is rewritten in sorted order at the end.
    """
    data = config.load_data() if data is None else data
    truth = second_moment(data.X)
    done = {}
    out_path = Path(config.output) if config.output else None
    if out_path is not None and out_path.exists():
        for rec in read_records(out_path):
            done[rec.key] = rec
        logger.info("resuming: %d records already in %s", len(done), out_path)
    todo = [
        (e, r, t)
        for e in config.estimators
        for r in config.rho
        for t in range(config.trials)
        if (e, r, t) not in done
    ]
    sink = out_path.open("a") if out_path is not None else None
    try:
        jobs = [(config, data, e, r, t, truth) for e, r, t in todo]
        if config.n_jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(config.n_jobs) as pool:
                results = pool.map(_worker, jobs)
                for rec in results:
                    done[rec.key] = rec
                    _append(sink, rec)
        else:
            for job in jobs:
                rec = _worker(job)
                done[rec.key] = rec
                _append(sink, rec)
    finally:
        if sink is not None:
            sink.close()
    records = [done[k] for k in sorted(done)]
    if out_path is not None:
        write_records(records, out_path)
    return records


def _append(sink, rec):
    if sink is not None:
        sink.write(rec.to_json() + "\n")
        sink.flush()


def write_records(records, path):
    tmp = Path(str(path) + ".tmp")
    with tmp.open("w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
    tmp.replace(path)


SUMMARY_COLUMNS = [
    "dataset",
    "estimator",
    "rho",
    "n_trials",
    "n_failed",
    "frobenius_mean",
    "frobenius_stderr",
    "frobenius_median",
    "mahalanobis_mean",
    "mahalanobis_stderr",
    "mahalanobis_median",
    "n_diagonal_mean",
    "n_offdiagonal_mean",
    "measurements",
    "rounds_mean",
    "seconds_mean",
]


def _stats(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None, None
    arr = np.asarray(vals, dtype=float)
    stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else None
    return float(arr.mean()), stderr, float(np.median(arr))


def _mean(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def summarize(records) -> list[dict]:
    """One row per (dataset, estimator, rho) with the columns in ``SUMMARY_COLUMNS``.

    Standard errors use the sample standard deviation and are None for a
    single trial. ``measurements`` renders mean counts as ``"diag + offdiag"``.
    """
    groups = {}
    for rec in records:
        groups.setdefault((rec.dataset, rec.estimator, rec.rho), []).append(rec)
    rows = []
    for (dataset, estimator, rho), recs in sorted(groups.items()):
        ok = [r for r in recs if r.error is None]
        row = {"dataset": dataset, "estimator": estimator, "rho": rho,
               "n_trials": len(recs), "n_failed": len(recs) - len(ok)}
        for metric in ("frobenius", "mahalanobis"):
            m, se, med = _stats([getattr(r, metric) for r in ok])
            row[f"{metric}_mean"], row[f"{metric}_stderr"], row[f"{metric}_median"] = m, se, med
        row["n_diagonal_mean"] = _mean([r.n_diagonal for r in ok])
        row["n_offdiagonal_mean"] = _mean([r.n_offdiagonal for r in ok])
        if row["n_diagonal_mean"] is not None:
            row["measurements"] = f"{row['n_diagonal_mean']:g} + {row['n_offdiagonal_mean']:g}"
        else:
            row["measurements"] = None
        row["rounds_mean"] = _mean([r.rounds for r in ok])
        row["seconds_mean"] = _mean([r.seconds for r in ok])
        rows.append(row)
    return rows


def write_summary_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if row.get(k) is None else row[k] for k in SUMMARY_COLUMNS})
