"""Synthetic sparse TVP regressions and the coefficient-recovery Monte Carlo.

Data-generating process, for ``t = 1..T``::

    y_t        = sum_j beta_{j,t} x_{j,t} + sigma_t eps_t
    x_{j,t}    ~ N(0, 1)
    beta_{j,t} = s_{j,t} theta_{j,t}
    theta_{j,t} = theta_bar_j + rho (theta_{j,t-1} - theta_bar_j) + state_scale eta_{j,t}
    log sigma_t^2 = sv_mean + sv_rho (log sigma_{t-1}^2 - sv_mean) + sv_scale zeta_t

with ``theta_{j,0} = theta_bar_j`` and ``log sigma_0^2 = sv_mean``.

Seeds
-----
``simulate_dgp`` draws from ``numpy.random.default_rng(seed)`` in a fixed
order: ``x`` (T, p), then ``eta`` (T, p), then ``zeta`` (T,), then
``eps`` (T,).  Monte Carlo replication ``r`` (0-based) of a run with master
seed ``S`` uses the DGP seed::

    int(np.random.SeedSequence(S, spawn_key=(r,)).generate_state(1)[0])

so each replication's data depends only on ``(S, r)``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .estimator import PRESETS, FitOptions, PriorConfig, fit_vbdvs
from .statespace import RegressionData

__all__ = [
    "BENCHMARK_THETA",
    "DgpConfig",
    "DgpDraw",
    "default_schedule",
    "default_config",
    "simulate_dgp",
    "msd",
    "replication_seed",
    "ReplicationRecord",
    "MonteCarloSummary",
    "run_monte_carlo",
    "write_replications_csv",
    "write_summary_json",
    "simulate_forecast_panel",
]

logger = logging.getLogger(__name__)

BENCHMARK_THETA = (-1.7, 2.9, 1.4, -2.3)


def _round_half_even(x: float) -> int:
    return int(round(x))


def default_schedule(T: int, p: int) -> np.ndarray:
    """Benchmark activation matrix ``s`` of shape (T, p).

    Predictor 1 is active for periods ``1..round(T/3)-1``, predictor 2
    always, predictor 3 for ``1..round(T/2)-1`` and predictor 4 from
    ``round(T/2)`` onwards.  Everything else is never active.  ``round`` is
    round-half-to-even.
    """
    if T < 3 or p < 4:
        raise InvalidArgumentError(f"benchmark schedule needs T >= 3 and p >= 4, got T={T}, p={p}")
    s = np.zeros((T, p), dtype=np.int8)
    third = _round_half_even(T / 3)
    half = _round_half_even(T / 2)
    # period t (1-based) sits at row t-1
    s[: third - 1, 0] = 1
    s[:, 1] = 1
    s[: half - 1, 2] = 1
    s[half - 1:, 3] = 1
    return s


@dataclass(frozen=True)
class DgpConfig:
    theta_bar: np.ndarray
    rho: float
    state_scale: float
    sv_mean: float
    sv_rho: float
    sv_scale: float
    schedule: np.ndarray
    seed: int = 0

    def __post_init__(self):
        theta = np.asarray(self.theta_bar, dtype=float).reshape(-1)
        sched = np.asarray(self.schedule)
        if sched.ndim != 2 or sched.shape[1] != theta.shape[0]:
            raise InvalidArgumentError(
                f"schedule must be (T, {theta.shape[0]}), got {sched.shape}"
            )
        if not np.all((sched == 0) | (sched == 1)):
            raise InvalidArgumentError("schedule entries must be 0 or 1")
        if abs(self.rho) > 1 or abs(self.sv_rho) > 1:
            raise InvalidArgumentError("AR coefficients must satisfy |rho| <= 1")
        if self.state_scale < 0 or self.sv_scale < 0:
            raise InvalidArgumentError("innovation scales must be nonnegative")
        object.__setattr__(self, "theta_bar", theta)
        object.__setattr__(self, "schedule", sched.astype(np.int8))

    @property
    def T(self) -> int:
        return self.schedule.shape[0]

    @property
    def p(self) -> int:
        return self.schedule.shape[1]


@dataclass(frozen=True)
class DgpDraw:
    y: np.ndarray
    x: np.ndarray
    beta_true: np.ndarray
    sigma2_true: np.ndarray


def default_config(T: int, p: int, seed: int = 0) -> DgpConfig:
    """Benchmark design: four signals, ``rho = sv_rho = 0.99``, scales ``T**-0.5``."""
    if p < 4:
        raise InvalidArgumentError(f"benchmark design needs p >= 4, got p={p}")
    theta = np.zeros(p)
    theta[:4] = BENCHMARK_THETA
    scale = T ** -0.5
    return DgpConfig(theta_bar=theta, rho=0.99, state_scale=scale, sv_mean=0.1,
                     sv_rho=0.99, sv_scale=scale, schedule=default_schedule(T, p), seed=seed)


def simulate_dgp(config: DgpConfig) -> DgpDraw:
    T, p = config.T, config.p
    rng = np.random.default_rng(config.seed)
    x = rng.standard_normal((T, p))
    eta = rng.standard_normal((T, p))
    zeta = rng.standard_normal(T)
    eps = rng.standard_normal(T)

    theta = np.empty((T, p))
    prev = config.theta_bar.copy()
    log_s2 = np.empty(T)
    prev_ls = config.sv_mean
    for t in range(T):
        prev = config.theta_bar + config.rho * (prev - config.theta_bar) + config.state_scale * eta[t]
        prev_ls = config.sv_mean + config.sv_rho * (prev_ls - config.sv_mean) + config.sv_scale * zeta[t]
        theta[t] = prev
        log_s2[t] = prev_ls
    beta = np.where(config.schedule == 1, theta, 0.0)
    sigma2 = np.exp(log_s2)
    y = np.einsum("tj,tj->t", x, beta) + np.sqrt(sigma2) * eps
    return DgpDraw(y=y, x=x, beta_true=beta, sigma2_true=sigma2)


def msd(beta_true, beta_est) -> float:
    """Mean squared deviation over all periods and predictors."""
    a = np.asarray(beta_true, dtype=float)
    b = np.asarray(beta_est, dtype=float)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def replication_seed(master_seed: int, replication: int) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(replication),))
    return int(ss.generate_state(1)[0])


@dataclass
class ReplicationRecord:
    replication: int
    seed: int
    msd: float = math.nan
    wall_ms: float = math.nan
    converged: bool = False
    iterations: int = 0
    failed: bool = False
    error: str = ""


@dataclass
class MonteCarloSummary:
    T: int
    p: int
    replications: int
    master_seed: int
    records: List[ReplicationRecord]
    mean_msd: float
    median_msd: float
    sum_msd: float
    mean_wall_ms: float
    n_failed: int
    mean_pip: Optional[np.ndarray] = field(default=None, repr=False)
    mean_coef: Optional[np.ndarray] = field(default=None, repr=False)
    schedule: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "p": self.p,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "mean_msd": self.mean_msd,
            "median_msd": self.median_msd,
            "sum_msd": self.sum_msd,
            "mean_wall_ms": self.mean_wall_ms,
            "n_failed": self.n_failed,
            "n_converged": sum(r.converged for r in self.records if not r.failed),
        }


def _one_replication(args):
    T, p, r, master_seed, prior, opts = args
    seed = replication_seed(master_seed, r)
    draw = simulate_dgp(default_config(T, p, seed))
    record = ReplicationRecord(replication=r, seed=seed)
    start = time.perf_counter()
    try:
        fit = fit_vbdvs(RegressionData(draw.y, draw.x), prior, opts)
    except NumericalFailureError as exc:
        record.failed = True
        record.error = str(exc)
        record.wall_ms = 1000.0 * (time.perf_counter() - start)
        return record, None, None
    record.wall_ms = 1000.0 * (time.perf_counter() - start)
    record.msd = msd(draw.beta_true, fit.coefficients)
    record.converged = bool(fit.converged)
    record.iterations = int(fit.iterations_run)
    return record, fit.pip, fit.coefficients


def run_monte_carlo(T: int, p: int, replications: int = 100, prior: Optional[PriorConfig] = None,
                    seed: int = 0, opts: Optional[FitOptions] = None, n_jobs: int = 1,
                    timing: bool = True) -> MonteCarloSummary:
    """Simulate ``replications`` benchmark datasets and fit each one.

    ``opts`` defaults to ``FitOptions(scale_y=True)``.  Failed fits are kept
    in ``records`` with ``failed=True`` and excluded from the averages.
    With ``timing=False`` wall-clock times are reported as 0 so that
    repeated runs produce identical summaries.
    """
    if replications < 1:
        raise InvalidArgumentError("replications must be >= 1")
    prior = PRESETS["prior3"] if prior is None else prior
    opts = FitOptions(scale_y=True) if opts is None else opts
    jobs = [(T, p, r, seed, prior, opts) for r in range(replications)]
    if n_jobs > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_one_replication, jobs))
    else:
        results = [_one_replication(j) for j in jobs]

    records = [res[0] for res in results]
    ok = [res for res in results if not res[0].failed]
    if not timing:
        for rec in records:
            rec.wall_ms = 0.0
    msds = np.array([res[0].msd for res in ok])
    walls = np.array([res[0].wall_ms for res in ok])
    mean_pip = np.mean([res[1] for res in ok], axis=0) if ok else None
    mean_coef = np.mean([res[2] for res in ok], axis=0) if ok else None
    summary = MonteCarloSummary(
        T=T, p=p, replications=replications, master_seed=seed, records=records,
        mean_msd=float(msds.mean()) if ok else math.nan,
        median_msd=float(np.median(msds)) if ok else math.nan,
        sum_msd=float(msds.sum()) if ok else math.nan,
        mean_wall_ms=float(walls.mean()) if ok else math.nan,
        n_failed=len(records) - len(ok),
        mean_pip=mean_pip, mean_coef=mean_coef, schedule=default_schedule(T, p),
    )
    logger.info("monte carlo T=%d p=%d R=%d: mean msd %.4f, %d failed",
                T, p, replications, summary.mean_msd, summary.n_failed)
    return summary


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_replications_csv(summary: MonteCarloSummary, path) -> None:
    """One row per replication: replication, seed, msd, wall_ms, converged, iterations, failed."""
    cols = ["replication", "seed", "msd", "wall_ms", "converged", "iterations", "failed"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for rec in summary.records:
            row = asdict(rec)
            writer.writerow([_fmt(row[c]) for c in cols])


def _json_floats(obj):
    if isinstance(obj, dict):
        return {k: _json_floats(v) for k, v in obj.items()}
    if isinstance(obj, float):
        return float(format(obj, ".17g")) if math.isfinite(obj) else None
    return obj


def write_summary_json(summary: MonteCarloSummary, path) -> None:
    with open(path, "w") as fh:
        json.dump(_json_floats(summary.to_dict()), fh, indent=2, sort_keys=True)
        fh.write("\n")


def simulate_forecast_panel(T: int, p: int, seed: int = 0, config: Optional[DgpConfig] = None):
    """Benchmark DGP rearranged for one-step direct forecasting.

    Returns ``(y, X)`` of lengths ``T`` where row ``t`` of ``X`` holds the
    predictors that drive ``y[t + 1]``; the last row of ``X`` is drawn but
    has no target inside the sample.
    """
    config = default_config(T + 1, p, seed) if config is None else config
    if config.T != T + 1:
        raise InvalidArgumentError("config must cover T + 1 periods")
    draw = simulate_dgp(config)
    y = draw.y[:T]
    X = draw.x[1:T + 1]
    return y, X, draw
