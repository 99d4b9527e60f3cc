"""Data preparation and direct out-of-sample forecasting.

The forecasting regression for horizon ``h`` pairs the target ``h``
periods after origin ``t`` with an intercept, ``lags`` own lags
``y_t, y_{t-1}, ...`` and the predictors observed at ``t``.  Models are
refit on an expanding window and scored by mean squared forecast error and
average log predictive likelihood relative to a direct AR benchmark fitted
by least squares.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .estimator import PRESETS, FitOptions, FitResult, PriorConfig, fit_vbdvs
from .statespace import RegressionData

__all__ = [
    "TRANSFORM_ORDER",
    "apply_transform",
    "remove_outliers",
    "standardize",
    "unstandardize",
    "PCAResult",
    "pca",
    "principal_components",
    "build_target",
    "ForecastTask",
    "DirectDataset",
    "build_direct_dataset",
    "ForecastRecord",
    "EvalSummary",
    "log_normal_density",
    "ols_fit",
    "ols_direct_forecast",
    "forecast_vbdvs",
    "evaluate_oos",
    "ModelSpec",
    "MODEL_SPECS",
    "ForecastPanel",
    "WindowResult",
    "run_expanding_window",
    "read_panel",
    "read_schema",
    "transform_panel",
]

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
OLS_VARIANCE_FLOOR = 1e-12

# rows lost to differencing for each transform code
TRANSFORM_ORDER = {1: 0, 2: 1, 3: 2, 4: 0, 5: 1, 6: 2, 7: 2}


def _log_checked(x):
    bad = np.flatnonzero(~(x > 0))
    if bad.size:
        raise InvalidArgumentError(
            f"log transform needs strictly positive values; index {int(bad[0])} is {x[bad[0]]!r}"
        )
    return np.log(x)


def apply_transform(series, code: int) -> np.ndarray:
    """Apply a stationarity transform code; leading undefined entries are dropped.

    ====  =======================================
    code  transform
    ====  =======================================
    1     level
    2     first difference
    3     second difference
    4     log
    5     first difference of log
    6     second difference of log
    7     first difference of percent change
    ====  =======================================
    """
    x = np.asarray(series, dtype=float).reshape(-1)
    code = int(code)
    if code not in TRANSFORM_ORDER:
        raise InvalidArgumentError(f"unknown transform code {code}")
    if x.shape[0] <= TRANSFORM_ORDER[code]:
        raise InvalidArgumentError(f"series too short for transform code {code}")
    if code == 1:
        return x.copy()
    if code == 2:
        return np.diff(x)
    if code == 3:
        return np.diff(x, n=2)
    if code == 4:
        return _log_checked(x)
    if code == 5:
        return np.diff(_log_checked(x))
    if code == 6:
        return np.diff(_log_checked(x), n=2)
    # code 7
    pct = x[1:] / x[:-1] - 1.0
    return np.diff(pct)


def remove_outliers(series, kappa: float = 4.5) -> np.ndarray:
    """Replace outliers by the median of the preceding five observations.

    An observation is an outlier when ``|y_t - median(y)| / iqr(y) > kappa``.
    Median and interquartile range are computed once on the input series.
    A zero interquartile range suspends the rule; an outlier at the first
    position has no predecessors and is left alone.
    """
    y = np.asarray(series, dtype=float).reshape(-1)
    out = y.copy()
    finite = y[np.isfinite(y)]
    if finite.size == 0:
        return out
    med = np.median(finite)
    q75, q25 = np.percentile(finite, [75, 25])
    iqr = q75 - q25
    if not iqr > 0:
        return out
    with np.errstate(invalid="ignore"):
        flagged = np.flatnonzero(np.abs(y - med) / iqr > kappa)
    for t in flagged:
        if t == 0:
            continue
        window = y[max(0, t - 5):t]
        window = window[np.isfinite(window)]
        if window.size:
            out[t] = np.median(window)
    return out


def standardize(X):
    """Center each column and scale it to unit sample standard deviation (ddof=1).

    Returns ``(Z, mean, std)``.
    """
    X = np.asarray(X, dtype=float)
    squeeze = X.ndim == 1
    X2 = X[:, None] if squeeze else X
    mean = X2.mean(axis=0)
    std = X2.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(std > 0))
    if bad.size:
        raise InvalidArgumentError(f"column {int(bad[0])} has zero variance")
    Z = (X2 - mean) / std
    return (Z[:, 0] if squeeze else Z), mean, std


def unstandardize(Z, mean, std):
    return np.asarray(Z) * std + mean


@dataclass(frozen=True)
class PCAResult:
    factors: np.ndarray  # (T, k)
    loadings: np.ndarray  # (p, k)
    explained_variance: np.ndarray  # (k,) eigenvalues of the sample covariance
    explained_ratio: np.ndarray  # (k,)


def pca(X, k: int) -> PCAResult:
    """Principal components of a (column-centred) matrix via SVD.

    Factors are ``X @ V_k = U_k S_k``, so the sample variance of factor ``i``
    is the ``i``-th eigenvalue of ``X'X / (T-1)``.  Each loading vector is
    signed so its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=float)
    T, p = X.shape
    if not 1 <= k <= min(T, p):
        raise InvalidArgumentError(f"k must be in [1, {min(T, p)}], got {k}")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    V = Vt[:k].T
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(k)])
    signs[signs == 0] = 1.0
    V = V * signs
    factors = U[:, :k] * (s[:k] * signs)
    eig = s ** 2 / (T - 1)
    total = eig.sum()
    ratio = eig[:k] / total if total > 0 else np.zeros(k)
    return PCAResult(factors=factors, loadings=V, explained_variance=eig[:k], explained_ratio=ratio)


def principal_components(X, k: int) -> np.ndarray:
    """First ``k`` principal-component factors of a standardized matrix, (T, k)."""
    return pca(X, k).factors


def build_target(price_series, h: int) -> np.ndarray:
    """Annualized average log growth over ``h`` quarters, ``(400/h) ln(P_{t+h}/P_t)``.

    The result has ``T - h`` entries; entry ``t`` belongs to origin ``t``.
    """
    P = np.asarray(price_series, dtype=float).reshape(-1)
    if h < 1:
        raise InvalidArgumentError("h must be >= 1")
    logp = _log_checked(P)
    return (400.0 / h) * (logp[h:] - logp[:-h])


@dataclass(frozen=True)
class ForecastTask:
    """Direct forecasting setup.

    With ``target_transform`` the target at origin ``t`` is the average of
    ``y_{t+1}, ..., y_{t+h}``.  When ``y`` is ``400 ln(P_t / P_{t-1})``
    this equals ``build_target(P, h)``.  Otherwise the target is
    ``y_{t+h}``.
    """

    h: int = 1
    lags: int = 2
    window: float = 0.5
    target_transform: bool = False

    def __post_init__(self):
        if int(self.h) != self.h or self.h < 1:
            raise InvalidArgumentError("h must be a positive integer")
        if int(self.lags) != self.lags or self.lags < 0:
            raise InvalidArgumentError("lags must be a nonnegative integer")
        if not 0.0 < self.window < 1.0:
            raise InvalidArgumentError("window must lie in (0, 1)")


def _targets(y, task: ForecastTask) -> np.ndarray:
    """Target for every origin ``t``; NaN where it falls outside the sample."""
    T = y.shape[0]
    out = np.full(T, np.nan)
    h = task.h
    if task.target_transform:
        c = np.concatenate([[0.0], np.cumsum(y)])
        # mean of y[t+1 .. t+h]
        out[: T - h] = (c[h + 1:] - c[1:T - h + 1]) / h
    else:
        out[: T - h] = y[h:]
    return out


def _design_rows(y, X, origins, lags):
    cols = [np.ones(len(origins))]
    for lag in range(lags):
        cols.append(y[origins - lag])
    Z = np.column_stack(cols)
    if X is not None and X.shape[1]:
        Z = np.hstack([Z, X[origins]])
    return Z


@dataclass(frozen=True)
class DirectDataset:
    data: RegressionData
    origins: np.ndarray  # origin index t of each row (0-based)

    @property
    def n_rows(self) -> int:
        return self.data.T


def build_direct_dataset(y, X, task: ForecastTask) -> DirectDataset:
    """Align targets with time-``t`` regressors.

    Row for origin ``t`` holds target ``y_{t+h}`` and regressors
    ``(1, y_t, ..., y_{t-lags+1}, X_t)``.  There are
    ``T - h - max(lags - 1, 0)`` rows.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    T = y.shape[0]
    X = None if X is None else np.asarray(X, dtype=float).reshape(T, -1)
    first = max(task.lags - 1, 0)
    last = T - 1 - task.h
    if last < first:
        raise InvalidArgumentError(
            f"series of length {T} too short for h={task.h}, lags={task.lags}"
        )
    origins = np.arange(first, last + 1)
    target = _targets(y, task)[origins]
    return DirectDataset(RegressionData(target, _design_rows(y, X, origins, task.lags)), origins)


@dataclass(frozen=True)
class ForecastRecord:
    origin: int
    point: float
    variance: float
    realized: float = math.nan
    log_pred_lik: float = math.nan

    def __post_init__(self):
        if not self.variance > 0:
            raise NumericalFailureError(f"nonpositive predictive variance {self.variance!r}",
                                        stage="forecast")

    def with_realized(self, realized: float) -> "ForecastRecord":
        return replace(self, realized=float(realized),
                       log_pred_lik=log_normal_density(realized, self.point, self.variance))


@dataclass(frozen=True)
class EvalSummary:
    msfe: float
    alpl: float
    rel_msfe: float
    rel_alpl: float
    benchmark_msfe: float
    benchmark_alpl: float
    n: int


def log_normal_density(x, mean, var) -> float:
    return float(-0.5 * (LOG_2PI + math.log(var) + (x - mean) ** 2 / var))


def _record(origin, point, variance, realized):
    rec = ForecastRecord(int(origin), float(point), float(variance))
    if realized is not None and np.isfinite(realized):
        rec = rec.with_realized(realized)
    return rec


def ols_fit(data: RegressionData):
    """Least-squares coefficients and residual variance ``RSS / (n - k)``."""
    Z, y = data.X, data.y
    n, k = Z.shape
    if n <= k:
        raise InvalidArgumentError(f"need more than {k} rows for OLS, got {n}")
    coef, _, rank, sv = np.linalg.lstsq(Z, y, rcond=None)
    if rank < k:
        raise NumericalFailureError(f"rank-deficient design (rank {rank} < {k})", stage="ols")
    resid = y - Z @ coef
    return coef, float(resid @ resid) / (n - k)


def ols_direct_forecast(data: RegressionData, x_origin, realized=None, origin: int = -1) -> ForecastRecord:
    """Gaussian predictive density from a least-squares direct regression.

    The variance is the residual variance, floored at ``1e-12`` so that an
    exact fit still yields a finite log density.
    """
    coef, s2 = ols_fit(data)
    x = np.asarray(x_origin, dtype=float).reshape(-1)
    return _record(origin, x @ coef, max(s2, OLS_VARIANCE_FLOOR), realized)


def forecast_vbdvs(fit: FitResult, x_origin, realized=None, origin: int = -1) -> ForecastRecord:
    """Predictive mean ``x m_{T|T}`` and variance ``x P_{T|T} x' + sigma2_T``."""
    x = np.asarray(x_origin, dtype=float).reshape(-1)
    m = fit.states.m_smooth[-1]
    P = fit.states.P_smooth[-1]
    var = float(x @ P @ x) + float(fit.vol.sigma2[-1])
    if not var > 0:
        raise NumericalFailureError(f"nonpositive predictive variance {var!r}", stage="forecast")
    return _record(origin, x @ m, var, realized)


def evaluate_oos(records_model: Sequence[ForecastRecord],
                 records_benchmark: Sequence[ForecastRecord]) -> EvalSummary:
    if len(records_model) != len(records_benchmark) or not records_model:
        raise InvalidArgumentError("record lists must be non-empty and of equal length")
    o_m = [r.origin for r in records_model]
    o_b = [r.origin for r in records_benchmark]
    if o_m != o_b:
        raise InvalidArgumentError("model and benchmark records are not aligned by origin")

    def stats(recs):
        err = np.array([r.realized - r.point for r in recs])
        lpl = np.array([r.log_pred_lik for r in recs])
        if not (np.all(np.isfinite(err)) and np.all(np.isfinite(lpl))):
            raise InvalidArgumentError("records must carry realized values")
        return float(np.mean(err ** 2)), float(np.mean(lpl))

    msfe, alpl = stats(records_model)
    b_msfe, b_alpl = stats(records_benchmark)
    rel = msfe / b_msfe if b_msfe > 0 else (1.0 if msfe == b_msfe else math.inf)
    return EvalSummary(msfe=msfe, alpl=alpl, rel_msfe=rel, rel_alpl=alpl - b_alpl,
                       benchmark_msfe=b_msfe, benchmark_alpl=b_alpl, n=len(records_model))


@dataclass(frozen=True)
class ModelSpec:
    """Forecasting model.

    ``kind`` is ``"ar"`` (least squares on intercept and lags only) or
    ``"vbdvs"``.  ``n_factors`` selects the exogenous block: ``None`` uses all
    predictors, ``0`` none, a positive integer that many principal
    components of the factor-eligible predictors.  ``h0`` overrides the
    prior's ``h0``.  ``refit_every`` > 1 reuses the last fit for the next
    origins, only updating the regressor row.
    """

    name: str
    kind: str = "vbdvs"
    n_factors: Optional[int] = None
    h0: Optional[float] = None
    refit_every: int = 1
    max_iter: int = 100
    tol: float = 1e-4
    scale_y: bool = True

    def __post_init__(self):
        if self.kind not in ("ar", "vbdvs"):
            raise InvalidArgumentError(f"unknown model kind {self.kind!r}")
        if self.refit_every < 1:
            raise InvalidArgumentError("refit_every must be >= 1")

    def prior_for(self, prior: Optional[PriorConfig]) -> PriorConfig:
        prior = PRESETS["prior3"] if prior is None else prior
        return replace(prior, h0=self.h0) if self.h0 is not None else prior


MODEL_SPECS: Dict[str, ModelSpec] = {
    "AR": ModelSpec("AR", kind="ar", n_factors=0),
    "VBDVS/FAC5": ModelSpec("VBDVS/FAC5", n_factors=5, h0=1.0),
    "VBDVS/FAC60": ModelSpec("VBDVS/FAC60", n_factors=60, h0=12.0),
    "VBDVS/X": ModelSpec("VBDVS/X", n_factors=None, h0=100.0),
}


@dataclass(frozen=True)
class ForecastPanel:
    """Transformed target ``y`` (T,), predictors ``X`` (T, k) and factor-eligibility mask."""

    y: np.ndarray
    X: np.ndarray
    factor_mask: Optional[np.ndarray] = None
    names: Optional[Sequence[str]] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float).reshape(y.shape[0], -1)
        mask = (np.ones(X.shape[1], dtype=bool) if self.factor_mask is None
                else np.asarray(self.factor_mask, dtype=bool).reshape(-1))
        if mask.shape[0] != X.shape[1]:
            raise InvalidArgumentError("factor mask length must match the number of predictors")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "factor_mask", mask)

    @property
    def T(self) -> int:
        return self.y.shape[0]


@dataclass
class WindowResult:
    model: str
    h: int
    records: List[ForecastRecord]
    failed_origins: List[int] = field(default_factory=list)


def _exogenous(panel: ForecastPanel, spec: ModelSpec, t: int):
    """Predictor block using information up to and including row ``t``."""
    if spec.kind == "ar" or spec.n_factors == 0:
        return None
    X = panel.X[: t + 1]
    if spec.n_factors is None:
        return X
    Z, _, _ = standardize(X[:, panel.factor_mask])
    k = min(spec.n_factors, Z.shape[0], Z.shape[1])
    return principal_components(Z, k)


def first_origin(T: int, task: ForecastTask) -> int:
    """Index of the first forecast origin: the estimation sample is ``ceil(window * T)`` rows."""
    return int(math.ceil(task.window * T)) - 1


def run_expanding_window(panel: ForecastPanel, task: ForecastTask, spec: ModelSpec,
                         prior: Optional[PriorConfig] = None) -> WindowResult:
    """Refit on an expanding window and forecast ``h`` steps ahead from every origin.

    The first origin leaves ``ceil(window * T)`` observations in the
    estimation sample; the last origin is ``T - 1 - h`` so that every
    forecast has a realized value.  Rows used for estimation at origin
    ``t`` are those whose target is observed by ``t``.
    """
    T = panel.T
    targets = _targets(panel.y, task)
    start = first_origin(T, task)
    stop = T - 1 - task.h
    if stop < start:
        raise InvalidArgumentError(f"panel of length {T} too short for the initial window")
    prior = spec.prior_for(prior)
    opts = FitOptions(max_iter=spec.max_iter, tol=spec.tol, scale_y=spec.scale_y)
    first_row = max(task.lags - 1, 0)

    result = WindowResult(spec.name, task.h, [])
    fit = None
    last_fit_origin = None
    for i, t in enumerate(range(start, stop + 1)):
        exog = _exogenous(panel, spec, t)
        rows = np.arange(first_row, t - task.h + 1)
        if rows.size == 0:
            result.failed_origins.append(t)
            continue
        yy = panel.y[: t + 1]
        x_origin = _design_rows(yy, exog, np.array([t]), task.lags)[0]
        try:
            if spec.kind == "ar":
                Z = _design_rows(yy, exog, rows, task.lags)
                rec = ols_direct_forecast(RegressionData(targets[rows], Z), x_origin,
                                          targets[t], origin=t)
            else:
                if fit is None or (t - last_fit_origin) >= spec.refit_every:
                    Z = _design_rows(yy, exog, rows, task.lags)
                    fit = fit_vbdvs(RegressionData(targets[rows], Z), prior, opts)
                    last_fit_origin = t
                rec = forecast_vbdvs(fit, x_origin, targets[t], origin=t)
        except (NumericalFailureError, InvalidArgumentError) as exc:
            logger.warning("%s h=%d origin %d failed: %s", spec.name, task.h, t, exc)
            result.failed_origins.append(t)
            continue
        result.records.append(rec)
    return result


# --- file interfaces -------------------------------------------------------

def read_panel(path):
    """Read a CSV panel: first column dates, remaining columns numeric.

    Empty cells become NaN.  Returns ``(dates, names, values)``.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidArgumentError(f"{path}: empty file") from None
        dates, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InvalidArgumentError(f"{path}:{lineno}: expected {len(header)} fields")
            dates.append(row[0])
            try:
                rows.append([float(v) if v.strip() else math.nan for v in row[1:]])
            except ValueError as exc:
                raise InvalidArgumentError(f"{path}:{lineno}: {exc}") from None
    return dates, list(header[1:]), np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)


def read_schema(path):
    """Read the sidecar schema: columns ``name, tcode, factor`` (factor is 0/1).

    Returns ``{name: (tcode, in_factors)}``.
    """
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"name", "tcode", "factor"} - set(reader.fieldnames or [])
        if missing:
            raise InvalidArgumentError(f"{path}: schema lacks columns {sorted(missing)}")
        for row in reader:
            code = int(row["tcode"])
            if code not in TRANSFORM_ORDER:
                raise InvalidArgumentError(f"{path}: unknown transform code {code} for {row['name']}")
            out[row["name"]] = (code, bool(int(row["factor"])))
    return out


def transform_panel(names, values, schema, outlier_kappa: Optional[float] = 4.5):
    """Transform each column by its code, clean outliers and trim to a common sample.

    Each column is transformed on its own and padded with leading NaNs.  Rows
    with any missing value at the start are then dropped.  Returns
    ``(transformed, first_row)``, where ``first_row`` indexes the original rows.
    """
    T = values.shape[0]
    out = np.full_like(values, np.nan)
    for j, name in enumerate(names):
        if name not in schema:
            raise InvalidArgumentError(f"column {name!r} missing from schema")
        code, _ = schema[name]
        col = apply_transform(values[:, j], code)
        if outlier_kappa is not None:
            col = remove_outliers(col, outlier_kappa)
        out[T - col.shape[0]:, j] = col
    complete = np.all(np.isfinite(out), axis=1)
    if not complete.any():
        raise InvalidArgumentError("no complete rows after transformation")
    first = int(np.argmax(complete))
    if not complete[first:].all():
        bad = first + int(np.argmin(complete[first:]))
        raise InvalidArgumentError(f"missing values inside the sample at row {bad}")
    return out[first:], first
