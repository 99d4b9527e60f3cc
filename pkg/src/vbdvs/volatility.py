"""Stochastic volatility by variance discounting.

The precision ``phi_t = 1/sigma_t^2`` has a Gamma(a_t, b_t) posterior.  The
next period's prior discounts both parameters by ``delta``, which keeps the
mean and inflates the dispersion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError

__all__ = [
    "PrecisionPath",
    "filter_precision",
    "smooth_precision",
    "precision_to_variance",
    "fit_precision_path",
    "constant_precision_path",
]


@dataclass(frozen=True)
class PrecisionPath:
    """Filtered and smoothed precision path.

    ``a`` and ``b`` are ``None`` when the variance was held fixed.
    """

    a: Optional[np.ndarray]
    b: Optional[np.ndarray]
    phi_filt: np.ndarray
    phi_smooth: np.ndarray
    sigma2: np.ndarray
    delta: float
    a0: float
    b0: float


def _check_delta(delta):
    if not (0.0 < delta <= 1.0):
        raise InvalidArgumentError(f"delta must lie in (0, 1], got {delta}")


def filter_precision(r, a0, b0, delta):
    """Forward Gamma recursion ``a_t = delta a_{t-1} + 1/2``, ``b_t = delta b_{t-1} + R_t/2``.

    Returns
    -------
    a, b, phi_filt : ndarray
        ``phi_filt = a / b``.
    """
    _check_delta(delta)
    if not (a0 > 0 and b0 > 0):
        raise InvalidArgumentError("a0 and b0 must be positive")
    r = np.asarray(r, dtype=float).reshape(-1)
    if np.any(r < 0):
        raise InvalidArgumentError("squared errors must be nonnegative")
    T = r.shape[0]
    a = np.empty(T)
    b = np.empty(T)
    a_prev, b_prev = float(a0), float(b0)
    for t in range(T):
        a_prev = delta * a_prev + 0.5
        b_prev = delta * b_prev + 0.5 * r[t]
        a[t], b[t] = a_prev, b_prev
    return a, b, a / b


def smooth_precision(phi_filt, delta):
    """Backward exponential smoother ``phi~_t = (1-delta) phi^_t + delta phi~_{t+1}``."""
    _check_delta(delta)
    phi = np.asarray(phi_filt, dtype=float).reshape(-1)
    out = np.empty_like(phi)
    out[-1] = phi[-1]
    for t in range(phi.shape[0] - 2, -1, -1):
        out[t] = (1.0 - delta) * phi[t] + delta * out[t + 1]
    return out


def precision_to_variance(phi_smooth):
    phi = np.asarray(phi_smooth, dtype=float)
    if np.any(~(phi > 0)) or not np.all(np.isfinite(phi)):
        raise NumericalFailureError("precision path has nonpositive or non-finite entries",
                                    stage="volatility")
    return 1.0 / phi


def fit_precision_path(r, a0, b0, delta) -> PrecisionPath:
    """Run filter, smoother and inversion in one call."""
    a, b, phi_filt = filter_precision(r, a0, b0, delta)
    phi_smooth = smooth_precision(phi_filt, delta)
    return PrecisionPath(a, b, phi_filt, phi_smooth, precision_to_variance(phi_smooth),
                         float(delta), float(a0), float(b0))


def constant_precision_path(sigma2, T, delta=1.0, a0=np.nan, b0=np.nan) -> PrecisionPath:
    """Path for a known, time-invariant measurement variance."""
    if not sigma2 > 0:
        raise InvalidArgumentError(f"fixed variance must be positive, got {sigma2}")
    phi = np.full(T, 1.0 / sigma2)
    return PrecisionPath(None, None, phi, phi.copy(), np.full(T, float(sigma2)),
                         float(delta), float(a0), float(b0))
