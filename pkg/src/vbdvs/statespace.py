"""Kalman filter and RTS smoother for the TVP regression state-space model.

The measurement equation is ``y_t = x_t beta_t + eps_t`` with
``eps_t ~ N(0, sigma2_t)``; the state equation is
``beta_t = F_t beta_{t-1} + eta_t`` with diagonal ``F_t`` and diagonal
``W_t = Var(eta_t)``.  Only diagonals of ``F_t`` and ``W_t`` are stored.

Arrays are indexed ``[t]`` with ``t = 0..T-1`` corresponding to periods
``1..T``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import lapack

from .errors import InvalidArgumentError, NumericalFailureError

__all__ = [
    "RegressionData",
    "SystemSequences",
    "StateMoments",
    "combine_priors",
    "kalman_filter",
    "rts_smoother",
    "state_sq_error",
    "measurement_sq_error",
]

JITTER_SCALE = 1e-8


@dataclass(frozen=True)
class RegressionData:
    """Observed dependent variable ``y`` (T,) and predictors ``X`` (T, p)."""

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise InvalidArgumentError(
                f"X must be (T, p) with T={y.shape[0]}, got shape {X.shape}"
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise InvalidArgumentError("y and X must not contain missing or non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SystemSequences:
    """Per-period transition diagonal, state variance diagonal and measurement variance."""

    f_tilde: np.ndarray  # (T, p)
    w_tilde: np.ndarray  # (T, p)
    sigma2: np.ndarray  # (T,)

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.f_tilde, dtype=float))
        w = np.atleast_2d(np.asarray(self.w_tilde, dtype=float))
        s = np.asarray(self.sigma2, dtype=float).reshape(-1)
        if f.shape != w.shape or f.shape[0] != s.shape[0]:
            raise InvalidArgumentError(
                f"inconsistent system shapes: f {f.shape}, w {w.shape}, sigma2 {s.shape}"
            )
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise InvalidArgumentError("sigma2 must be finite and strictly positive")
        object.__setattr__(self, "f_tilde", f)
        object.__setattr__(self, "w_tilde", w)
        object.__setattr__(self, "sigma2", s)

    @classmethod
    def random_walk(cls, w: np.ndarray, sigma2) -> "SystemSequences":
        """Plain random-walk system: ``F = I`` and ``W = diag(w)``."""
        w = np.atleast_2d(np.asarray(w, dtype=float))
        sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (w.shape[0],))
        return cls(np.ones_like(w), w, sigma2.copy())


@dataclass(frozen=True)
class StateMoments:
    """Predicted, filtered and (optionally) smoothed moments of ``beta_t``.

    ``m0`` and ``P0`` are the initial-condition moments of ``beta_0``.
    """

    m0: np.ndarray
    P0: np.ndarray
    m_pred: np.ndarray
    P_pred: np.ndarray
    m_filt: np.ndarray
    P_filt: np.ndarray
    kalman_gain: np.ndarray
    m_smooth: Optional[np.ndarray] = None
    P_smooth: Optional[np.ndarray] = None

    @property
    def T(self) -> int:
        return self.m_filt.shape[0]

    @property
    def p(self) -> int:
        return self.m_filt.shape[1]


def _symmetrize(P):
    return 0.5 * (P + P.T)


def combine_priors(w_inv, v_inv):
    """Merge the random-walk prior and the spike-and-slab prior on ``beta_t``.

    Returns ``(f_tilde, w_tilde)`` with ``1/w_tilde = w_inv + v_inv`` and
    ``f_tilde = w_tilde * w_inv``.  A zero ``v_inv`` switches the second
    prior off and gives back the random walk ``f_tilde = 1``,
    ``w_tilde = 1/w_inv``.
    """
    w_inv = np.asarray(w_inv, dtype=float)
    v_inv = np.asarray(v_inv, dtype=float)
    if not (np.all(np.isfinite(w_inv)) and np.all(np.isfinite(v_inv))):
        raise InvalidArgumentError("combine_priors inputs must be finite")
    if np.any(w_inv <= 0):
        raise InvalidArgumentError("w_inv must be strictly positive")
    if np.any(v_inv < 0):
        raise InvalidArgumentError("v_inv must be nonnegative")
    w_tilde = 1.0 / (w_inv + v_inv)
    # exact 1 where the second prior is off, so the random walk is reproduced bitwise
    f_tilde = np.where(v_inv == 0, 1.0, w_tilde * w_inv)
    return f_tilde, w_tilde


def kalman_filter(data: RegressionData, sys: SystemSequences, m0, P0) -> StateMoments:
    """Forward Kalman pass over ``t = 1..T``.

    Parameters
    ----------
    data : RegressionData
    sys : SystemSequences
        Must cover all ``T`` periods.
    m0 : array_like, shape (p,)
    P0 : array_like, shape (p, p) or scalar
        A scalar is read as ``P0 * I``.

    Returns
    -------
    StateMoments
        With the smoothed fields left empty.
    """
    T, p = data.T, data.p
    if sys.f_tilde.shape != (T, p):
        raise InvalidArgumentError(
            f"system covers shape {sys.f_tilde.shape}, data needs {(T, p)}"
        )
    m0 = np.broadcast_to(np.asarray(m0, dtype=float), (p,)).copy()
    P0 = np.asarray(P0, dtype=float)
    P0 = P0 * np.eye(p) if P0.ndim == 0 else P0.copy()
    if P0.shape != (p, p):
        raise InvalidArgumentError(f"P0 must be ({p}, {p}), got {P0.shape}")

    m_pred = np.empty((T, p))
    P_pred = np.empty((T, p, p))
    m_filt = np.empty((T, p))
    P_filt = np.empty((T, p, p))
    gain = np.empty((T, p))

    m, P = m0, P0
    y, X = data.y, data.X
    for t in range(T):
        f = sys.f_tilde[t]
        mp = f * m
        Pp = f[:, None] * P * f[None, :]
        Pp[np.diag_indices(p)] += sys.w_tilde[t]
        Pp = _symmetrize(Pp)
        x = X[t]
        Px = Pp @ x
        s = x @ Px + sys.sigma2[t]
        if not s > 0:
            raise NumericalFailureError(
                f"nonpositive innovation variance {s!r} at t={t + 1}", stage="kalman_filter"
            )
        K = Px / s
        m = mp + K * (y[t] - x @ mp)
        P = _symmetrize(Pp - np.outer(K, Px))
        m_pred[t], P_pred[t], m_filt[t], P_filt[t], gain[t] = mp, Pp, m, P, K
    return StateMoments(m0, P0, m_pred, P_pred, m_filt, P_filt, gain)


def _cho_solve(A, B):
    c, info = lapack.dpotrf(A, lower=0, clean=0, overwrite_a=0)
    if info != 0:
        return None
    x, info = lapack.dpotrs(c, B, lower=0, overwrite_b=0)
    return x if info == 0 else None


def _solve_spd(A, B, t):
    # A^{-1} B for symmetric positive-definite A, one jitter retry
    x = _cho_solve(A, B)
    if x is not None:
        return x
    jitter = JITTER_SCALE * max(float(np.mean(np.diag(A))), np.finfo(float).tiny)
    x = _cho_solve(A + jitter * np.eye(A.shape[0]), B)
    if x is None:
        raise NumericalFailureError(
            f"predicted covariance P_(t+1|t) not positive definite at t={t + 1}",
            stage="rts_smoother",
        )
    return x


def rts_smoother(filtered: StateMoments, sys: SystemSequences) -> StateMoments:
    """Backward Rauch-Tung-Striebel pass; returns a copy with smoothed moments.

    The smoother gain at ``t`` uses the transition into ``t+1``:
    ``C_t = P_{t|t} F_{t+1}' P_{t+1|t}^{-1}``.
    """
    T, p = filtered.T, filtered.p
    m_s = np.empty((T, p))
    P_s = np.empty((T, p, p))
    m_s[-1] = filtered.m_filt[-1]
    P_s[-1] = filtered.P_filt[-1]
    for t in range(T - 2, -1, -1):
        Pf = filtered.P_filt[t]
        # C' = P_pred^{-1} (F P_filt)
        Ct = _solve_spd(filtered.P_pred[t + 1], sys.f_tilde[t + 1][:, None] * Pf, t)
        C = Ct.T
        m_s[t] = filtered.m_filt[t] + C @ (m_s[t + 1] - filtered.m_pred[t + 1])
        P_s[t] = _symmetrize(Pf + C @ (P_s[t + 1] - filtered.P_pred[t + 1]) @ Ct)
    return replace(filtered, m_smooth=m_s, P_smooth=P_s)


def _second_moment_diags(smooth: StateMoments):
    diag_P = np.diagonal(smooth.P_smooth, axis1=1, axis2=2)
    return diag_P + smooth.m_smooth ** 2


def state_sq_error(smooth: StateMoments, sys: SystemSequences) -> np.ndarray:
    """Diagonal of the expected squared error in the state equation, (T, p).

    ``D_t = P_{t|T} + m m' + (P_{t-1|T} + m_{t-1} m_{t-1}')(I - 2F_t)'``;
    with diagonal ``F_t`` only the diagonal of the second term survives as
    ``E[beta_{j,t-1}^2] (1 - 2 f_{j,t})``.  Period 1 uses ``(m0, P0)``.
    """
    if smooth.m_smooth is None:
        raise InvalidArgumentError("smoothed moments are required")
    cur = _second_moment_diags(smooth)
    prev = np.empty_like(cur)
    prev[0] = np.diag(smooth.P0) + smooth.m0 ** 2
    prev[1:] = cur[:-1]
    return cur + prev * (1.0 - 2.0 * sys.f_tilde)


def measurement_sq_error(data: RegressionData, smooth: StateMoments) -> np.ndarray:
    """``R_t = (y_t - x_t m_{t|T})^2 + x_t P_{t|T} x_t'`` for each period."""
    if smooth.m_smooth is None:
        raise InvalidArgumentError("smoothed moments are required")
    X = data.X
    resid = data.y - np.einsum("tj,tj->t", X, smooth.m_smooth)
    quad = np.einsum("ti,tij,tj->t", X, smooth.P_smooth, X)
    return resid ** 2 + np.maximum(quad, 0.0)
