"""Variational updates for the dynamic spike-and-slab prior.

All update functions are elementwise and accept scalars or arrays that
broadcast against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InvalidArgumentError

__all__ = [
    "DvsHyper",
    "DvsState",
    "update_tau2_inv",
    "update_gamma",
    "update_v",
    "update_pi0",
    "update_w_inv",
    "check_dvs_state",
]


@dataclass(frozen=True)
class DvsHyper:
    c_spike: float = 1e-4
    g0: float = 1.0
    h0: float = 12.0
    c0: float = 100.0
    d0: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.c_spike < 1.0:
            raise InvalidArgumentError(f"c_spike must lie in (0, 1), got {self.c_spike}")
        for name in ("g0", "h0", "c0", "d0"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidArgumentError(f"{name} must be finite and positive, got {value}")


@dataclass(frozen=True)
class DvsState:
    """Posterior means of the selection block, each (T, p) except ``pi0`` (T,)."""

    tau2_inv: np.ndarray
    pip: np.ndarray
    v: np.ndarray
    pi0: np.ndarray
    w_inv: np.ndarray


def update_tau2_inv(m_smooth, hyper: DvsHyper):
    """Posterior mean of ``1/tau^2``: ``(g0 + 1/2) / (h0 + m^2/2)``."""
    m = np.asarray(m_smooth, dtype=float)
    return (hyper.g0 + 0.5) / (hyper.h0 + 0.5 * m * m)


def update_gamma(m_smooth, tau2, pi0_prev, c_spike):
    """Posterior inclusion probability of the slab component.

    The odds are formed from the log-ratio of ``N(m | 0, tau2)`` to
    ``N(m | 0, c_spike * tau2)`` so that a vanishing spike density does not
    produce ``0/0``.
    """
    m = np.asarray(m_smooth, dtype=float)
    tau2 = np.asarray(tau2, dtype=float)
    pi = np.asarray(pi0_prev, dtype=float)
    # log N(m|0,tau2) - log N(m|0,c tau2)
    log_ratio = 0.5 * np.log(c_spike) + 0.5 * m * m / tau2 * (1.0 / c_spike - 1.0)
    with np.errstate(divide="ignore"):
        log_prior_odds = np.log(pi) - np.log1p(-pi)
    logit = log_ratio + log_prior_odds
    # pi in {0, 1} gives +-inf, which expit maps to exactly 1 or 0
    out = expit(logit)
    return out if out.ndim else float(out)


def update_v(gamma, tau2, c_spike):
    """``v = (1 - gamma)^2 c tau2 + gamma tau2``."""
    g = np.asarray(gamma, dtype=float)
    tau2 = np.asarray(tau2, dtype=float)
    out = (1.0 - g) ** 2 * c_spike * tau2 + g * tau2
    return out if out.ndim else float(out)


def update_pi0(pip_row):
    """Posterior mean of the period-level inclusion probability.

    ``pip_row`` may be a single p-vector or a (T, p) matrix; the sum runs
    over the last axis.
    """
    pip = np.asarray(pip_row, dtype=float)
    p = pip.shape[-1]
    out = (1.0 + pip.sum(axis=-1)) / (2.0 + p)
    return out if out.ndim else float(out)


def update_w_inv(d_jj, hyper: DvsHyper):
    """Posterior mean of ``1/w``: ``(c0 + 1/2) / (d0 + D/2)`` with ``D`` clamped at 0."""
    d = np.maximum(np.asarray(d_jj, dtype=float), 0.0)
    out = (hyper.c0 + 0.5) / (hyper.d0 + 0.5 * d)
    return out if out.ndim else float(out)


def check_dvs_state(state: DvsState, tol: float = 0.0) -> None:
    """Raise ``AssertionError`` if any documented bound of ``state`` is violated."""
    p = state.pip.shape[1]
    if not np.all((state.pip >= 0) & (state.pip <= 1)):
        raise AssertionError("pip outside [0, 1]")
    lo, hi = 1.0 / (2 + p), (1.0 + p) / (2 + p)
    if not np.all((state.pi0 >= lo - tol) & (state.pi0 <= hi + tol)):
        raise AssertionError("pi0 outside bounds")
    if not np.all(state.tau2_inv > 0):
        raise AssertionError("tau2_inv not positive")
    if not np.all(state.v > 0):
        raise AssertionError("v not positive")
    if not np.all(state.w_inv > 0):
        raise AssertionError("w_inv not positive")
