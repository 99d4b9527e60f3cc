"""Variational Bayes estimation of TVP regressions.

``fit_vbdvs`` runs the full estimator: time-varying coefficients with a
dynamic spike-and-slab prior and discounted stochastic volatility.
``fit_simple_tvp`` is the reduced estimator with a known, constant
measurement variance and no selection prior.

Each outer iteration

1. merges the random-walk and spike-and-slab priors into one state equation,
2. runs the Kalman filter and RTS smoother,
3. forms the expected squared errors of both equations,
4. updates ``1/tau^2``, ``gamma``, ``v`` and ``1/w`` per (j, t), then ``pi0`` per t,
5. refits the precision path.

Iteration stops once the largest absolute change in the smoothed
coefficient means drops below ``tol``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from . import dvs_prior as dvs
from .errors import InvalidArgumentError, NumericalFailureError
from .statespace import (
    RegressionData,
    StateMoments,
    SystemSequences,
    combine_priors,
    kalman_filter,
    measurement_sq_error,
    rts_smoother,
    state_sq_error,
)
from .volatility import PrecisionPath, constant_precision_path, fit_precision_path

__all__ = [
    "PriorConfig",
    "FitOptions",
    "FitResult",
    "PRESETS",
    "initialize_state",
    "fit_vbdvs",
    "fit_simple_tvp",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PriorConfig:
    """Fixed hyperparameters of the estimator.

    Defaults are the ``prior3`` preset.  ``m0`` may be a scalar, which is
    broadcast to every coefficient; ``P_0 = p0_scale * I``.
    """

    m0: object = 0.0
    p0_scale: float = 4.0
    a0: float = 0.01
    b0: float = 0.01
    c0: float = 100.0
    d0: float = 1.0
    g0: float = 1.0
    h0: float = 12.0
    c_spike: float = 1e-4
    delta: float = 0.8

    def __post_init__(self):
        if not self.p0_scale > 0:
            raise InvalidArgumentError("p0_scale must be positive")
        if not (self.a0 > 0 and self.b0 > 0):
            raise InvalidArgumentError("a0 and b0 must be positive")
        if not 0.0 < self.delta <= 1.0:
            raise InvalidArgumentError("delta must lie in (0, 1]")
        self.hyper  # validates c_spike, g0, h0, c0, d0

    @property
    def hyper(self) -> dvs.DvsHyper:
        return dvs.DvsHyper(c_spike=self.c_spike, g0=self.g0, h0=self.h0,
                            c0=self.c0, d0=self.d0)

    @classmethod
    def preset(cls, name: str, **overrides) -> "PriorConfig":
        try:
            base = PRESETS[name]
        except KeyError:
            raise InvalidArgumentError(
                f"unknown prior preset {name!r}; choose from {sorted(PRESETS)}"
            ) from None
        return replace(base, **overrides) if overrides else base

    def m0_vector(self, p: int) -> np.ndarray:
        m0 = np.asarray(self.m0, dtype=float)
        if m0.ndim and m0.shape != (p,):
            raise InvalidArgumentError(f"m0 must be scalar or length {p}")
        return np.broadcast_to(m0, (p,)).copy()

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = np.asarray(value).tolist() if f.name == "m0" else float(value)
        return out


PRESETS = {
    "prior1": PriorConfig(g0=0.01, h0=0.01, c0=100.0, d0=1.0),
    "prior2": PriorConfig(g0=0.01, h0=0.01, c0=1.0, d0=1.0),
    "prior3": PriorConfig(g0=1.0, h0=12.0, c0=100.0, d0=1.0),
}


@dataclass(frozen=True)
class FitOptions:
    """Loop controls.

    Setting ``fixed_sigma2`` holds the measurement variance constant and
    skips the volatility block.  ``dvs_enabled=False`` drops the
    spike-and-slab prior so the state equation is a plain random walk.

    ``scale_y`` fits on ``y / sd(y)`` and maps coefficient moments and
    variances back to the units of ``y``.  The slab and spike variances are
    absolute, so without this the selection behaviour depends on the scale
    of ``y``.  Selection-block quantities (``tau2_inv``, ``v``, ``w_inv``)
    stay in the scaled units.
    """

    max_iter: int = 100
    tol: float = 1e-4
    fixed_sigma2: Optional[float] = None
    dvs_enabled: bool = True
    scale_y: bool = False
    check_invariants: bool = True

    def __post_init__(self):
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidArgumentError("max_iter must be a positive integer")
        if not self.tol > 0:
            raise InvalidArgumentError("tol must be positive")
        if self.fixed_sigma2 is not None and not self.fixed_sigma2 > 0:
            raise InvalidArgumentError("fixed_sigma2 must be positive")


@dataclass(frozen=True)
class FitResult:
    states: StateMoments
    dvs: dvs.DvsState
    vol: PrecisionPath
    iterations_run: int
    final_delta: float
    converged: bool
    delta_history: tuple = field(default_factory=tuple)
    system: Optional[SystemSequences] = None

    @property
    def coefficients(self) -> np.ndarray:
        """Smoothed coefficient means, (T, p)."""
        return self.states.m_smooth

    @property
    def pip(self) -> np.ndarray:
        return self.dvs.pip

    @property
    def sigma2(self) -> np.ndarray:
        return self.vol.sigma2


def initialize_state(data: RegressionData, prior: PriorConfig, fixed_sigma2=None):
    """Starting values ``(w_inv, v, sigma2, pi0)`` for the first iteration.

    ``w_inv`` starts at its prior mean ``c0/d0``, ``v`` at ``h0/g0`` (but no
    smaller than ``10 * c_spike``), ``sigma2`` at the sample variance of
    ``y`` unless a fixed value is given, and ``pi0`` at 1/2.
    """
    T, p = data.T, data.p
    w_inv = np.full((T, p), prior.c0 / prior.d0)
    v = np.full((T, p), max(prior.h0 / prior.g0, 10.0 * prior.c_spike))
    if fixed_sigma2 is None:
        var_y = float(np.var(data.y, ddof=1))
        if not var_y > 0:
            raise InvalidArgumentError("y has zero sample variance; pass a fixed measurement variance")
        sigma2 = np.full(T, var_y)
    else:
        sigma2 = np.full(T, float(fixed_sigma2))
    pi0 = np.full(T, 0.5)
    return w_inv, v, sigma2, pi0


def _check_inputs(data: RegressionData):
    if data.T < 2:
        raise InvalidArgumentError(f"need at least 2 observations, got T={data.T}")
    if data.p < 1:
        raise InvalidArgumentError("need at least one predictor")


def _run(data: RegressionData, prior: PriorConfig, opts: FitOptions) -> FitResult:
    _check_inputs(data)
    T, p = data.T, data.p
    hyper = prior.hyper
    m0 = prior.m0_vector(p)
    P0 = prior.p0_scale * np.eye(p)

    w_inv, v, sigma2, pi0 = initialize_state(data, prior, opts.fixed_sigma2)
    tau2_inv = np.full((T, p), prior.g0 / prior.h0)
    pip = np.full((T, p), 1.0 if not opts.dvs_enabled else 0.5)
    v_inv_off = np.zeros((T, p))
    if opts.fixed_sigma2 is not None:
        vol = constant_precision_path(opts.fixed_sigma2, T, prior.delta, prior.a0, prior.b0)
    else:
        vol = None

    m_prev = np.broadcast_to(m0, (T, p))
    history = []
    converged = False
    smooth = sys = None
    for it in range(1, int(opts.max_iter) + 1):
        stage = "combine_priors"
        try:
            v_inv = 1.0 / v if opts.dvs_enabled else v_inv_off
            f_tilde, w_tilde = combine_priors(w_inv, v_inv)
            sys = SystemSequences(f_tilde, w_tilde, sigma2)
            stage = "kalman_filter"
            filt = kalman_filter(data, sys, m0, P0)
            stage = "rts_smoother"
            smooth = rts_smoother(filt, sys)
            stage = "error_summaries"
            d_diag = state_sq_error(smooth, sys)
            r = measurement_sq_error(data, smooth)
            m = smooth.m_smooth

            stage = "dvs_prior"
            if opts.dvs_enabled:
                tau2_inv = dvs.update_tau2_inv(m, hyper)
                tau2 = 1.0 / tau2_inv
                pip = dvs.update_gamma(m, tau2, pi0[:, None], hyper.c_spike)
                v = dvs.update_v(pip, tau2, hyper.c_spike)
            w_inv = dvs.update_w_inv(d_diag, hyper)
            if opts.dvs_enabled:
                pi0 = dvs.update_pi0(pip)

            stage = "volatility"
            if opts.fixed_sigma2 is None:
                vol = fit_precision_path(r, prior.a0, prior.b0, prior.delta)
                sigma2 = vol.sigma2
        except NumericalFailureError as exc:
            raise NumericalFailureError(str(exc), stage=stage, iteration=it) from exc
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            raise NumericalFailureError(str(exc), stage=stage, iteration=it) from exc

        change = float(np.max(np.abs(m - m_prev)))
        history.append(change)
        m_prev = m
        state = dvs.DvsState(tau2_inv=tau2_inv, pip=pip,
                             v=v if opts.dvs_enabled else np.full((T, p), np.inf),
                             pi0=pi0, w_inv=w_inv)
        if opts.check_invariants:
            try:
                dvs.check_dvs_state(state)
            except AssertionError as exc:
                raise NumericalFailureError(str(exc), stage="invariants", iteration=it) from exc
        logger.debug("iteration %d: max |dm| = %.3e", it, change)
        if not np.isfinite(change):
            raise NumericalFailureError("non-finite smoothed means", stage="convergence",
                                        iteration=it)
        if change <= opts.tol:
            converged = True
            break

    return FitResult(states=smooth, dvs=state, vol=vol, iterations_run=it,
                     final_delta=history[-1], converged=converged,
                     delta_history=tuple(history), system=sys)


def _rescale(result: FitResult, s: float) -> FitResult:
    st = result.states
    s2 = s * s
    states = replace(
        st, m0=st.m0 * s, P0=st.P0 * s2, m_pred=st.m_pred * s, P_pred=st.P_pred * s2,
        m_filt=st.m_filt * s, P_filt=st.P_filt * s2,
        m_smooth=st.m_smooth * s, P_smooth=st.P_smooth * s2,
    )
    vol = result.vol
    vol = replace(vol, b=None if vol.b is None else vol.b * s2, phi_filt=vol.phi_filt / s2,
                  phi_smooth=vol.phi_smooth / s2, sigma2=vol.sigma2 * s2)
    system = result.system
    if system is not None:
        system = SystemSequences(system.f_tilde, system.w_tilde * s2, system.sigma2 * s2)
    return replace(result, states=states, vol=vol, system=system,
                   final_delta=result.final_delta * s,
                   delta_history=tuple(d * s for d in result.delta_history))


def _fit(data: RegressionData, prior: PriorConfig, opts: FitOptions) -> FitResult:
    if not opts.scale_y:
        return _run(data, prior, opts)
    s = float(np.std(data.y, ddof=1))
    if not s > 0:
        raise InvalidArgumentError("cannot scale y with zero sample variance")
    scaled_opts = replace(opts, scale_y=False, tol=opts.tol / s)
    if opts.fixed_sigma2 is not None:
        scaled_opts = replace(scaled_opts, fixed_sigma2=opts.fixed_sigma2 / s ** 2)
    result = _run(RegressionData(data.y / s, data.X), prior, scaled_opts)
    return _rescale(result, s)


def fit_vbdvs(data: RegressionData, prior: Optional[PriorConfig] = None,
              opts: Optional[FitOptions] = None) -> FitResult:
    """Fit a TVP regression with dynamic variable selection and stochastic volatility.

    Parameters
    ----------
    data : RegressionData
        ``T >= 2`` observations on ``p >= 1`` predictors; ``p > T`` is allowed.
    prior : PriorConfig, optional
        Defaults to the ``prior3`` preset.
    opts : FitOptions, optional

    Returns
    -------
    FitResult
        Non-convergence within ``max_iter`` is reported through
        ``converged=False``, not raised.

    Raises
    ------
    NumericalFailureError
        If an inner pass breaks down; the message names iteration and stage.
    """
    prior = PRESETS["prior3"] if prior is None else prior
    opts = FitOptions() if opts is None else opts
    return _fit(data, prior, opts)


def fit_simple_tvp(data: RegressionData, prior: Optional[PriorConfig] = None,
                   opts: Optional[FitOptions] = None, *, sigma2: Optional[float] = None) -> FitResult:
    """Random-walk TVP regression with known measurement variance.

    Alternates the Kalman smoother with the Gamma update
    ``1/w_{j,t} <- (c0 + 1/2) / (d0 + D_{jj,t}/2)``.  The variance comes
    from ``opts.fixed_sigma2`` or the ``sigma2`` keyword.
    """
    prior = PRESETS["prior3"] if prior is None else prior
    opts = FitOptions() if opts is None else opts
    if sigma2 is not None:
        opts = replace(opts, fixed_sigma2=float(sigma2))
    if opts.fixed_sigma2 is None:
        raise InvalidArgumentError("fit_simple_tvp needs a fixed measurement variance")
    return _fit(data, prior, replace(opts, dvs_enabled=False))


def timed_fit(data, prior=None, opts=None):
    """``fit_vbdvs`` plus elapsed wall-clock milliseconds."""
    start = time.perf_counter()
    result = fit_vbdvs(data, prior, opts)
    return result, 1000.0 * (time.perf_counter() - start)
