"""Property-based checks of the documented invariants."""

import numpy as np
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import joint_gaussian_moments, random_system
from vbdvs import RegressionData, SystemSequences
from vbdvs.dvs_prior import update_gamma, update_pi0, update_v
from vbdvs.pipeline import ForecastRecord, ForecastTask, apply_transform, build_direct_dataset, evaluate_oos, pca
from vbdvs.simulate import msd
from vbdvs.statespace import combine_priors, kalman_filter, measurement_sq_error, rts_smoother
from vbdvs.volatility import filter_precision, smooth_precision

pos = st.floats(1e-6, 1e6, allow_nan=False, allow_infinity=False)
prob = st.floats(0.0, 1.0)
spike = st.floats(1e-8, 0.5)


@given(pos, pos)
def test_combine_priors_harmonic(w_inv, v_inv):
    f, w = combine_priors(w_inv, v_inv)
    assert abs(1 / w - (w_inv + v_inv)) <= 1e-14 * (w_inv + v_inv)
    assert 0 < f < 1
    assert w <= min(1 / w_inv, 1 / v_inv) * (1 + 1e-15)


@given(st.floats(-50, 50), st.floats(1e-3, 1e3), prob, spike)
def test_gamma_symmetric_bounded(m, tau2, pi, c):
    g = update_gamma(m, tau2, pi, c)
    assert 0.0 <= g <= 1.0
    assert g == update_gamma(-m, tau2, pi, c)


@given(st.floats(0, 20), st.floats(0, 20), st.floats(1e-3, 1e3), st.floats(0.01, 0.99), spike)
def test_gamma_nondecreasing_in_abs_m(a, b, tau2, pi, c):
    lo, hi = sorted((a, b))
    assert update_gamma(lo, tau2, pi, c) <= update_gamma(hi, tau2, pi, c)


@given(prob, st.floats(1e-3, 1e3), spike)
def test_v_interpolation_bounds(g, tau2, c):
    v = update_v(g, tau2, c)
    assert min(c * tau2, tau2) * (1 - 1e-12) <= v <= tau2 * (1 + 1e-12)


@given(arrays(float, st.integers(1, 40), elements=prob))
def test_pi0_bounds(row):
    p = row.shape[0]
    pi0 = update_pi0(row)
    assert 1 / (2 + p) - 1e-15 <= pi0 <= (1 + p) / (2 + p) + 1e-15


@given(arrays(float, st.integers(1, 60), elements=st.floats(1e-3, 1e3)), st.floats(0.05, 1.0))
def test_smoother_convex_chain(phi, delta):
    out = smooth_precision(phi, delta)
    assert out[-1] == phi[-1]
    assert np.all(out >= phi.min() * (1 - 1e-12)) and np.all(out <= phi.max() * (1 + 1e-12))


@given(arrays(float, st.integers(1, 40), elements=st.floats(0, 1e3)), st.floats(0.05, 1.0))
def test_precision_filter_positive(r, delta):
    a, b, phi = filter_precision(r, 0.01, 0.01, delta)
    assert np.all(a > 0) and np.all(b > 0)
    np.testing.assert_array_equal(phi, a / b)


@given(st.integers(0, 2 ** 31), st.integers(1, 10), st.integers(1, 3))
def test_filter_smoother_oracle(seed, T, p):
    args = random_system(np.random.default_rng(seed), T, p)
    y, X, f, w, s2, m0, P0 = args
    sys_ = SystemSequences(f, w, s2)
    st_ = rts_smoother(kalman_filter(RegressionData(y, X), sys_, m0, P0), sys_)
    ref = joint_gaussian_moments(*args)
    np.testing.assert_allclose(st_.m_smooth, ref["smooth"][0], atol=1e-8)
    np.testing.assert_allclose(st_.P_smooth, ref["smooth"][1], atol=1e-8)
    np.testing.assert_allclose(st_.m_filt, ref["filt"][0], atol=1e-8)
    for P in (st_.P_pred, st_.P_filt, st_.P_smooth):
        assert np.linalg.eigvalsh(P).min() > -1e-10
    assert np.all(measurement_sq_error(RegressionData(y, X), st_) >= 0)


@given(arrays(float, st.integers(6, 50), elements=st.floats(0.1, 100)))
def test_transform_composition(x):
    np.testing.assert_allclose(apply_transform(x, 3), apply_transform(apply_transform(x, 2), 2),
                               atol=1e-12, rtol=0)
    np.testing.assert_allclose(apply_transform(x, 6), apply_transform(apply_transform(x, 5), 2),
                               atol=1e-12, rtol=0)


@given(st.integers(0, 2 ** 31), st.integers(3, 25), st.integers(2, 8))
def test_pca_orthogonal_nonincreasing(seed, T, p):
    X = np.random.default_rng(seed).standard_normal((T, p))
    X -= X.mean(0)
    k = min(T, p)
    res = pca(X, k)
    G = res.factors.T @ res.factors
    scale = max(1.0, np.abs(G).max())
    assert np.abs(G - np.diag(np.diag(G))).max() < 1e-10 * scale
    assert np.all(np.diff(res.explained_variance) <= 1e-12 * scale)


@given(st.integers(1, 4), st.integers(0, 3), st.integers(12, 30))
def test_direct_dataset_alignment(h, lags, T):
    y = np.arange(T, dtype=float)
    X = 1000 + np.arange(T, dtype=float)[:, None]
    ds = build_direct_dataset(y, X, ForecastTask(h=h, lags=lags))
    assert ds.n_rows == T - h - max(lags - 1, 0)
    for row, t in enumerate(ds.origins):
        assert ds.data.y[row] == y[t + h]
        np.testing.assert_array_equal(ds.data.X[row], [1.0, *[y[t - l] for l in range(lags)], X[t, 0]])


@given(arrays(float, st.integers(1, 20), elements=st.floats(-10, 10)),
       arrays(float, 20, elements=st.floats(-10, 10)), arrays(float, 20, elements=st.floats(0.1, 10)))
def test_evaluate_self_identities(points, realized, var):
    recs = [ForecastRecord(i, float(p), float(v)).with_realized(float(r))
            for i, (p, r, v) in enumerate(zip(points, realized, var))]
    s = evaluate_oos(recs, recs)
    assert s.rel_msfe == 1.0
    assert s.rel_alpl == 0.0


@given(st.integers(0, 2 ** 31), st.integers(1, 8), st.integers(2, 6))
def test_msd_permutation_invariant(seed, T, p):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, T, p))
    perm = rng.permutation(p)
    assert np.isclose(msd(a, b), msd(a[:, perm], b[:, perm]), rtol=1e-14, atol=0)
    assert msd(a, b) >= 0
