"""Kalman filter and smoother on a small random-walk regression.

Runs the forward and backward passes and compares them with brute-force
Gaussian conditioning.  Then shows how the spike-and-slab prior turns the
random walk into a shrinking AR(1).
"""
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from oracles import joint_gaussian_moments  # noqa: E402

from vbdvs import RegressionData, SystemSequences  # noqa: E402
from vbdvs.statespace import combine_priors, kalman_filter, rts_smoother  # noqa: E402

rng = np.random.default_rng(0)
T, p = 8, 2
X = rng.standard_normal((T, p))
beta = np.cumsum(0.3 * rng.standard_normal((T, p)), axis=0)
y = np.sum(X * beta, axis=1) + 0.5 * rng.standard_normal(T)

sys_ = SystemSequences.random_walk(np.full((T, p), 0.09), 0.25)
filt = kalman_filter(RegressionData(y, X), sys_, np.zeros(p), 4.0)
smooth = rts_smoother(filt, sys_)

print("true beta, filtered and smoothed means for the first coefficient")
print(np.c_[beta[:, 0], filt.m_filt[:, 0], smooth.m_smooth[:, 0]].round(3))

ref = joint_gaussian_moments(y, X, sys_.f_tilde, sys_.w_tilde, sys_.sigma2, np.zeros(p), 4 * np.eye(p))
print("max |smoothed - conditioning oracle|:", np.abs(smooth.m_smooth - ref["smooth"][0]).max())

# a tight slab variance v pulls the transition towards zero
for v in (1e2, 1.0, 1e-3):
    f, w = combine_priors(1 / 0.09, 1 / v)
    print(f"v={v:g}: transition {f:.4f}, innovation variance {w:.5f}")
