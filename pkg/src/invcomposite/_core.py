"""Inverse-regression kernel shared by the randomized designs.

Everything here works on columns already centered within strata (a single
stratum means grand-mean centering), so the completely randomized and the
stratified regression strategy run through the same code.
"""

import numpy as np

from .numkernel import ols, outer_mean, partial_out_strata, sandwich, stratum_means


def inverse_fit(yc, zc):
    """Slope of centered z on centered y, its residuals and pooled moments."""
    coef, resid = ols(zc, yc, intercept=False)
    n = zc.shape[0]
    s_yy = yc.T @ yc / n
    s_yz = yc.T @ zc / n
    s_zz = float(zc @ zc / n)
    return coef, resid, s_yy, s_yz, s_zz


def robust_cov(metric, resid, yc):
    """HC0 covariance of the slope: n^{-1} metric^{-1} mean(e^2 y y') metric^{-1}."""
    meat = outer_mean(yc * resid[:, None])
    return sandwich(metric, meat) / yc.shape[0], meat


def stratum_moment(values, labels):
    """Per-unit within-stratum mean of ``values`` (n or n x m)."""
    if labels is None:
        return np.broadcast_to(values.mean(axis=0), values.shape)
    means = stratum_means(values, labels)
    out = means[labels]
    return out if values.ndim == 2 else out[:, 0]


def composite_influence(yc, zc, resid, beta, s_yy, s_zz, labels):
    """beta' r_i for the normal-regime variance, centered within strata.

    r_i = (y_i y_i' - S_yy|s) beta - s_zz^{-1}(z_i^2 - S_zz|s) S_yy beta + 2 e_i y_i,
    with every moment taken within the unit's stratum.
    """
    proj = yc @ beta
    sq = proj * proj
    a = sq - stratum_moment(sq, labels)
    z2 = zc * zc
    a -= (z2 - stratum_moment(z2, labels)) * float(beta @ s_yy @ beta) / s_zz
    a += 2.0 * resid * proj
    return partial_out_strata(a, labels)


def normal_variance(yc, zc, resid, beta, s_yy, s_zz, labels):
    a = composite_influence(yc, zc, resid, beta, s_yy, s_zz, labels)
    return float(np.mean(a * a)) / s_zz ** 2
