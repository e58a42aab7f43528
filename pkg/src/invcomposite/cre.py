"""Completely randomized experiments: inverse OLS of z on (1, y)."""

from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import DegenerateTreatment, NearSingular
from .inference import confidence_interval as _interval
from .inference import null_spectrum, rel_diff, wald
from .numkernel import MomentSet, ols, solve_pd


@dataclass
class CompositeFit:
    beta: np.ndarray
    tau: np.ndarray
    tau_c: float
    sigma_hat: np.ndarray
    residuals: np.ndarray
    moments: MomentSet
    design: str = "cre"
    intercept: float = 0.0
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    centered_y: np.ndarray = field(default=None, repr=False)
    centered_z: np.ndarray = field(default=None, repr=False)


def group_covariance(y):
    yc = y - y.mean(axis=0)
    return yc.T @ yc / y.shape[0]


def fit(data):
    """Composite effect beta' tau from the inverse regression of z on (1, y)."""
    z, y = data.z, data.y
    zbar = float(z.mean())
    if zbar in (0.0, 1.0):
        raise DegenerateTreatment("treatment has a single arm")
    yc = y - y.mean(axis=0)
    zc = z - zbar
    beta, resid, s_yy, s_yz, s_zz = _core.inverse_fit(yc, zc)
    treated = z == 1
    tau = y[treated].mean(axis=0) - y[~treated].mean(axis=0)
    tau_c = float(beta @ tau)
    sigma = group_covariance(y[treated]) / (1 - zbar) + group_covariance(y[~treated]) / zbar

    checks = {"beta_moment_form": rel_diff(beta, s_zz * solve_pd(s_yy, tau))}
    notes = []
    try:
        si_tau = solve_pd(sigma, tau)
        checks["beta_rank_one_form"] = rel_diff(beta, si_tau / (1 + tau @ si_tau))
    except NearSingular:
        notes.append("group covariance is singular; rank-one identity check skipped")
    coef, _ = ols(y @ beta, z)
    checks["two_step"] = abs(float(coef[1]) - tau_c)

    moments = MomentSet(s_yy, s_yz, s_zz, means={"z": zbar, "y": y.mean(axis=0)})
    intercept = zbar - float(y.mean(axis=0) @ beta)
    return CompositeFit(beta, tau, tau_c, sigma, resid, moments, "cre", intercept,
                        checks, notes, yc, zc)


def wald_test(fit, data=None):
    cov, _ = _core.robust_cov(fit.moments.s_yy, fit.residuals, fit.centered_y)
    return wald(fit.beta, cov)


def variance_normal(fit, data=None):
    m = fit.moments
    return _core.normal_variance(fit.centered_y, fit.centered_z, fit.residuals, fit.beta,
                                 m.s_yy, m.s_zz, None)


def gamma_matrix_meat(fit):
    yc = fit.centered_y
    return yc.T @ (yc * (fit.residuals ** 2)[:, None]) / yc.shape[0]


def gamma_null(fit, data=None):
    m = fit.moments
    return null_spectrum(1.0 / m.s_zz, m.s_yy, gamma_matrix_meat(fit))


def confidence_interval(fit, data, spec, wald_result=None):
    w = wald_result if wald_result is not None else wald_test(fit, data)
    return _interval(fit.tau_c, fit.residuals.shape[0],
                     lambda: variance_normal(fit, data), lambda: gamma_null(fit, data), w, spec)
