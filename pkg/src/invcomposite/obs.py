"""Observational studies: inverse-probability-weighted inverse regression.

One weighted engine serves the plain and the covariate-adjusted analyses;
they differ only in the nuisance design that y and z are partialled on
(a constant column, or the constant together with the covariates).
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DesignMismatch, NearSingular
from .inference import confidence_interval as _interval
from .inference import null_spectrum, rel_diff, wald
from .numkernel import logistic_mle, partial_out, sandwich, solve_pd, wls

EXTREME_SCORE = 1e-4
KNOWN_LABEL = "propensity treated as known"


class WeightSource(str, enum.Enum):
    ESTIMATE = "estimate"
    USER = "user"


@dataclass
class PropensityFit:
    alpha: np.ndarray
    scores: np.ndarray
    weights: np.ndarray
    score_contribs: np.ndarray
    info: np.ndarray
    grad_w: np.ndarray
    converged: bool
    iterations: int

    @property
    def score_norm(self):
        return float(np.abs(self.score_contribs.mean(axis=0)).max())


@dataclass
class ObsFit:
    beta: np.ndarray
    tau: np.ndarray
    tau_c: float
    phi_yy: np.ndarray
    phi_zz: float
    phi_yz: np.ndarray
    sigma_hat: np.ndarray
    residuals: np.ndarray
    weights: np.ndarray
    propensity: PropensityFit | None
    partialled_y: np.ndarray = field(repr=False)
    partialled_z: np.ndarray = field(repr=False)
    design: str = "obs"
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def weights_known(self):
        return self.propensity is None


def fit_propensity(data):
    """Logistic model of z on (1, x) fitted by Newton's method."""
    if data.x is None:
        raise DesignMismatch("propensity estimation requires covariates")
    X = np.column_stack([np.ones(data.n), data.x])
    z = data.z
    lf = logistic_mle(X, z)
    e = lf.probs
    w = z / e + (1 - z) / (1 - e)
    scores = (z - e)[:, None] * X
    grad_e = (e * (1 - e))[:, None] * X
    grad_w = (-z / e ** 2 + (1 - z) / (1 - e) ** 2)[:, None] * grad_e
    return PropensityFit(lf.coef, e, w, scores, lf.info, grad_w, lf.converged, lf.iterations)


def _resolve_source(data, weights_source):
    if weights_source is None:
        return WeightSource.USER if data.user_weights is not None else WeightSource.ESTIMATE
    src = WeightSource(weights_source)
    if src is WeightSource.USER and data.user_weights is None:
        raise DesignMismatch("user weights requested but no weights column given")
    return src


def weighted_fit(data, weights_source=None, nuisance=None, tag="obs"):
    """Weighted inverse regression with y and z partialled on ``nuisance``."""
    src = _resolve_source(data, weights_source)
    warnings = []
    if src is WeightSource.USER:
        prop, w = None, np.asarray(data.user_weights, dtype=float)
    else:
        prop = fit_propensity(data)
        w = prop.weights
        e = prop.scores
        extreme = int(np.sum((e < EXTREME_SCORE) | (e > 1 - EXTREME_SCORE)))
        if extreme:
            warnings.append(f"{extreme} estimated propensity scores lie outside "
                            f"[{EXTREME_SCORE:g}, {1 - EXTREME_SCORE:g}]")
    n = data.n
    N = np.ones((n, 1)) if nuisance is None else nuisance
    z, y = data.z, data.y
    yt = partial_out(y, N, w)
    zt = partial_out(z, N, w)
    beta, resid = wls(zt, yt, w, intercept=False)
    wy = yt * w[:, None]
    phi_yy = wy.T @ yt / n
    phi_yz = wy.T @ zt / n
    phi_zz = float(np.sum(w * zt * zt) / n)
    tau = phi_yz / phi_zz
    tau_c = float(beta @ tau)
    sigma = phi_yy / phi_zz - np.outer(tau, tau)

    checks = {"beta_moment_form": rel_diff(beta, phi_zz * solve_pd(phi_yy, tau))}
    notes = [] if prop is not None else [KNOWN_LABEL]
    try:
        si_tau = solve_pd(sigma, tau)
        checks["beta_rank_one_form"] = rel_diff(beta, si_tau / (1 + tau @ si_tau))
    except NearSingular:
        notes.append("weighted group covariance is singular; rank-one identity check skipped")
    comp = y @ beta
    coef, _ = wls(comp, np.column_stack([N, z]), w, intercept=False)
    checks["two_step"] = abs(float(coef[-1]) - tau_c)
    if nuisance is None:
        t = z == 1
        hajek = (np.average(y[t], axis=0, weights=w[t])
                 - np.average(y[~t], axis=0, weights=w[~t]))
        checks["hajek"] = rel_diff(tau, hajek)
        m1, m0, m = np.mean(w * z), np.mean(w * (1 - z)), np.mean(w)
        checks["weighted_treatment_moment"] = abs(phi_zz - m1 * m0 / m)
    if prop is not None:
        checks["propensity_score_equation"] = prop.score_norm
    return ObsFit(beta, tau, tau_c, phi_yy, phi_zz, phi_yz, sigma, resid, w, prop,
                  yt, zt, tag, checks, notes, warnings)


def fit(data, weights_source=None):
    return weighted_fit(data, weights_source)


def psi_terms(fit, data=None):
    """Per-unit contributions to the inverse-regression estimating equation.

    With an estimated propensity the plug-in error of alpha enters through
    [mean_j s_j y_j grad_w_j'] I^{-1} S_i; known weights keep the first term only.
    """
    base = (fit.residuals * fit.weights)[:, None] * fit.partialled_y
    if fit.propensity is None:
        return base
    p = fit.propensity
    n = base.shape[0]
    G = (fit.residuals[:, None] * fit.partialled_y).T @ p.grad_w / n
    return base + p.score_contribs @ solve_pd(p.info, G.T)


def _psi_meat(fit):
    psi = psi_terms(fit)
    return psi.T @ psi / psi.shape[0]


def wald_test_os(fit, data=None):
    n = fit.residuals.shape[0]
    cov = sandwich(fit.phi_yy, _psi_meat(fit)) / n
    return wald(fit.beta, cov, note=KNOWN_LABEL if fit.weights_known else "")


def variance_normal_os(fit, data=None):
    yt, w, beta = fit.partialled_y, fit.weights, fit.beta
    n = yt.shape[0]
    proj = yt @ beta
    bpb = float(beta @ fit.phi_yy @ beta)
    a = w * proj * proj - bpb
    shift = w - w.mean()
    if fit.propensity is not None:
        p = fit.propensity
        h = (proj * proj) @ p.grad_w / n
        a += p.score_contribs @ solve_pd(p.info, h)
        shift = shift + p.score_contribs @ solve_pd(p.info, p.grad_w.mean(axis=0))
    a -= 0.5 * shift * bpb
    a += 2.0 * psi_terms(fit) @ beta
    return 4.0 * float(np.mean(a * a))


def gamma_null_os(fit, data=None):
    return null_spectrum(1.0 / fit.phi_zz, fit.phi_yy, _psi_meat(fit))


def confidence_interval_os(fit, data, spec, wald_result=None):
    w = wald_result if wald_result is not None else wald_test_os(fit)
    return _interval(fit.tau_c, fit.residuals.shape[0],
                     lambda: variance_normal_os(fit), lambda: gamma_null_os(fit), w, spec)
