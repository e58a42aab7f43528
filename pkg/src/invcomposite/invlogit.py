"""Inverse logistic regression of z on (1, y), or on (strata, y).

gamma' tau is reported as a test statistic only: its limit laws are
established under the null, so no interval is offered.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DesignMismatch
from .inference import null_spectrum, wald
from .numkernel import logistic_mle, partial_out_strata, sandwich, solve_pd

NULL_ONLY = "valid under H0: tau=0 only"


@dataclass
class LogitFit:
    nuisance: np.ndarray
    gamma: np.ndarray
    probs: np.ndarray
    score: np.ndarray
    hessian: np.ndarray
    tau: np.ndarray
    tau_c: float
    converged: bool
    iterations: int
    stratified: bool
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=lambda: [NULL_ONLY])
    parts: dict = field(default_factory=dict, repr=False)


def _indicators(labels, S):
    G = np.zeros((labels.shape[0], S))
    G[np.arange(labels.shape[0]), labels] = 1.0
    return G


def fit_logit(data, stratified=False):
    n, L = data.n, data.L
    labels = data.stratum if stratified else None
    if stratified:
        if labels is None:
            raise DesignMismatch("stratified inverse logistic regression needs a stratum column")
        X = np.column_stack([_indicators(labels, data.S), data.y])
    else:
        X = np.column_stack([np.ones(n), data.y])
    lf = logistic_mle(X, data.z)
    gamma = lf.coef[-L:]

    yt = partial_out_strata(data.y, labels)
    zt = partial_out_strata(data.z, labels)
    ee = float(zt @ zt / n)
    tau = yt.T @ zt / n / ee
    # per-unit within-stratum treatment variance z_s(1 - z_s)
    if labels is None:
        share = np.full(n, data.z.mean())
    else:
        share = (np.bincount(labels, weights=data.z) / np.bincount(labels))[labels]
    A = yt.T @ (yt * (share * (1 - share))[:, None]) / n
    M = yt.T @ (yt * (zt * zt)[:, None]) / n
    # first-order null expansion gamma ~ A^{-1} E tau; S_yy^{-1} tau without strata
    gap = gamma - ee * solve_pd(A, tau)
    checks = {
        "score_max_norm": float(np.abs(lf.score).max()),
        "hessian_max_eigenvalue": float(np.linalg.eigvalsh(-lf.info).max()),
        "linearization_gap_norm": float(np.linalg.norm(gap)),
    }
    return LogitFit(lf.coef[:-L], gamma, lf.probs, lf.score, -lf.info, tau,
                    float(gamma @ tau), lf.converged, lf.iterations, stratified, checks,
                    parts={"A": A, "M": M, "E": ee, "n": n})


def wald_logit(fit, data=None, stratified=None):
    p = fit.parts
    cov = sandwich(p["A"], p["M"]) / p["n"]
    return wald(fit.gamma, cov, note=NULL_ONLY)


def null_spectrum_logit(fit, data=None, stratified=None):
    p = fit.parts
    return null_spectrum(1.0 / p["E"], p["A"], p["M"])
