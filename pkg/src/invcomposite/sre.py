"""Stratified randomized experiments.

The regression strategy regresses z on stratum indicators and y, which
amounts to the randomized-experiment kernel on within-stratum centered
columns. The stratification strategy fits each stratum separately and
averages the stratum composites with weights n_s / n.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _core, cre
from .errors import InvCompositeError
from .inference import confidence_interval as _interval
from .inference import null_spectrum, rel_diff, wald, wald_from_stat
from .numkernel import MomentSet, ols, partial_out_strata, solve_pd, stratum_means
from .wchi2 import WeightedChiSq


@dataclass
class StratifiedFit:
    beta: np.ndarray
    tau: np.ndarray
    tau_c: float
    moments: MomentSet
    residuals: np.ndarray
    stratum_sizes: np.ndarray
    treated_shares: np.ndarray
    labels: np.ndarray = field(repr=False)
    centered_y: np.ndarray = field(repr=False)
    centered_z: np.ndarray = field(repr=False)
    design: str = "sre-reg"
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


@dataclass
class StratificationFit:
    strata: list
    stratum_labels: tuple
    stratum_sizes: np.ndarray
    tau_c: float
    design: str = "sre-strat"
    checks: dict = field(default_factory=dict)

    @property
    def betas(self):
        return [f.beta for f in self.strata]


def _stratum_sizes(labels, S):
    return np.bincount(labels, minlength=S)


def fit_regression(data):
    labels = data.stratum
    z, y = data.z, data.y
    yc = partial_out_strata(y, labels)
    zc = partial_out_strata(z, labels)
    beta, resid, s_yy, s_yz, s_zz = _core.inverse_fit(yc, zc)
    tau = s_yz / s_zz
    tau_c = float(beta @ tau)

    S = data.S
    sizes = _stratum_sizes(labels, S) if labels is not None else np.array([data.n])
    shares = (stratum_means(z, labels)[:, 0] if labels is not None
              else np.array([z.mean()]))
    pooled = float(np.sum(sizes / data.n * shares * (1 - shares)))
    checks = {
        "beta_moment_form": rel_diff(beta, s_zz * solve_pd(s_yy, tau)),
        "pooled_treatment_variance": abs(pooled - s_zz),
    }
    coef, _ = ols(partial_out_strata(y @ beta, labels), zc, intercept=False)
    checks["two_step"] = abs(float(coef[0]) - tau_c)
    moments = MomentSet(s_yy, s_yz, s_zz)
    return StratifiedFit(beta, tau, tau_c, moments, resid, sizes, shares,
                         labels, yc, zc, "sre-reg", checks)


def wald_test_sr(fit, data=None):
    cov, _ = _core.robust_cov(fit.moments.s_yy, fit.residuals, fit.centered_y)
    return wald(fit.beta, cov)


def variance_normal_sr(fit, data=None):
    m = fit.moments
    return _core.normal_variance(fit.centered_y, fit.centered_z, fit.residuals, fit.beta,
                                 m.s_yy, m.s_zz, fit.labels)


def gamma_null_sr(fit, data=None):
    yc = fit.centered_y
    meat = yc.T @ (yc * (fit.residuals ** 2)[:, None]) / yc.shape[0]
    return null_spectrum(1.0 / fit.moments.s_zz, fit.moments.s_yy, meat)


def confidence_interval_sr(fit, data, spec, wald_result=None):
    w = wald_result if wald_result is not None else wald_test_sr(fit, data)
    return _interval(fit.tau_c, fit.residuals.shape[0],
                     lambda: variance_normal_sr(fit), lambda: gamma_null_sr(fit), w, spec)


# -- stratification strategy --------------------------------------------------

def fit_stratification(data):
    """Separate completely randomized fits per stratum, averaged by n_s / n."""
    fits, sizes = [], []
    for k, lab in enumerate(data.stratum_labels):
        rows = np.flatnonzero(data.stratum == k)
        try:
            sub = type(data).from_arrays(data.z[rows], data.y[rows],
                                         outcome_names=data.outcome_names)
            fits.append(cre.fit(sub))
        except InvCompositeError as exc:
            exc.detail.setdefault("stratum", lab)
            raise
        sizes.append(rows.size)
    sizes = np.array(sizes)
    tau_c = float(np.sum(sizes * np.array([f.tau_c for f in fits])) / sizes.sum())
    return StratificationFit(fits, data.stratum_labels, sizes, tau_c)


def _per_stratum(fit, func):
    out = []
    for lab, f in zip(fit.stratum_labels, fit.strata):
        try:
            out.append(func(f))
        except InvCompositeError as exc:
            exc.detail.setdefault("stratum", lab)
            raise
    return out


def wald_test_strat(fit, data=None):
    """Sum of independent per-stratum Wald statistics against chi2(S L)."""
    parts = _per_stratum(fit, cre.wald_test)
    stat = float(sum(w.statistic for w in parts))
    return wald_from_stat(stat, sum(w.df for w in parts))


def variance_normal_strat(fit, data=None):
    """Asymptotic variance of sqrt(n) times the aggregate: sum_s (n_s/n) V_s."""
    v = np.array(_per_stratum(fit, cre.variance_normal))
    return float(np.sum(fit.stratum_sizes * v) / fit.stratum_sizes.sum())


def gamma_null_strat(fit, data=None):
    """n * aggregate = sum_s n_s tau_c_s, so the null law pools all stratum spectra."""
    laws = _per_stratum(fit, cre.gamma_null)
    return WeightedChiSq(np.concatenate([law.lambdas for law in laws]))


def confidence_interval_strat(fit, data, spec, wald_result=None):
    w = wald_result if wald_result is not None else wald_test_strat(fit)
    return _interval(fit.tau_c, int(fit.stratum_sizes.sum()),
                     lambda: variance_normal_strat(fit), lambda: gamma_null_strat(fit), w, spec)
