"""Covariate-adjusted composite effects for all three designs.

Completely randomized: z is regressed on (1, x, y); the composite uses the
y-coefficients and the ANCOVA effects from y on (1, z, x).

Stratified: z is regressed on (strata, x, y); the covariate composite
beta_x' x acts as a control variate, tau_c(r) = tau_c_y - r tau_c_x, with
r fixed or chosen to minimize the estimated variance.

Observational: the weighted engine of :mod:`obs` with y and z partialled on
(1, x) under the inverse-probability weights.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _core, obs
from .errors import DesignMismatch, InvalidSpec, NumericalError, ZeroVarianceX
from .inference import ConfInterval, rel_diff, spectrum_of, wald
from .inference import confidence_interval as _interval
from .numkernel import (inv_sqrt_psd, ols, partial_out, partial_out_strata, solve_pd, sqrt_psd,
                        sym_eigen)
from .wchi2 import CLAMP_TOL, WeightedChiSq

OPT = "opt"
ZERO_VAR_X = 1e-14


@dataclass
class AdjustedFit:
    beta: np.ndarray
    tau: np.ndarray
    tau_c: float
    residuals: np.ndarray
    design: str
    beta_x: np.ndarray | None = None
    tau_x: np.ndarray | None = None
    tau_c_y: float | None = None
    tau_c_x: float | None = None
    r_used: float | None = None
    r_opt_hat: float | None = None
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    parts: dict = field(default_factory=dict, repr=False)


# -- completely randomized ---------------------------------------------------

def fit_cre_adjusted(data):
    n = data.n
    N = np.ones((n, 1)) if data.x is None else np.column_stack([np.ones(n), data.x])
    z, y = data.z, data.y
    yt = partial_out(y, N)
    zt = partial_out(z, N)
    beta, resid = ols(zt, yt, intercept=False)
    zz = float(zt @ zt / n)
    phi = yt.T @ yt / n
    tau = yt.T @ zt / n / zz
    tau_c = float(beta @ tau)
    checks = {"beta_moment_form": rel_diff(beta, zz * solve_pd(phi, tau))}
    coef, _ = ols(y @ beta, np.column_stack([N, z]), intercept=False)
    checks["two_step"] = abs(float(coef[-1]) - tau_c)
    return AdjustedFit(beta, tau, tau_c, resid, "cre-adj", checks=checks,
                       parts={"yt": yt, "phi": phi})


def wald_cre_adjusted(fit, data=None):
    cov, _ = _core.robust_cov(fit.parts["phi"], fit.residuals, fit.parts["yt"])
    return wald(fit.beta, cov)


def variance_cre_adjusted(fit, data):
    """Normal-regime variance with the x-partialled moment blocks."""
    z, y = data.z, data.y
    n = data.n
    beta, eps = fit.beta, fit.residuals
    zbar = float(z.mean())
    s_zz = zbar * (1 - zbar)
    yc = y - y.mean(axis=0)
    proj = yc @ beta
    s_yy = yc.T @ yc / n
    a = proj * proj - float(beta @ s_yy @ beta)
    phi = s_yy
    if data.x is not None:
        xc = data.x - data.x.mean(axis=0)
        s_xx = xc.T @ xc / n
        s_xy = xc.T @ yc / n
        load = solve_pd(s_xx, s_xy @ beta)  # S_xx^{-1} S_xy beta
        xproj = xc @ load
        a -= xproj * proj - float(load @ s_xy @ beta)
        a -= 2.0 * eps * xproj
        phi = s_yy - s_xy.T @ solve_pd(s_xx, s_xy)
    a -= ((z - zbar) ** 2 - s_zz) * float(beta @ phi @ beta) / s_zz
    a += 2.0 * eps * proj
    return float(np.mean(a * a)) / s_zz ** 2


def gamma_cre_adjusted(fit, data):
    zbar = float(data.z.mean())
    yt = fit.parts["yt"]
    meat = yt.T @ (yt * (fit.residuals ** 2)[:, None]) / yt.shape[0]
    half = inv_sqrt_psd(fit.parts["phi"])
    return spectrum_of(half @ meat @ half / (zbar * (1 - zbar)))


def confidence_interval_cre_adjusted(fit, data, spec, wald_result=None):
    w = wald_result if wald_result is not None else wald_cre_adjusted(fit)
    return _interval(fit.tau_c, data.n, lambda: variance_cre_adjusted(fit, data),
                     lambda: gamma_cre_adjusted(fit, data), w, spec)


# -- stratified --------------------------------------------------------------

def _sre_parts(z, y, x, labels):
    """Within-stratum fit of z on u = (x, y); x columns that vanish are dropped."""
    n = z.shape[0]
    yt = partial_out_strata(y, labels)
    zt = partial_out_strata(z, labels)
    if x is None:
        xt = np.empty((n, 0))
        keep = np.zeros(0, dtype=bool)
    else:
        xt_all = partial_out_strata(x, labels)
        scale = np.maximum(np.linalg.norm(x - x.mean(axis=0), axis=0), 1e-300)
        keep = np.linalg.norm(xt_all, axis=0) > 1e-10 * scale
        xt = xt_all[:, keep]
    ut = np.column_stack([xt, yt])
    coef, resid = ols(zt, ut, intercept=False)
    ee = float(zt @ zt / n)
    phi = ut.T @ ut / n
    tau_u = ut.T @ zt / n / ee
    return {"ut": ut, "zt": zt, "coef": coef, "resid": resid, "E": ee, "phi": phi,
            "tau_u": tau_u, "k": xt.shape[1], "keep": keep, "labels": labels}


def _r_weights(parts, r):
    return np.concatenate([np.full(parts["k"], -float(r)), np.ones(parts["coef"].size - parts["k"])])


def _variance_from_parts(parts, r):
    ut, zt, beta, zeta = parts["ut"], parts["zt"], parts["coef"], parts["resid"]
    labels, phi, ee = parts["labels"], parts["phi"], parts["E"]
    d = _r_weights(parts, r)
    proj = ut @ beta
    dproj = ut @ (d * beta)
    prod = dproj * proj
    a = prod - _core.stratum_moment(prod, labels)
    z2 = zt * zt
    a -= (z2 - _core.stratum_moment(z2, labels)) * float((d * beta) @ phi @ beta) / ee
    # beta'(Phi D Phi^{-1} + D) u_i
    lin = solve_pd(phi, d * (phi @ beta)) + d * beta
    a += zeta * (ut @ lin)
    a = partial_out_strata(a, labels)
    return float(np.mean(a * a)) / ee ** 2


def _optimal_r(parts):
    if parts["k"] == 0:
        raise ZeroVarianceX("covariates are constant within strata; r_opt undefined")
    vm, v0, vp = (_variance_from_parts(parts, r) for r in (-1.0, 0.0, 1.0))
    vx = 0.5 * (vm + vp) - v0
    if vx <= ZERO_VAR_X:
        raise ZeroVarianceX("covariate composite has no estimated variance; r_opt undefined",
                            variance=float(vx))
    return (vm - vp) / (4.0 * vx)


def _sre_adjusted_arrays(z, y, x, labels, r):
    parts = _sre_parts(z, y, x, labels)
    k = parts["k"]
    beta_u, tau_u = parts["coef"], parts["tau_u"]
    bx, by = beta_u[:k], beta_u[k:]
    tx, ty = tau_u[:k], tau_u[k:]
    tcy, tcx = float(by @ ty), float(bx @ tx)
    r_opt = None
    if isinstance(r, str):
        if r.lower() != OPT:
            raise InvalidSpec("r must be a number or 'opt'", r=r)
        r_opt = _optimal_r(parts)
        r_val = r_opt
    else:
        r_val = float(r)
    return parts, tcy - r_val * tcx, tcy, tcx, r_val, r_opt


def fit_sre_adjusted(data, r=0.0):
    """Within-stratum inverse regression on u = (x, y); without x it is the sre-reg fit."""
    if data.stratum is None:
        raise DesignMismatch("sre-reg requires a stratum column")
    parts, tau_c, tcy, tcx, r_val, r_opt = _sre_adjusted_arrays(
        data.z, data.y, data.x, data.stratum, r)
    k, labels = parts["k"], data.stratum
    beta_u, tau_u = parts["coef"], parts["tau_u"]
    beta_x = np.zeros(data.K)
    tau_x = np.zeros(data.K)
    beta_x[parts["keep"]] = beta_u[:k]
    tau_x[parts["keep"]] = tau_u[:k]
    notes = []
    if k < data.K:
        notes.append(f"{data.K - k} covariate(s) constant within strata dropped")
    checks = {"beta_moment_form": rel_diff(beta_u, parts["E"] * solve_pd(parts["phi"], tau_u))}
    zt = parts["zt"]
    sy, _ = ols(partial_out_strata(data.y @ beta_u[k:], labels), zt, intercept=False)
    checks["three_step_y"] = abs(float(sy[0]) - tcy)
    if data.x is not None:
        sx, _ = ols(partial_out_strata(data.x @ beta_x, labels), zt, intercept=False)
        checks["three_step_x"] = abs(float(sx[0]) - tcx)
    return AdjustedFit(beta_u[k:], tau_u[k:], tau_c, parts["resid"], "sre-adj",
                       beta_x=beta_x, tau_x=tau_x, tau_c_y=tcy, tau_c_x=tcx,
                       r_used=r_val, r_opt_hat=r_opt, checks=checks, notes=notes, parts=parts)


def wald_sre_adjusted(fit, data=None):
    """Joint test of the (x, y) inverse-regression slopes.

    The statistic uses all K+L slopes, and so does the reference chi-square;
    the note records that the L-dimensional null is what is being tested.
    """
    p = fit.parts
    cov, _ = _core.robust_cov(p["phi"], fit.residuals, p["ut"])
    df = p["coef"].size
    note = f"statistic uses all {df} slopes of (x, y); df_stated={df - p['k']}" if p["k"] else ""
    return wald(p["coef"], cov, df=df, note=note)


def variance_sre_adjusted(fit, data=None, r=None):
    return _variance_from_parts(fit.parts, fit.r_used if r is None else r)


def gamma_sre_adjusted(fit, data=None, r=None):
    """Null law of n tau_c(r) for a fixed r.

    Under the null n tau_c(r) = n beta_u' D Phi beta_u / E with
    sqrt(n) beta_u ~ N(0, Phi^{-1} V Phi^{-1}), so the weights are the
    eigenvalues of V^{1/2} sym(Phi^{-1} D) V^{1/2} / E. The X-block of D
    carries -r, and the weights may be of either sign.
    """
    r = fit.r_used if r is None else float(r)
    p = fit.parts
    ut = p["ut"]
    meat = ut.T @ (ut * (fit.residuals ** 2)[:, None]) / ut.shape[0]
    root = sqrt_psd(meat)
    pd = solve_pd(p["phi"], np.diag(_r_weights(p, r)))
    core = root @ (0.5 * (pd + pd.T)) @ root / p["E"]
    lam = sym_eigen(core).lambdas
    top = np.abs(lam).max()
    return WeightedChiSq(lam, signed=bool(lam.min() < -CLAMP_TOL * top))


@dataclass
class BootstrapResult:
    estimate: float
    draws: np.ndarray
    lower: float
    upper: float
    level: float
    failures: int


def bootstrap_sre_adjusted(data, r, alpha=0.05, reps=1000, seed=0):
    """Stratified nonparametric bootstrap of tau_c(r), r fixed or re-optimized.

    Resample b draws from its own Philox stream keyed by (seed, b); resamples
    that lose an arm in some stratum are skipped and counted.
    """
    z, y, x, labels = data.z, data.y, data.x, data.stratum
    groups = [np.flatnonzero(labels == s) for s in range(data.S)]
    est = _sre_adjusted_arrays(z, y, x, labels, r)[1]
    draws, failures = [], 0
    for b in range(reps):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, b])))
        rows = np.concatenate([g[rng.integers(0, g.size, g.size)] for g in groups])
        zb, lab = z[rows], labels[rows]
        if any(np.ptp(zb[lab == s]) == 0 for s in range(data.S)):
            failures += 1
            continue
        try:
            draws.append(_sre_adjusted_arrays(zb, y[rows], x[rows], lab, r)[1])
        except NumericalError:
            failures += 1
    draws = np.array(draws)
    lo, hi = np.quantile(draws, [alpha / 2, 1 - alpha / 2])
    return BootstrapResult(est, draws, float(lo), float(hi), 1 - alpha, failures)


def confidence_interval_sre_adjusted(fit, data, spec, wald_result=None, reps=1000, seed=0):
    """Analytic regimes for a fixed r; bootstrap percentile interval for r_opt."""
    if fit.r_opt_hat is not None:
        boot = bootstrap_sre_adjusted(data, OPT, spec.alpha, reps, seed)
        return ConfInterval(boot.lower, boot.upper, "BOOTSTRAP", boot.level,
                            f"stratified bootstrap percentile interval, {reps} resamples, "
                            f"seed {seed}, {boot.failures} skipped")
    w = wald_result if wald_result is not None else wald_sre_adjusted(fit)
    return _interval(fit.tau_c, data.n, lambda: variance_sre_adjusted(fit),
                     lambda: gamma_sre_adjusted(fit), w, spec)


# -- observational -----------------------------------------------------------

def fit_obs_adjusted(data, weights_source=None):
    """Weighted fit with (1, x) partialled out; without covariates this is the obs fit."""
    N = None if data.x is None else np.column_stack([np.ones(data.n), data.x])
    return obs.weighted_fit(data, weights_source, nuisance=N, tag="obs-adj")


wald_obs_adjusted = obs.wald_test_os
variance_obs_adjusted = obs.variance_normal_os
gamma_obs_adjusted = obs.gamma_null_os
confidence_interval_obs_adjusted = obs.confidence_interval_os
