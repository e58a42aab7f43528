"""One entry point from (data, design spec) to fit, tests, intervals and report."""

from dataclasses import dataclass, field

import numpy as np

from . import covadj, cre, invlogit, obs, sre
from .dataset import Design
from .errors import IntegrationFailure
from .inference import confidence_interval

SCHEMA_VERSION = "1.0"
MC_DRAWS = 1_000_000


class _SampledLaw:
    """Quantiles from simulation, used when quadrature cannot certify its error."""

    def __init__(self, law, seed):
        self.law = law
        self.draws = np.sort(law.sample(MC_DRAWS, seed))
        self.lambdas = law.lambdas
        self.n_clamped = law.n_clamped

    def quantile(self, p):
        return float(np.quantile(self.draws, p))

    def cdf(self, t):
        return np.searchsorted(self.draws, t, side="right") / self.draws.size


@dataclass
class Analysis:
    """A fitted design with lazily evaluated inference pieces."""

    label: str
    fit: object
    n: int
    wald: object
    variance_fn: object = None
    law_fn: object = None
    interval_override: object = None
    warnings: list = field(default_factory=list)
    mc_seed: int = 0
    _variance: float | None = None
    _law: object = None

    @property
    def tau_c(self):
        return self.fit.tau_c

    def variance(self):
        if self._variance is None:
            self._variance = self.variance_fn()
        return self._variance

    def law(self):
        if self._law is None:
            law = self.law_fn()
            if law.n_clamped:
                self.warnings.append(f"{law.n_clamped} slightly negative null-law weights clamped to 0")
            self._law = law
        return self._law

    def law_for_quantiles(self):
        law = self.law()
        if isinstance(law, _SampledLaw):
            return law
        try:
            law.quantile(0.5)
        except IntegrationFailure:
            self.warnings.append(f"mc-approximated: null-law quantiles from {MC_DRAWS} draws")
            self._law = _SampledLaw(law, self.mc_seed)
        return self._law

    @property
    def supports_interval(self):
        return self.variance_fn is not None or self.interval_override is not None

    def interval(self, spec):
        if self.interval_override is not None:
            return self.interval_override(spec)
        if self.variance_fn is None:
            return None
        return confidence_interval(self.tau_c, self.n, self.variance,
                                   self.law_for_quantiles, self.wald, spec)

    def pit(self):
        """Fitted null-law CDF at n * tau_c."""
        return float(self.law().cdf(self.n * self.tau_c))


def run(data, spec, seed=0, boot_reps=1000):
    """Fit ``data`` under ``spec`` and return an :class:`Analysis`."""
    spec.check(data)
    d = spec.design
    if spec.inverse_logistic:
        stratified = d is Design.SRE_REGRESSION
        f = invlogit.fit_logit(data, stratified)
        return Analysis("sre-reg-logit" if stratified else "cre-logit", f, data.n,
                        invlogit.wald_logit(f), None,
                        lambda: invlogit.null_spectrum_logit(f), mc_seed=seed)
    if d is Design.CRE and not spec.adjust_covariates:
        f = cre.fit(data)
        return Analysis("cre", f, data.n, cre.wald_test(f),
                        lambda: cre.variance_normal(f), lambda: cre.gamma_null(f), mc_seed=seed)
    if d is Design.CRE:
        f = covadj.fit_cre_adjusted(data)
        return Analysis("cre-adj", f, data.n, covadj.wald_cre_adjusted(f),
                        lambda: covadj.variance_cre_adjusted(f, data),
                        lambda: covadj.gamma_cre_adjusted(f, data), mc_seed=seed)
    if d is Design.SRE_REGRESSION and not spec.adjust_covariates:
        f = sre.fit_regression(data)
        return Analysis("sre-reg", f, data.n, sre.wald_test_sr(f),
                        lambda: sre.variance_normal_sr(f), lambda: sre.gamma_null_sr(f),
                        mc_seed=seed)
    if d is Design.SRE_REGRESSION:
        f = covadj.fit_sre_adjusted(data, spec.r)
        a = Analysis("sre-reg-adj", f, data.n, covadj.wald_sre_adjusted(f), mc_seed=seed)
        if f.r_opt_hat is None:
            a.variance_fn = lambda: covadj.variance_sre_adjusted(f)
            a.law_fn = lambda: covadj.gamma_sre_adjusted(f)
        else:
            a.interval_override = lambda s: covadj.confidence_interval_sre_adjusted(
                f, data, s, reps=boot_reps, seed=seed)
        return a
    if d is Design.SRE_STRATIFICATION:
        f = sre.fit_stratification(data)
        return Analysis("sre-strat", f, data.n, sre.wald_test_strat(f),
                        lambda: sre.variance_normal_strat(f), lambda: sre.gamma_null_strat(f),
                        mc_seed=seed)
    if spec.adjust_covariates:
        f = covadj.fit_obs_adjusted(data)
    else:
        f = obs.fit(data)
    return Analysis(f.design, f, data.n, obs.wald_test_os(f),
                    lambda: obs.variance_normal_os(f), lambda: obs.gamma_null_os(f),
                    warnings=list(f.warnings), mc_seed=seed)


# -- report --------------------------------------------------------------------

def _fit_fields(a):
    f = a.fit
    out = {}
    if a.label == "sre-strat":
        out["per_stratum"] = [
            {"label": lab, "n": int(size), "beta": fs.beta, "tau": fs.tau, "tau_c": fs.tau_c}
            for lab, size, fs in zip(f.stratum_labels, f.stratum_sizes, f.strata)]
        out["checks"] = {f"stratum {lab}: {k}": v
                         for lab, fs in zip(f.stratum_labels, f.strata)
                         for k, v in fs.checks.items()}
        out["notes"] = [f"stratum {lab}: {note}"
                        for lab, fs in zip(f.stratum_labels, f.strata) for note in fs.notes]
        return out
    out["beta"] = f.gamma if a.label.endswith("logit") else f.beta
    out["tau"] = f.tau
    out["checks"] = dict(f.checks)
    out["notes"] = list(f.notes)
    if a.label == "sre-reg-adj":
        out.update(beta_x=f.beta_x, tau_x=f.tau_x, tau_c_y=f.tau_c_y, tau_c_x=f.tau_c_x,
                   r_used=f.r_used, r_opt_hat=f.r_opt_hat)
    if a.label.startswith("obs"):
        out["weights_source"] = "user" if f.weights_known else "estimate"
        if f.propensity is not None:
            out["propensity"] = {"alpha": f.propensity.alpha,
                                 "iterations": f.propensity.iterations,
                                 "min_score": float(f.propensity.scores.min()),
                                 "max_score": float(f.propensity.scores.max())}
    if a.label.endswith("logit"):
        out["converged"] = f.converged
        out["iterations"] = f.iterations
    return out


def report(data, spec, a=None, seed=0):
    """Plain-dict report; deterministic for identical inputs."""
    a = run(data, spec, seed=seed) if a is None else a
    fields = _fit_fields(a)
    rep = {
        "schema_version": SCHEMA_VERSION,
        "design": spec.design.value,
        "estimator": a.label,
        "n": data.n, "L": data.L, "K": data.K, "S": data.S,
        "outcomes": list(data.outcome_names),
        "covariates": list(data.covariate_names),
        "alpha": spec.alpha,
    }
    if data.stratum is not None:
        rep["strata"] = list(data.stratum_labels)
    rep.update({k: fields[k] for k in fields if k not in ("checks", "notes")})
    rep["tau_c"] = a.tau_c
    rep["wald"] = a.wald.to_dict()
    ci = a.interval(spec)
    rep["ci"] = None if ci is None else ci.to_dict()
    if a.variance_fn is not None:
        rep["normal_variance"] = a.variance()
    if a.law_fn is not None:
        law = a.law()
        rep["null_weights"] = law.lambdas
    rep["warnings"] = list(a.warnings)
    rep["notes"] = fields.get("notes", [])
    if ci is None and spec.inverse_logistic:
        rep["notes"].append("no confidence interval: the statistic is a null test only")
    rep["identity_checks"] = fields.get("checks", {})
    return rep
