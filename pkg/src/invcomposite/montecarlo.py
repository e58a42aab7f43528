"""Seeded simulation studies: data-generating processes, replication, summaries.

Replicate i draws from its own Philox stream keyed by SeedSequence((seed, i)),
so any subset of replicates can be run in any order or in parallel with
identical results.
"""

import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analysis
from .dataset import CIMethod, DesignSpec, StudyData
from .errors import InvalidSpec, InvCompositeError, StudyFailed
from .numkernel import sqrt_psd

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MAX_FAILURE_RATE = 0.01
MIN_REPS = 100


def _matrix(a, shape, name):
    m = np.asarray(a, dtype=float)
    if m.shape != shape:
        raise InvalidSpec(f"{name} must have shape {shape}", shape=list(m.shape))
    return m


def _check_psd(m, name):
    if m.size == 0:
        return
    if not np.allclose(m, m.T, atol=1e-12):
        raise InvalidSpec(f"{name} must be symmetric")
    if np.linalg.eigvalsh(m).min() < -1e-10 * max(np.abs(m).max(), 1.0):
        raise InvalidSpec(f"{name} must be positive semi-definite")


@dataclass
class DgpSpec:
    """Potential outcomes Y(0) = shift_s + B x + e, Y(1) = Y(0) + tau.

    ``design`` sets the assignment: ``cre`` draws z ~ Bernoulli(p); ``sre``
    fixes stratum sizes at round(pi_s n) and draws z ~ Bernoulli(p_s) within
    strata; ``obs`` draws z ~ Bernoulli(expit(alpha_0 + alpha' x)).
    """

    design: str
    n: int
    L: int
    tau: list
    outcome_cov: list
    K: int = 0
    S: int = 1
    stratum_probs: list | None = None
    treatment_probs: float | list = 0.5
    propensity_alpha: list | None = None
    covariate_cov: list | None = None
    x_loading: list | None = None
    stratum_shift: list | None = None
    seed: int = 0

    def __post_init__(self):
        if self.design not in ("cre", "sre", "obs"):
            raise InvalidSpec("dgp design must be cre, sre or obs", design=self.design)
        if self.n < 4 or self.L < 1 or self.K < 0 or self.S < 1:
            raise InvalidSpec("n >= 4, L >= 1, K >= 0 and S >= 1 are required")
        self._tau = _matrix(self.tau, (self.L,), "tau")
        self._sigma = _matrix(self.outcome_cov, (self.L, self.L), "outcome_cov")
        _check_psd(self._sigma, "outcome_cov")
        K, S = self.K, self.S
        self._sigma_x = (np.eye(K) if self.covariate_cov is None
                         else _matrix(self.covariate_cov, (K, K), "covariate_cov"))
        _check_psd(self._sigma_x, "covariate_cov")
        self._load = (np.zeros((self.L, K)) if self.x_loading is None
                      else _matrix(self.x_loading, (self.L, K), "x_loading"))
        self._pi = (np.full(S, 1.0 / S) if self.stratum_probs is None
                    else _matrix(self.stratum_probs, (S,), "stratum_probs"))
        if np.any(self._pi <= 0) or abs(self._pi.sum() - 1) > 1e-9:
            raise InvalidSpec("stratum_probs must be positive and sum to 1")
        p = np.atleast_1d(np.asarray(self.treatment_probs, dtype=float))
        self._p = np.full(S, p[0]) if p.size == 1 else _matrix(p, (S,), "treatment_probs")
        if np.any((self._p <= 0) | (self._p >= 1)):
            raise InvalidSpec("treatment probabilities must lie in (0, 1)")
        self._shift = (np.zeros((S, self.L)) if self.stratum_shift is None
                       else _matrix(self.stratum_shift, (S, self.L), "stratum_shift"))
        if self.design == "obs":
            if K == 0:
                raise InvalidSpec("obs dgp needs covariates (K >= 1)")
            self._alpha = (np.zeros(K + 1) if self.propensity_alpha is None
                           else _matrix(self.propensity_alpha, (K + 1,), "propensity_alpha"))
        if self.design != "sre" and S != 1:
            raise InvalidSpec("strata are only used by the sre dgp")
        self._fac = sqrt_psd(self._sigma)
        self._fac_x = sqrt_psd(self._sigma_x) if K else None
        counts = np.floor(self._pi * self.n).astype(int)
        rest = self.n - counts.sum()
        order = np.argsort(-(self._pi * self.n - counts), kind="stable")
        counts[order[:rest]] += 1
        self._counts = counts

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InvalidSpec("unknown dgp keys", keys=sorted(extra))
        return cls(**d)

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if not k.startswith("_")}

    # -- population target -----------------------------------------------------

    def assignment_variance(self):
        if self.design == "obs":
            return 0.25
        return float(np.sum(self._pi * self._p * (1 - self._p)))

    def residual_cov(self, adjusted):
        if adjusted or self.K == 0:
            return self._sigma
        return self._load @ self._sigma_x @ self._load.T + self._sigma

    def true_tau_c(self, adjusted=False, stratified_average=False):
        """Population composite effect q / (1 + q), q = v tau' Sigma_res^{-1} tau."""
        sig = self.residual_cov(adjusted)
        quad = float(self._tau @ np.linalg.solve(sig, self._tau)) if np.any(self._tau) else 0.0
        if stratified_average:
            q = self._p * (1 - self._p) * quad
            return float(np.sum(self._pi * q / (1 + q)))
        q = self.assignment_variance() * quad
        return q / (1 + q)


def rng_for(seed, index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def generate(spec, replicate_index):
    """Replicate ``replicate_index`` of ``spec`` as validated StudyData."""
    rng = rng_for(spec.seed, replicate_index)
    n, L, K = spec.n, spec.L, spec.K
    x = rng.standard_normal((n, K)) @ spec._fac_x if K else None
    if spec.design == "sre":
        strata = np.repeat(np.arange(spec.S), spec._counts)
    else:
        strata = np.zeros(n, dtype=int)
    if spec.design == "obs":
        eta = spec._alpha[0] + x @ spec._alpha[1:]
        prob = 1.0 / (1.0 + np.exp(-eta))
    else:
        prob = spec._p[strata]
    z = (rng.random(n) < prob).astype(float)
    y = spec._shift[strata] + rng.standard_normal((n, L)) @ spec._fac
    if K:
        y += x @ spec._load.T
    y += z[:, None] * spec._tau
    return StudyData.from_arrays(z, y, x, strata if spec.design == "sre" else None)


# -- studies ---------------------------------------------------------------------

@dataclass
class StudySpec:
    """What to compute on every replicate."""

    analysis: DesignSpec
    reps: int = 1000
    ci_methods: tuple = ()
    truth: float | None = None
    record_pit: bool = False
    record_variance: bool = False
    workers: int = 1

    def __post_init__(self):
        self.ci_methods = tuple(CIMethod(m).value for m in self.ci_methods)
        if self.ci_methods and self.analysis.inverse_logistic:
            raise InvalidSpec("the inverse-logistic composite is a null-only test; it has no intervals")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        ana = {k: d.pop(k) for k in ("design", "adjust_covariates", "alpha", "eta",
                                      "inverse_logistic", "r") if k in d}
        ci = d.pop("ci", [])
        ci = [ci] if isinstance(ci, str) else list(ci)
        known = {"reps", "truth", "record_pit", "record_variance", "workers"}
        extra = set(d) - known
        if extra:
            raise InvalidSpec("unknown study keys", keys=sorted(extra))
        if "design" not in ana:
            raise InvalidSpec("study needs a design")
        return cls(DesignSpec(**ana), ci_methods=tuple(ci), **d)

    def to_dict(self):
        a = self.analysis
        return {"design": a.design.value, "adjust_covariates": a.adjust_covariates,
                "alpha": a.alpha, "eta": a.eta, "inverse_logistic": a.inverse_logistic,
                "r": a.r, "ci": list(self.ci_methods), "reps": self.reps,
                "record_pit": self.record_pit, "record_variance": self.record_variance}


def default_truth(dgp, study):
    a = study.analysis
    if a.inverse_logistic:
        return None
    stratified_average = a.design.value == "sre-strat"
    return dgp.true_tau_c(a.adjust_covariates, stratified_average)


def replicate(dgp, study, index, truth):
    """One replicate as a flat record; failures are returned, not raised."""
    try:
        data = generate(dgp, index)
        a = analysis.run(data, study.analysis, seed=index)
        rec = {"index": index, "tau_c": a.tau_c, "wald_stat": a.wald.statistic,
               "wald_p": a.wald.p_value, "n": data.n}
        for method in study.ci_methods:
            spec = DesignSpec(**{**_spec_fields(study.analysis), "ci_method": method})
            ci = a.interval(spec)
            rec[f"ci_{method}"] = (ci.lower, ci.upper)
            if truth is not None:
                rec[f"covered_{method}"] = bool(ci.lower <= truth <= ci.upper)
        if study.record_variance:
            rec["variance"] = a.variance()
        if study.record_pit:
            rec["pit"] = a.pit()
        rec["checks"] = dict(getattr(a.fit, "checks", {}))
        return rec
    except InvCompositeError as exc:
        return {"index": index, "error": type(exc).__name__, "message": str(exc)}


def _spec_fields(spec):
    return {"design": spec.design, "adjust_covariates": spec.adjust_covariates,
            "alpha": spec.alpha, "eta": spec.eta, "inverse_logistic": spec.inverse_logistic,
            "r": spec.r}


def _chunk(args):
    dgp, study, indices, truth = args
    return [replicate(dgp, study, i, truth) for i in indices]


@dataclass
class SimSummary:
    replications: int
    failures: int
    failed: list
    truth: float | None
    alpha: float
    rejection_rate: float
    rejection_se: float
    mean_tau_c: float
    var_tau_c: float
    n_var_tau_c: float
    coverage: dict = field(default_factory=dict)
    mean_ci_length: dict = field(default_factory=dict)
    mean_variance: float | None = None
    ks_pit: float | None = None
    records: list = field(default_factory=list, repr=False)

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k != "records"}
        return d


def _rate(hits):
    r = float(np.mean(hits))
    return r, float(np.sqrt(r * (1 - r) / len(hits)))


def ks_uniform(u):
    """Kolmogorov distance of a sample of probability integral transforms from U(0,1)."""
    u = np.sort(np.asarray(u))
    m = u.size
    return float(max(np.max(np.arange(1, m + 1) / m - u), np.max(u - np.arange(m) / m)))


def summarize(records, study, truth):
    ok = [r for r in records if "error" not in r]
    bad = [r for r in records if "error" in r]
    if not ok:
        raise StudyFailed("every replicate failed", failures=len(bad))
    tc = np.array([r["tau_c"] for r in ok])
    n = ok[0]["n"]
    rej, rej_se = _rate(np.array([r["wald_p"] for r in ok]) < study.analysis.alpha)
    s = SimSummary(len(ok), len(bad), [{"index": r["index"], "error": r["error"]} for r in bad],
                   truth, study.analysis.alpha, rej, rej_se, float(tc.mean()),
                   float(tc.var(ddof=1)), float(n * tc.var(ddof=1)), records=records)
    for method in study.ci_methods:
        lo_hi = np.array([r[f"ci_{method}"] for r in ok])
        s.mean_ci_length[method] = float(np.mean(lo_hi[:, 1] - lo_hi[:, 0]))
        if truth is not None:
            cov, se = _rate(np.array([r[f"covered_{method}"] for r in ok]))
            s.coverage[method] = {"rate": cov, "se": se}
    if study.record_variance:
        s.mean_variance = float(np.mean([r["variance"] for r in ok]))
    if study.record_pit:
        s.ks_pit = ks_uniform([r["pit"] for r in ok])
    return s


def run_study(dgp, study, reps=None, workers=None):
    """Run ``reps`` replicates and summarize; raises StudyFailed past 1% failures."""
    reps = study.reps if reps is None else reps
    if reps < MIN_REPS:
        raise InvalidSpec(f"reps must be at least {MIN_REPS}", reps=reps)
    workers = study.workers if workers is None else workers
    truth = study.truth if study.truth is not None else default_truth(dgp, study)
    if workers <= 1:
        records = [replicate(dgp, study, i, truth) for i in range(reps)]
    else:
        chunks = np.array_split(np.arange(reps), workers * 4)
        with ProcessPoolExecutor(workers) as pool:
            parts = pool.map(_chunk, [(dgp, study, c.tolist(), truth) for c in chunks])
            records = [r for part in parts for r in part]
    records.sort(key=lambda r: r["index"])
    summary = summarize(records, study, truth)
    if summary.failures > MAX_FAILURE_RATE * reps:
        raise StudyFailed("too many replicates failed", failures=summary.failures, reps=reps,
                          summary=summary.to_dict())
    return summary


def load_config(path):
    """Read a TOML file with [dgp] and [study] tables."""
    with open(path, "rb") as fh:
        try:
            cfg = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise InvalidSpec("malformed TOML", reason=str(exc)) from None
    if "dgp" not in cfg or "study" not in cfg:
        raise InvalidSpec("config needs [dgp] and [study] tables")
    try:
        return DgpSpec.from_dict(cfg["dgp"]), StudySpec.from_dict(cfg["study"])
    except TypeError as exc:
        raise InvalidSpec("bad config", reason=str(exc)) from None
