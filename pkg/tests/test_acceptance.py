"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Seeds are fixed up front (criterion number times 1000 plus a design offset)
and never re-drawn.
"""

import time
from pathlib import Path

import numpy as np
import pytest
from scipy import interpolate, stats

from conftest import random_study, record
from invcomposite import analysis, cre, covadj, invlogit, obs, sre
from invcomposite import montecarlo as mc
from invcomposite.cli import main as cli_main
from invcomposite.dataset import DesignSpec, StudyData
from invcomposite.errors import NumericalError
from invcomposite.numkernel import logistic_mle
from invcomposite.wchi2 import WeightedChiSq

HERE = Path(__file__).parent
COV3 = [[1.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 1.0]]
LOAD3 = [[0.8, 0.0], [0.0, 0.6], [0.4, 0.4]]


def rel(a, b):
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    scale = max(np.abs(b).max(), np.abs(a).max(), 1e-300)
    return float(np.abs(a - b).max() / scale)


def labels_of(d):
    return None if d.stratum is None else np.asarray(d.stratum_labels, dtype=object)[d.stratum]


def with_y(d, y):
    return StudyData.from_arrays(d.z, y, d.x, labels_of(d), d.user_weights)


def lstsq_slopes(z, design, weights=None):
    if weights is not None:
        r = np.sqrt(weights)
        rz = z * (r if z.ndim == 1 else r[:, None])
        return np.linalg.lstsq(design * r[:, None], rz, rcond=None)[0]
    return np.linalg.lstsq(design, z, rcond=None)[0]


def resid(cols, design, weights=None):
    return cols - design @ lstsq_slopes(cols, design, weights)


# -- criterion 1 ----------------------------------------------------------------

IDENTITY_DESIGNS = ("cre", "sre-reg", "obs", "cre-adj", "sre-reg-adj", "obs-adj")


def draw_case(rng, design):
    S = int(rng.integers(1, 5)) if design.startswith("sre") else 1
    K = int(rng.integers(1, 4)) if design.endswith("adj") or design == "obs" else 0
    if design == "obs" and rng.random() < 0.3:
        K = 0
    L = int(rng.integers(1, 6))
    n = int(rng.integers(max(20, 4 * S + L + K + 8), 201))
    weights = design.startswith("obs") and K == 0
    d = random_study(rng, n, L, K=K, S=S, weights=weights)
    if design.startswith("sre") and S == 1:
        d = StudyData.from_arrays(d.z, d.y, d.x, np.zeros(n, dtype=int))
    return d


def identity_errors(design, d):
    """Package slopes vs an independent least-squares fit and the two closed forms."""
    n, L, z, y = d.n, d.L, d.z, d.y
    one = np.ones((n, 1))
    if design == "cre":
        f = cre.fit(d)
        ref = lstsq_slopes(z, np.column_stack([one, y]))[1:]
        t = z == 1
        tau = y[t].mean(0) - y[~t].mean(0)
        zb = z.mean()
        yc = y - y.mean(0)
        moment = zb * (1 - zb) * np.linalg.solve(yc.T @ yc / n, tau)
        sig = (np.cov(y[t].T, bias=True).reshape(L, L) / (1 - zb)
               + np.cov(y[~t].T, bias=True).reshape(L, L) / zb)
        si = np.linalg.solve(sig, tau)
        return f, [rel(f.beta, ref), rel(moment, ref), rel(si / (1 + tau @ si), ref)]
    if design == "sre-reg":
        f = sre.fit_regression(d)
        G = np.eye(d.S)[d.stratum]
        ref = lstsq_slopes(z, np.column_stack([G, y]))[d.S:]
        zt, yt = resid(z, G), resid(y, G)
        tau = lstsq_slopes(y, np.column_stack([G, z]))[-1]
        E = zt @ zt / n
        shares = np.bincount(d.stratum, weights=z) / np.bincount(d.stratum)
        pooled = np.sum(np.bincount(d.stratum) / n * shares * (1 - shares))
        moment = E * np.linalg.solve(yt.T @ yt / n, tau)
        return f, [rel(f.beta, ref), rel(moment, ref), abs(E - pooled) / E]
    if design == "obs":
        f = obs.fit(d)
        w = f.weights
        ref = lstsq_slopes(z, np.column_stack([one, y]), w)[1:]
        t = z == 1
        tau = np.average(y[t], 0, w[t]) - np.average(y[~t], 0, w[~t])
        zw = np.average(z, weights=w)
        yt = y - np.average(y, 0, w)
        phi_yy = (yt * w[:, None]).T @ yt / n
        phi_zz = np.sum(w * (z - zw) ** 2) / n
        moment = phi_zz * np.linalg.solve(phi_yy, tau)

        def wcov(rows):
            c = y[rows] - np.average(y[rows], 0, w[rows])
            return (c * w[rows, None]).T @ c / w[rows].sum()
        sig = wcov(t) / (1 - zw) + wcov(~t) / zw
        si = np.linalg.solve(sig, tau)
        return f, [rel(f.beta, ref), rel(moment, ref), rel(si / (1 + tau @ si), ref)]
    if design == "cre-adj":
        f = covadj.fit_cre_adjusted(d)
        N = np.column_stack([one, d.x])
        ref = lstsq_slopes(z, np.column_stack([N, y]))[-L:]
        zt, yt = resid(z, N), resid(y, N)
        tau = lstsq_slopes(y, np.column_stack([N, z]))[-1]
        moment = (zt @ zt / n) * np.linalg.solve(yt.T @ yt / n, tau)
        return f, [rel(f.beta, ref), rel(moment, ref)]
    if design == "sre-reg-adj":
        f = covadj.fit_sre_adjusted(d, r=0.0)
        G = np.eye(d.S)[d.stratum]
        u = np.column_stack([d.x, y])
        ref = lstsq_slopes(z, np.column_stack([G, u]))[d.S:]
        zt, ut = resid(z, G), resid(u, G)
        tau_u = lstsq_slopes(u, np.column_stack([G, z]))[-1]
        moment = (zt @ zt / n) * np.linalg.solve(ut.T @ ut / n, tau_u)
        pkg = np.concatenate([f.beta_x, f.beta])
        return f, [rel(pkg, ref), rel(moment, ref)]
    f = covadj.fit_obs_adjusted(d)
    w = f.weights
    N = one if d.x is None else np.column_stack([one, d.x])
    ref = lstsq_slopes(z, np.column_stack([N, y]), w)[-L:]
    zt, yt = resid(z, N, w), resid(y, N, w)
    tau = lstsq_slopes(y, np.column_stack([N, z]), w)[-1]
    moment = (np.sum(w * zt * zt) / n) * np.linalg.solve((yt * w[:, None]).T @ yt / n, tau)
    return f, [rel(f.beta, ref), rel(moment, ref)]


def generated_cases(seed, per_design=200):
    rng = np.random.default_rng(seed)
    cases, redraws = [], 0
    for design in IDENTITY_DESIGNS:
        got = 0
        while got < per_design:
            try:
                d = draw_case(rng, design)
                fit, errs = identity_errors(design, d)
            except NumericalError:
                redraws += 1  # e.g. a separated propensity fit on a tiny sample
                continue
            cases.append((design, d, fit, errs))
            got += 1
    return cases, redraws


@pytest.fixture(scope="module")
def identity_cases():
    t0 = time.perf_counter()
    cases, redraws = generated_cases(1000)
    return cases, redraws, time.perf_counter() - t0


def test_criterion_01_exact_identities(identity_cases):
    cases, redraws, elapsed = identity_cases
    worst = {}
    for design, _, _, errs in cases:
        worst[design] = max(worst.get(design, 0.0), max(errs))
    ok = all(v <= 1e-8 for v in worst.values()) and elapsed < 30
    detail = (f"{len(cases)} datasets ({redraws} separated draws replaced), worst rel err "
              + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f}s")
    record(1, ok, detail)
    assert ok, detail


# -- criterion 2 ----------------------------------------------------------------

ANALYSES = {
    "cre": DesignSpec("cre"), "cre-adj": DesignSpec("cre", adjust_covariates=True),
    "sre-reg": DesignSpec("sre-reg"), "sre-reg-adj": DesignSpec("sre-reg", adjust_covariates=True),
    "obs": DesignSpec("obs"), "obs-adj": DesignSpec("obs", adjust_covariates=True),
}


def random_transform(rng, L):
    q1, _ = np.linalg.qr(rng.standard_normal((L, L)))
    q2, _ = np.linalg.qr(rng.standard_normal((L, L)))
    return q1 @ np.diag(rng.uniform(0.3, 3.0, L)) @ q2


def test_criterion_02_bounds_and_invariance(identity_cases):
    cases, _, _ = identity_cases
    rng = np.random.default_rng(2000)
    t0 = time.perf_counter()
    out_of_range, worst_tc, worst_w, checked = [], 0.0, 0.0, 0
    for design, d, _, _ in cases:
        omega = random_transform(rng, d.L)
        d2 = with_y(d, d.y @ omega.T)
        specs = [ANALYSES[design]]
        if design in ("cre", "sre-reg"):
            specs.append(DesignSpec(design, inverse_logistic=True))
        if design == "sre-reg" and np.bincount(d.stratum).min() >= d.L + 2:
            specs.append(DesignSpec("sre-strat"))  # per-stratum fits need L+2 rows each
        for spec in specs:
            try:
                a = analysis.run(d, spec)
            except NumericalError:
                continue  # only the logistic variants can separate here
            b = analysis.run(d2, spec)
            checked += 1
            if a.label == "sre-reg-adj":
                f = a.fit
                full = float(f.parts["coef"] @ f.parts["tau_u"])
                if not 0 <= full < 1:
                    out_of_range.append((a.label, full))
            elif not a.label.endswith("logit") and not 0 <= a.tau_c < 1:
                # the logistic composite is a test statistic with no [0,1) bound
                out_of_range.append((a.label, a.tau_c))
            worst_tc = max(worst_tc, rel(b.tau_c, a.tau_c))
            worst_w = max(worst_w, rel(b.wald.statistic, a.wald.statistic))
    elapsed = time.perf_counter() - t0
    ok = not out_of_range and worst_tc <= 1e-8 and worst_w <= 1e-8 and elapsed < 30
    detail = (f"{checked} fits: tau_c outside [0,1): {len(out_of_range)}; invariance rel err "
              f"tau_c {worst_tc:.1e}, Wald {worst_w:.1e}; {elapsed:.1f}s")
    record(2, ok, detail)
    assert ok, detail


# -- criterion 3 ----------------------------------------------------------------

def pieces(fit_fn, wald_fn, var_fn, law_fn):
    f = fit_fn()
    return {"tau_c": f.tau_c, "wald": wald_fn(f).statistic,
            "V": None if var_fn is None else var_fn(f), "gamma": np.sort(law_fn(f).lambdas)}


def compare(a, b, keys):
    return max(rel(a[k], b[k]) for k in keys)


def test_criterion_03_reduction_chain():
    rng = np.random.default_rng(3000)
    t0 = time.perf_counter()
    worst = {}
    for _ in range(40):
        d = random_study(rng, int(rng.integers(30, 200)), int(rng.integers(1, 5)))
        n = d.n
        base = pieces(lambda: cre.fit(d), cre.wald_test, cre.variance_normal, cre.gamma_null)
        # obs with constant known weights; V differs by design (see notes), so it is not compared
        dw = StudyData.from_arrays(d.z, d.y, user_weights=np.full(n, 2.5))
        o = pieces(lambda: obs.fit(dw), obs.wald_test_os, None, obs.gamma_null_os)
        worst["obs-const-w=cre"] = max(worst.get("obs-const-w=cre", 0), compare(o, base, ["tau_c", "wald", "gamma"]))
        ds = StudyData.from_arrays(d.z, d.y, stratum=np.zeros(n, dtype=int))
        s = pieces(lambda: sre.fit_regression(ds), sre.wald_test_sr, sre.variance_normal_sr, sre.gamma_null_sr)
        worst["sre(S=1)=cre"] = max(worst.get("sre(S=1)=cre", 0), compare(s, base, ["tau_c", "wald", "V", "gamma"]))
        st = pieces(lambda: sre.fit_stratification(ds), sre.wald_test_strat, sre.variance_normal_strat,
                    sre.gamma_null_strat)
        worst["sre-strat(S=1)=cre"] = max(worst.get("sre-strat(S=1)=cre", 0),
                                          compare(st, base, ["tau_c", "wald", "V", "gamma"]))
        ca = pieces(lambda: covadj.fit_cre_adjusted(d), covadj.wald_cre_adjusted,
                    lambda f: covadj.variance_cre_adjusted(f, d), lambda f: covadj.gamma_cre_adjusted(f, d))
        worst["cre-adj(K=0)=cre"] = max(worst.get("cre-adj(K=0)=cre", 0),
                                        compare(ca, base, ["tau_c", "wald", "V", "gamma"]))
        oa = pieces(lambda: covadj.fit_obs_adjusted(dw), obs.wald_test_os, obs.variance_normal_os, obs.gamma_null_os)
        ob = pieces(lambda: obs.fit(dw), obs.wald_test_os, obs.variance_normal_os, obs.gamma_null_os)
        worst["obs-adj(K=0)=obs"] = max(worst.get("obs-adj(K=0)=obs", 0),
                                        compare(oa, ob, ["tau_c", "wald", "V", "gamma"]))
        d3 = random_study(rng, int(rng.integers(40, 200)), int(rng.integers(1, 5)), S=3)
        sa = pieces(lambda: covadj.fit_sre_adjusted(d3, 0.0), covadj.wald_sre_adjusted,
                    covadj.variance_sre_adjusted, covadj.gamma_sre_adjusted)
        sb = pieces(lambda: sre.fit_regression(d3), sre.wald_test_sr, sre.variance_normal_sr, sre.gamma_null_sr)
        worst["sre-adj(K=0)=sre"] = max(worst.get("sre-adj(K=0)=sre", 0),
                                        compare(sa, sb, ["tau_c", "wald", "V", "gamma"]))
    elapsed = time.perf_counter() - t0
    ok = all(v <= 1e-8 for v in worst.values()) and elapsed < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f}s"
    record(3, ok, detail)
    assert ok, detail


# -- Monte Carlo designs (criteria 4-7) --------------------------------------------

def dgp(kind, n, tau, seed, K=2):
    tau = list(tau)
    if kind == "cre":
        return mc.DgpSpec("cre", n, 3, tau, COV3, treatment_probs=0.4, seed=seed)
    if kind == "cre-x":
        return mc.DgpSpec("cre", n, 3, tau, COV3, K=K, x_loading=LOAD3, treatment_probs=0.4, seed=seed)
    if kind == "sre":
        return mc.DgpSpec("sre", n, 3, tau, COV3, S=3, stratum_probs=[0.5, 0.3, 0.2],
                          treatment_probs=[0.3, 0.5, 0.7],
                          stratum_shift=[[0, 0, 0], [1.0, -1.0, 0.5], [-0.5, 2.0, 0.0]], seed=seed)
    if kind == "sre-x":
        return mc.DgpSpec("sre", n, 3, tau, COV3, K=K, x_loading=LOAD3, S=3,
                          stratum_probs=[0.5, 0.3, 0.2], treatment_probs=[0.3, 0.5, 0.7],
                          stratum_shift=[[0, 0, 0], [1.0, -1.0, 0.5], [-0.5, 2.0, 0.0]], seed=seed)
    return mc.DgpSpec("obs", n, 3, tau, COV3, K=K, x_loading=LOAD3,
                      propensity_alpha=[0.2, 0.5, -0.4], seed=seed)


def study(design, reps, adjust=False, logit=False, **kw):
    return mc.StudySpec(DesignSpec(design, adjust_covariates=adjust, inverse_logistic=logit), reps=reps, **kw)


ESTIMATORS = {
    # label: (dgp kind, study design, adjust, logit)
    "cre": ("cre", "cre", False, False),
    "cre-adj": ("cre-x", "cre", True, False),
    "sre-reg": ("sre", "sre-reg", False, False),
    "sre-strat": ("sre", "sre-strat", False, False),
    "sre-reg-adj": ("sre-x", "sre-reg", True, False),
    "obs": ("obs", "obs", False, False),
    "obs-adj": ("obs", "obs", True, False),
    "cre-logit": ("cre", "cre", False, True),
    "sre-reg-logit": ("sre", "sre-reg", False, True),
}
SIZE_SET = ["cre", "sre-reg", "obs", "cre-adj", "obs-adj", "cre-logit", "sre-reg-logit"]
COVERAGE_SET = ["cre", "cre-adj", "sre-reg", "sre-strat", "sre-reg-adj", "obs", "obs-adj"]
SHAPE_SET = ["cre", "sre-reg", "obs", "cre-logit", "sre-reg-logit"]
NULL3 = (0.0, 0.0, 0.0)
ALT3 = (0.5, 0.0, -0.3)


def run(label, n, tau, reps, seed, **kw):
    kind, design, adjust, logit = ESTIMATORS[label]
    return mc.run_study(dgp(kind, n, tau, seed), study(design, reps, adjust, logit, **kw))


@pytest.mark.slow
def test_criterion_04_wald_size():
    t0 = time.perf_counter()
    rates = {}
    for i, label in enumerate(SIZE_SET):
        s = run(label, 1000, NULL3, 10_000, 4000 + i)
        rates[label] = (s.rejection_rate, s.failures)
    elapsed = time.perf_counter() - t0
    ok = all(abs(r - 0.05) <= 0.010 for r, _ in rates.values())
    detail = ", ".join(f"{k} {r:.4f}" + (f" ({f} failed)" if f else "") for k, (r, f) in rates.items())
    record(4, ok, detail + f"; {elapsed:.0f}s")
    assert ok, detail


@pytest.mark.slow
def test_criterion_05_normal_coverage():
    cov = {}
    for i, label in enumerate(COVERAGE_SET):
        s = run(label, 2000, ALT3, 2000, 5000 + i, ci_methods=("normal",))
        cov[label] = s.coverage["normal"]["rate"]
    ok = all(0.92 <= c <= 0.97 for c in cov.values())
    detail = ", ".join(f"{k} {c:.3f}" for k, c in cov.items())
    record(5, ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_criterion_06_chi2_and_two_step_coverage():
    cov = {}
    for i, label in enumerate(COVERAGE_SET):
        s = run(label, 1000, NULL3, 2000, 6000 + i, ci_methods=("chi2", "two-step"))
        cov[label] = (s.coverage["chi2"]["rate"], s.coverage["two-step"]["rate"])
    ok = all(0.93 <= c <= 0.97 and t >= 0.93 for c, t in cov.values())
    detail = ", ".join(f"{k} chi2 {c:.3f}/two-step {t:.3f}" for k, (c, t) in cov.items())
    record(6, ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_criterion_07_null_law_shape():
    ks = {}
    for i, label in enumerate(SHAPE_SET):
        s = run(label, 2000, NULL3, 2000, 7000 + i, record_pit=True)
        ks[label] = s.ks_pit
    ok = all(v <= 0.02 for v in ks.values())
    detail = "KS of fitted-law PIT vs U(0,1): " + ", ".join(f"{k} {v:.4f}" for k, v in ks.items())
    record(7, ok, detail)
    assert ok, detail


# -- criterion 8 ----------------------------------------------------------------

def exact_ks(law, draws):
    """Kolmogorov distance between the empirical CDF of ``draws`` and ``law``.

    The law's CDF is tabulated on a grid at empirical quantiles and
    interpolated monotonically (PCHIP); the interpolation error is checked
    at off-grid points and returned alongside.
    """
    x = np.sort(draws)
    m = x.size
    probs = np.concatenate([np.linspace(0, 1, 600)[1:-1], [1e-4, 1e-3, 1 - 1e-3, 1 - 1e-4]])
    grid = np.unique(np.concatenate([[0.0, x[-1] * 1.01], np.quantile(x, probs)]))
    F = law.cdf(grid)
    interp = interpolate.PchipInterpolator(grid, F)
    Fx = np.clip(interp(x), 0, 1)
    d = max(np.max(np.arange(1, m + 1) / m - Fx), np.max(Fx - np.arange(m) / m))
    mids = 0.5 * (grid[1:] + grid[:-1])[::23]
    interp_err = float(np.abs(interp(mids) - law.cdf(mids)).max())
    return float(d), interp_err


def test_criterion_08_weighted_chi2_engine():
    t0 = time.perf_counter()
    ts = np.concatenate([np.geomspace(1e-8, 1e-1, 8), np.linspace(0.2, 30, 40)])
    chi1 = float(np.abs(WeightedChiSq([1.0]).cdf(ts) - stats.chi2.cdf(ts, 1)).max())
    rng = np.random.default_rng(8000)
    worst_ks, worst_interp, worst_rt = 0.0, 0.0, 0.0
    for k in range(20):
        lam = rng.exponential(size=int(rng.integers(1, 9))) + 0.01
        law = WeightedChiSq(lam)
        d, ie = exact_ks(law, law.sample(10 ** 6, seed=8000 + k))
        worst_ks, worst_interp = max(worst_ks, d), max(worst_interp, ie)
        for p in (0.001, 0.025, 0.3, 0.5, 0.9, 0.975, 0.999):
            worst_rt = max(worst_rt, abs(law.cdf(law.quantile(p)) - p))
        for t in law.mean * np.array([0.2, 1.0, 3.0]):
            worst_rt = max(worst_rt, abs(law.quantile(law.cdf(t)) - t))
    elapsed = time.perf_counter() - t0
    ok = chi1 <= 1e-4 and worst_ks <= 0.002 and worst_rt <= 1e-6 and worst_interp < 1e-4 and elapsed < 60
    detail = (f"chi2(1) err {chi1:.1e}; max KS vs 1e6 draws {worst_ks:.5f} (interp err {worst_interp:.1e}); "
              f"round-trip {worst_rt:.1e}; {elapsed:.1f}s")
    record(8, ok, detail)
    assert ok, detail


# -- criterion 9 ----------------------------------------------------------------

@pytest.mark.slow
def test_criterion_09_logistic_mle():
    rng = np.random.default_rng(9000)
    worst_score = 0.0
    for _ in range(100):
        n = int(rng.integers(50, 2000))
        P = int(rng.integers(1, 5))
        X = np.column_stack([np.ones(n), rng.standard_normal((n, P))])
        coef = rng.normal(0, 0.6, P + 1)
        z = (rng.random(n) < 1 / (1 + np.exp(-X @ coef))).astype(float)
        fit = logistic_mle(X, z)
        worst_score = max(worst_score, float(np.abs(X.T @ (z - fit.probs) / n).max()))

    big = mc.DgpSpec("obs", 100_000, 1, [0.0], [[1.0]], K=1, propensity_alpha=[0.0, 0.5], seed=9001)
    alpha_hat = obs.fit_propensity(mc.generate(big, 0)).alpha
    alpha_err = float(np.abs(alpha_hat - [0.0, 0.5]).max())

    def median_gap(n, seed):
        spec = mc.DgpSpec("cre", n, 2, [0.0, 0.0], [[1.0, 0.3], [0.3, 1.0]], seed=seed)
        gaps = []
        for i in range(500):
            d = mc.generate(spec, i)
            f = invlogit.fit_logit(d)
            yc = d.y - d.y.mean(0)
            t = d.z == 1
            tau = d.y[t].mean(0) - d.y[~t].mean(0)
            gaps.append(np.sqrt(n) * np.linalg.norm(f.gamma - np.linalg.solve(yc.T @ yc / n, tau)))
        return float(np.median(gaps))

    g1, g16 = median_gap(1000, 9002), median_gap(16000, 9003)
    ok = worst_score <= 1e-8 and alpha_err <= 0.03 and g1 / g16 >= 1.5
    detail = (f"max score {worst_score:.1e}; |alpha_hat - alpha_0| {alpha_err:.4f}; "
              f"median sqrt(n)|gamma - S_yy^-1 tau| {g1:.4f} -> {g16:.4f} (x{g1 / g16:.2f})")
    record(9, ok, detail)
    assert ok, detail


# -- criterion 10 ---------------------------------------------------------------

@pytest.mark.slow
def test_criterion_10_optimal_r_variance_reduction():
    spec = mc.DgpSpec("sre", 2000, 2, [0.4, 0.2], [[1.0, 0.2], [0.2, 1.0]], K=1,
                      x_loading=[[2.0], [1.5]], S=3, stratum_probs=[0.4, 0.35, 0.25],
                      treatment_probs=[0.3, 0.5, 0.6], seed=10_000)
    t0, topt = [], []
    for i in range(2000):
        d = mc.generate(spec, i)
        t0.append(covadj.fit_sre_adjusted(d, 0.0).tau_c)
        topt.append(covadj.fit_sre_adjusted(d, "opt").tau_c)
    t0, topt = np.array(t0), np.array(topt)
    v0, vopt = t0.var(ddof=1), topt.var(ddof=1)
    # paired delta-method standard error of var(opt) - var(0)
    infl = (topt - topt.mean()) ** 2 - (t0 - t0.mean()) ** 2
    se = infl.std(ddof=1) / np.sqrt(infl.size)
    ok = vopt <= v0 - 3 * se
    detail = f"var r=0 {v0:.3e}, var r_opt {vopt:.3e}, MC SE of difference {se:.1e} ({(v0 - vopt) / se:.1f} SE)"
    record(10, ok, detail)
    assert ok, detail


# -- criterion 11 ---------------------------------------------------------------

def test_criterion_11_determinism(tmp_path, capsys):
    spec = HERE.parent / "scripts" / "configs" / "small_cre.toml"
    outs = [tmp_path / "a.json", tmp_path / "b.json"]
    codes = [cli_main(["simulate", "--spec", str(spec), "--out", str(p)]) for p in outs]
    sim_ok = codes == [0, 0] and outs[0].read_bytes() == outs[1].read_bytes()
    code = cli_main(["analyze", "--data", str(HERE / "data" / "four_rows.csv"), "--treatment", "z",
                     "--outcomes", "y1", "--design", "cre"])
    out = capsys.readouterr().out
    golden_ok = code == 0 and out == (HERE / "data" / "four_rows_cre.json").read_text()
    ok = sim_ok and golden_ok
    detail = f"simulate byte-identical: {sim_ok}; analyze golden file bit-exact: {golden_ok}"
    record(11, ok, detail)
    assert ok, detail
