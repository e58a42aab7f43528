"""Wald tests and the dual-regime confidence intervals shared by all designs."""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dataset import CIMethod
from .numkernel import inv_sqrt_psd, quadratic_stat, sym_eigen
from .wchi2 import WeightedChiSq


@dataclass
class WaldResult:
    statistic: float
    df: int
    p_value: float
    note: str = ""

    def to_dict(self):
        out = {"statistic": self.statistic, "df": self.df, "p": self.p_value}
        if self.note:
            out["note"] = self.note
        return out


@dataclass
class ConfInterval:
    lower: float
    upper: float
    method: str
    level: float
    regime_note: str = ""

    def contains(self, value):
        return self.lower <= value <= self.upper

    @property
    def length(self):
        return self.upper - self.lower

    def to_dict(self):
        return {"lower": self.lower, "upper": self.upper, "method": self.method,
                "level": self.level, "regime_note": self.regime_note}


def wald(beta, cov, df=None, note=""):
    """beta' cov^{-1} beta against chi2(df), df defaulting to len(beta)."""
    beta = np.atleast_1d(beta)
    stat = max(quadratic_stat(beta, cov), 0.0)
    df = beta.size if df is None else df
    return WaldResult(stat, int(df), float(stats.chi2.sf(stat, df)), note)


def wald_from_stat(stat, df, note=""):
    return WaldResult(float(stat), int(df), float(stats.chi2.sf(stat, df)), note)


def null_spectrum(scale, metric, meat):
    """Law with weights = eigenvalues of scale * metric^{-1/2} meat metric^{-1/2}."""
    half = inv_sqrt_psd(metric)
    return spectrum_of(scale * half @ meat @ half)


def spectrum_of(gamma):
    return WeightedChiSq(sym_eigen(gamma).lambdas)


def normal_interval(tau_c, variance, n, miss):
    if miss <= 0:
        return -np.inf, np.inf
    half = stats.norm.ppf(1 - miss / 2) * np.sqrt(max(variance, 0.0) / n)
    return tau_c - half, tau_c + half


def chi2_interval(tau_c, law, n, miss):
    if miss <= 0:
        return -np.inf, tau_c
    return tau_c - law.quantile(1 - miss / 2) / n, tau_c - law.quantile(miss / 2) / n


def confidence_interval(tau_c, n, variance, law, wald_result, spec):
    """Build the interval requested by ``spec.ci_method``.

    ``variance`` and ``law`` are zero-argument callables so that each regime
    only pays for the pieces it uses.
    """
    alpha = spec.alpha
    method = spec.ci_method
    if method is CIMethod.NORMAL:
        lo, hi = normal_interval(tau_c, variance(), n, alpha)
        return ConfInterval(lo, hi, "NORMAL", 1 - alpha, "normal regime (tau != 0)")
    if method is CIMethod.CHI2:
        lo, hi = chi2_interval(tau_c, law(), n, alpha)
        return ConfInterval(lo, hi, "CHI2", 1 - alpha, "weighted chi-square regime (tau = 0)")
    if method is CIMethod.UNION:
        nlo, nhi = normal_interval(tau_c, variance(), n, alpha)
        clo, chi = chi2_interval(tau_c, law(), n, alpha)
        return ConfInterval(min(nlo, clo), max(nhi, chi), "UNION", 1 - alpha,
                            "hull of normal and weighted chi-square intervals")
    eta = spec.pretest_level
    miss = alpha - eta
    if wald_result.p_value < eta:
        lo, hi = normal_interval(tau_c, variance(), n, miss)
        note = f"Wald pre-test rejected at level {eta:g}; normal regime"
    else:
        lo, hi = chi2_interval(tau_c, law(), n, miss)
        note = f"Wald pre-test did not reject at level {eta:g}; weighted chi-square regime"
    return ConfInterval(lo, hi, "TWO_STEP", 1 - miss, note)


def rel_diff(a, b):
    """Relative discrepancy max|a-b| / max(|a|, |b|), zero when both vanish."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
    if scale == 0:
        return 0.0
    return float(np.abs(a - b).max() / scale)
