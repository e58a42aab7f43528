"""The law of sum_l lambda_l * chi2_l(1) with independent components.

Nonnegative, moderately conditioned spectra use Ruben's expansion as a
mixture of central chi-square CDFs; its truncation error is bounded by the
mixing mass left out, so the series is cut once that mass is negligible.
Everything else goes through Imhof's inversion integral: the head by
adaptive Gauss-Kronrod quadrature and the slowly decaying oscillatory tail
by QUADPACK's Fourier-integral routine (QAWF), which needs no truncation.
"""

import math
import warnings

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import IntegrationFailure, NegativeSpectrum

CLAMP_TOL = 1e-10
DROP_TOL = 1e-12
TARGET_ERR = 1e-6
QUAD_EPS = 1e-9
QUANTILE_RTOL = 1e-8
SERIES_TOL = 1e-11
SERIES_MAX_TERMS = 5000
TINY_T = 1e-250


class WeightedChiSq:
    """Distribution of sum_l lambda_l Z_l^2 for iid standard normal Z_l."""

    def __init__(self, lambdas, signed=False):
        lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
        if lam.size == 0 or not np.all(np.isfinite(lam)):
            raise NegativeSpectrum("spectrum must be a finite non-empty vector")
        self.signed = bool(signed)
        if self.signed:
            top = np.abs(lam).max()
            if top <= 0:
                raise NegativeSpectrum("spectrum is identically zero")
            self.n_clamped = 0
            self.lambdas = lam[np.argsort(-np.abs(lam), kind="stable")]
            self.active = self.lambdas[np.abs(self.lambdas) >= DROP_TOL * top]
        else:
            top = lam.max()
            if top <= 0:
                raise NegativeSpectrum("spectrum has no positive weight", max_lambda=float(top))
            low = lam.min()
            if low < -CLAMP_TOL * top:
                raise NegativeSpectrum("spectrum has a materially negative weight",
                                       min_lambda=float(low), max_lambda=float(top))
            self.n_clamped = int(np.sum(lam < 0))
            self.lambdas = np.sort(np.clip(lam, 0.0, None))[::-1]
            self.active = self.lambdas[self.lambdas >= DROP_TOL * top]
        self._lam_list = [float(v) for v in self.active]
        self._lam_sum = float(self.active.sum())
        self._top = float(np.abs(self.active).max())
        self.nonnegative = bool(self.active.min() >= 0)
        self._mixture = None
        self._mixture_ready = False

    def __repr__(self):
        return f"WeightedChiSq({np.array2string(self.lambdas, precision=6)})"

    @property
    def mean(self):
        return float(self.lambdas.sum())

    @property
    def variance(self):
        return float(2 * np.sum(self.lambdas ** 2))

    def scaled(self, c):
        return WeightedChiSq(c * self.lambdas, signed=self.signed)

    # -- CDF -----------------------------------------------------------------

    def _chi2_mixture(self):
        """Ruben weights c_k and scale b with F(t) = sum_k c_k P(chi2_{L+2k} <= t/b).

        With b = lambda_min every c_k is nonnegative and sum_k c_k = 1, so the
        mass not yet accumulated bounds the truncation error. Returns None when
        the spectrum is too spread for a short series.
        """
        if self._mixture_ready:
            return self._mixture
        self._mixture_ready = True
        if not self.nonnegative:
            return None
        lam = self.active
        b = float(lam.min())
        g = 1.0 - b / lam
        gmax = float(g.max())
        if gmax > 0 and math.log(SERIES_TOL) / math.log(gmax) > SERIES_MAX_TERMS:
            return None
        log_c0 = 0.5 * float(np.sum(np.log(b / lam)))
        if log_c0 < -700:
            return None
        c = np.empty(SERIES_MAX_TERMS + 1)
        c[0] = math.exp(log_c0)
        powers = np.ones_like(g)
        gsum = np.empty(SERIES_MAX_TERMS + 1)
        total, k = c[0], 0
        while 1.0 - total > SERIES_TOL:
            k += 1
            if k > SERIES_MAX_TERMS:
                return None
            powers = powers * g
            gsum[k] = powers.sum()
            # c_k = (2k)^{-1} sum_{r<k} g_{k-r} c_r
            c[k] = float(gsum[k:0:-1] @ c[:k]) / (2 * k)
            total += c[k]
        half_df = 0.5 * lam.size + np.arange(k + 1)
        self._mixture = (c[:k + 1].copy(), half_df, b)
        return self._mixture

    def _cdf_scalar(self, t):
        if self.nonnegative and t < TINY_T * self._top:
            return 0.0
        mix = self._chi2_mixture()
        if mix is not None:
            c, half_df, b = mix
            val = float(c @ special.gammainc(half_df, 0.5 * t / b))
            return min(max(val, 0.0), 1.0)
        return self._imhof_cdf(t)

    def _imhof_cdf(self, t):
        lam = self._lam_list
        if abs(t) < TINY_T * self._top:
            # the first half-cycle would overflow; F(t) equals F(0) to ~1e-125
            t = 0.0
        w = 0.5 * t

        def phase(u):
            return 0.5 * sum(math.atan(v * u) for v in lam)

        def inv_rho(u):
            # 1 / (u prod (1 + v^2 u^2)^{1/4}) in log space; underflows to 0, never overflows
            log_rho = math.log(u) + 0.5 * sum(math.log(math.hypot(1.0, v * u)) for v in lam)
            return math.exp(-log_rho)

        def head(u):
            if u == 0.0:
                return 0.5 * (self._lam_sum - t)
            return math.sin(phase(u) - w * u) * inv_rho(u)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            if w == 0.0:
                total, err = integrate.quad(head, 0.0, math.inf, limit=500,
                                            epsabs=QUAD_EPS, epsrel=QUAD_EPS)
                err /= math.pi
            else:
                # past the cut the envelope is smooth and monotone; the
                # oscillation is carried by the cos/sin weights alone
                aw = abs(w)
                knee = 1.0 / self._top
                cut = max(knee, math.pi / aw)
                h, eh = integrate.quad(head, 0.0, knee, limit=500,
                                       epsabs=QUAD_EPS, epsrel=QUAD_EPS)
                if cut > knee:
                    # long, slowly decaying stretch: integrate on a log scale
                    h2, eh2 = integrate.quad(lambda s: head(math.exp(s)) * math.exp(s),
                                             math.log(knee), math.log(cut), limit=500,
                                             epsabs=QUAD_EPS, epsrel=QUAD_EPS)
                    h, eh = h + h2, eh + eh2
                ts, es = integrate.quad(lambda u: math.sin(phase(u)) * inv_rho(u), cut, math.inf,
                                        weight="cos", wvar=aw, limlst=200, epsabs=QUAD_EPS)
                tc, ec = integrate.quad(lambda u: math.cos(phase(u)) * inv_rho(u), cut, math.inf,
                                        weight="sin", wvar=aw, limlst=200, epsabs=QUAD_EPS)
                total = h + ts - (tc if w > 0 else -tc)
                err = (eh + es + ec) / math.pi
        if not math.isfinite(err) or err > TARGET_ERR:
            raise IntegrationFailure("CDF quadrature error estimate too large",
                                     t=float(t), error_estimate=float(err))
        val = 0.5 - total / math.pi
        return min(max(val, 0.0), 1.0)

    def cdf(self, t):
        """P(T <= t); accepts scalars or arrays."""
        if np.ndim(t) == 0:
            return self._cdf_scalar(float(t))
        t = np.asarray(t, dtype=float)
        return np.array([self._cdf_scalar(v) for v in t.ravel()]).reshape(t.shape)

    def sf(self, t):
        return 1.0 - self.cdf(t)

    # -- quantile --------------------------------------------------------------

    def quantile(self, p):
        """t with cdf(t) = p, found by Brent's method.

        A three-cumulant scaled chi-square supplies the starting point and a
        density for one Newton-sized jump, which usually yields a tight
        bracket. For nonnegative weights, lambda_max * chi2_1 <= T <=
        lambda_max * chi2_L stochastically, so those two quantiles bound the
        search.
        """
        if not 0 < p < 1:
            raise ValueError("p must lie in (0, 1)")
        if self.nonnegative:
            top = self.active[0]
            lo = top * stats.chi2.ppf(p, 1)
            if self.active.size == 1:
                return float(lo)
            hi = top * stats.chi2.ppf(p, self.active.size)
        else:
            lo, hi = -math.inf, math.inf
        guess, dens = self._cumulant_guess(p)
        guess = min(max(guess, lo), hi)

        def f(t):
            return self.cdf(t) - p

        fg = f(guess)
        if fg == 0:
            return float(guess)
        # overshoot the approximate Newton step so that one jump usually brackets
        jump = min(1.5 * abs(fg) / max(dens(guess), 1e-300), 10 * math.sqrt(self.variance))
        a = guess
        while True:
            b = min(a + jump, hi) if fg < 0 else max(a - jump, lo)
            fb = f(b)
            if (fb > 0) == (fg < 0) or fb == 0 or b in (lo, hi):
                break
            a, jump = b, 2 * jump
        if fb == 0 or (fb > 0) != (fg < 0):
            # exact hit, or the analytic bound reached without a sign change
            return float(b)
        x0, x1 = (a, b) if a < b else (b, a)
        xtol = 1e-12 * max(abs(x0), abs(x1), math.sqrt(self.variance))
        return float(optimize.brentq(f, x0, x1, xtol=xtol, rtol=QUANTILE_RTOL, maxiter=200))

    def _cumulant_guess(self, p):
        """Quantile and density of a shifted, scaled chi-square matching three cumulants."""
        lam = self.active
        c1 = self._lam_sum
        c2 = float(np.sum(lam ** 2))
        c3 = float(np.sum(lam ** 3))
        sd = math.sqrt(2 * c2)
        if abs(c3) <= 1e-8 * c2 ** 1.5:
            return c1 + sd * stats.norm.ppf(p), lambda t: stats.norm.pdf((t - c1) / sd) / sd
        h = c2 ** 3 / c3 ** 2
        sc = math.copysign(math.sqrt(c2 / h), c3)
        q = stats.chi2.ppf(p if sc > 0 else 1 - p, h)
        return c1 + sc * (q - h), lambda t: stats.chi2.pdf((t - c1) / sc + h, h) / abs(sc)

    # -- simulation ------------------------------------------------------------

    def sample(self, count, seed):
        """``count`` independent draws from a Philox stream keyed by ``seed``."""
        rng = np.random.Generator(np.random.Philox(seed))
        draws = np.empty(count)
        block = 1 << 16
        for start in range(0, count, block):
            m = min(block, count - start)
            g = rng.standard_normal((m, self.lambdas.size))
            draws[start:start + m] = (g * g) @ self.lambdas
        return draws

    def mc_cdf(self, t, count=1_000_000, seed=0):
        draws = np.sort(self.sample(count, seed))
        return np.searchsorted(draws, t, side="right") / count

    def mc_quantile(self, p, count=1_000_000, seed=0):
        return float(np.quantile(self.sample(count, seed), p))
