"""Numerical primitives shared by every design.

Least squares goes through a QR factorization; sample moments use the 1/n
convention everywhere so that the exact finite-sample identities hold.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NearSingular, NoConvergence, NonPositiveWeight, RankDeficient, Separation

RANK_TOL = 1e-10
PSD_FLOOR = 1e-12
NEG_TOL = 1e-10
SEPARATION_BOUND = 30.0


@dataclass
class MomentSet:
    """Centered (or partialled) second moments of one fit."""

    s_yy: np.ndarray
    s_yz: np.ndarray
    s_zz: float
    means: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


@dataclass
class EigenSpectrum:
    lambdas: np.ndarray
    basis: np.ndarray


def _as_2d(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _qr_solve(X, Y, names=None):
    q, r = np.linalg.qr(X)
    d = np.abs(np.diag(r))
    if d.size and d.min() <= RANK_TOL * d.max():
        bad = [int(j) for j in np.flatnonzero(d <= RANK_TOL * d.max())]
        raise RankDeficient("design matrix is numerically rank deficient",
                            columns=bad if names is None else [names[j] for j in bad])
    return sla.solve_triangular(r, q.T @ Y)


def ols(response, predictors, intercept=True):
    """Least squares of ``response`` (n or n x m) on ``predictors``.

    Returns ``(coef, resid)``; with ``intercept`` the first coefficient row
    is the constant.
    """
    Y = np.asarray(response, dtype=float)
    X = _as_2d(predictors)
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    coef = _qr_solve(X, Y)
    return coef, Y - X @ coef


def wls(response, predictors, weights, intercept=True):
    """Weighted least squares with positive weights."""
    w = np.asarray(weights, dtype=float)
    if np.any(~(w > 0)):
        raise NonPositiveWeight("weights must be positive",
                                row=int(np.flatnonzero(~(w > 0))[0]))
    Y = np.asarray(response, dtype=float)
    X = _as_2d(predictors)
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    sw = np.sqrt(w)
    coef = _qr_solve(X * sw[:, None], Y * (sw if Y.ndim == 1 else sw[:, None]))
    return coef, Y - X @ coef


def partial_out(columns, design, weights=None):
    """Residuals of each column after (weighted) projection on ``design``."""
    A = np.asarray(columns, dtype=float)
    if weights is None:
        _, resid = ols(A, design, intercept=False)
    else:
        _, resid = wls(A, design, weights, intercept=False)
    return resid


def stratum_means(columns, labels, n_strata=None):
    """Per-stratum column means, shape (S, P)."""
    A = _as_2d(columns)
    labels = np.asarray(labels)
    S = int(labels.max()) + 1 if n_strata is None else n_strata
    counts = np.bincount(labels, minlength=S).astype(float)
    sums = np.zeros((S, A.shape[1]))
    np.add.at(sums, labels, A)
    return sums / counts[:, None]


def partial_out_strata(columns, labels):
    """Center each column within strata (projection off stratum indicators)."""
    A = np.asarray(columns, dtype=float)
    if labels is None:
        return A - A.mean(axis=0)
    means = stratum_means(A, labels)
    out = _as_2d(A) - means[np.asarray(labels)]
    return out if A.ndim == 2 else out[:, 0]


def sym_eigen(matrix):
    """Eigenpairs of a symmetric matrix, eigenvalues in descending order."""
    A = np.asarray(matrix, dtype=float)
    A = 0.5 * (A + A.T)
    try:
        lam, Q = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence("symmetric eigensolver did not converge", reason=str(exc)) from None
    order = np.argsort(lam)[::-1]
    return EigenSpectrum(lam[order], Q[:, order])


def _checked_spectrum(A):
    spec = sym_eigen(A)
    scale = max(np.abs(spec.lambdas).max(), np.finfo(float).tiny)
    low = spec.lambdas.min()
    if low < -NEG_TOL * scale or low < PSD_FLOOR * scale:
        raise NearSingular("matrix is not safely positive definite", min_eigenvalue=float(low))
    return spec


def inv_sqrt_psd(matrix):
    """Symmetric M with M A M = I for a positive definite A."""
    spec = _checked_spectrum(matrix)
    return (spec.basis / np.sqrt(spec.lambdas)) @ spec.basis.T


def sqrt_psd(matrix):
    """Symmetric square root of a positive semi-definite matrix."""
    spec = sym_eigen(matrix)
    lam = np.clip(spec.lambdas, 0.0, None)
    return (spec.basis * np.sqrt(lam)) @ spec.basis.T


def solve_pd(matrix, rhs):
    """Solve A X = B for symmetric positive definite A via Cholesky."""
    A = np.asarray(matrix, dtype=float)
    try:
        c = sla.cho_factor(0.5 * (A + A.T))
    except np.linalg.LinAlgError:
        raise NearSingular("matrix is not positive definite",
                           min_eigenvalue=float(np.linalg.eigvalsh(0.5 * (A + A.T)).min())) from None
    return sla.cho_solve(c, rhs)


def sandwich(bread, meat):
    """B^{-1} M B^{-1} for symmetric positive definite B."""
    half = solve_pd(bread, meat)
    return solve_pd(bread, half.T).T


def quadratic_stat(vec, cov):
    """vec' cov^{-1} vec, raising NearSingular when cov is not invertible."""
    vec = np.atleast_1d(np.asarray(vec, dtype=float))
    if not np.any(vec):
        return 0.0
    return float(vec @ solve_pd(cov, vec))


def outer_mean(a, b=None):
    """n^{-1} sum_i a_i b_i^T for row-stacked a, b."""
    a = _as_2d(a)
    b = a if b is None else _as_2d(b)
    return a.T @ b / a.shape[0]


@dataclass
class LogisticFit:
    coef: np.ndarray
    probs: np.ndarray
    score: np.ndarray
    info: np.ndarray
    converged: bool
    iterations: int


def _loglik(design, z, coef):
    eta = design @ coef
    return float(np.mean(z * eta - np.logaddexp(0.0, eta)))


def logistic_mle(design, z, max_iter=100, score_tol=1e-10, step_tol=1e-12):
    """Logistic regression of binary ``z`` on ``design`` (intercept included by caller).

    Plain Newton steps, each solved by weighted least squares through QR;
    the step is halved only when it lowers the log-likelihood. Coefficients
    beyond +-30 are read as (quasi-)separation.
    """
    X = np.asarray(design, dtype=float)
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    coef = np.zeros(X.shape[1])
    zbar = z.mean()
    # start from the intercept-only optimum when the first column is constant
    if np.all(X[:, 0] == X[0, 0]) and 0 < zbar < 1:
        coef[0] = np.log(zbar / (1 - zbar)) / X[0, 0]
    ll = _loglik(X, z, coef)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = 1.0 / (1.0 + np.exp(-(X @ coef)))
        score = X.T @ (z - p) / n
        if np.abs(score).max() <= score_tol:
            converged = True
            break
        v = p * (1 - p)
        if np.any(v <= 0):
            raise Separation("fitted probabilities reached 0 or 1", iteration=it)
        sv = np.sqrt(v)
        step = _qr_solve(X * sv[:, None], (z - p) / sv)
        t = 1.0
        while True:
            cand = coef + t * step
            new = _loglik(X, z, cand)
            if new >= ll or t < 1e-10:
                break
            t *= 0.5
        coef, ll = cand, new
        if np.abs(coef).max() > SEPARATION_BOUND:
            raise Separation("logistic coefficients diverge; outcome separates the treatment",
                             max_abs_coef=float(np.abs(coef).max()), iteration=it)
        if np.linalg.norm(t * step) <= step_tol:
            converged = True
            break
    if not converged:
        raise NoConvergence("logistic Newton iterations did not converge", iterations=it)
    p = 1.0 / (1.0 + np.exp(-(X @ coef)))
    score = X.T @ (z - p) / n
    # one polishing step: quadratic convergence takes the score to round-off
    sv = np.sqrt(p * (1 - p))
    cand = coef + _qr_solve(X * sv[:, None], (z - p) / sv)
    p_new = 1.0 / (1.0 + np.exp(-(X @ cand)))
    score_new = X.T @ (z - p_new) / n
    if np.abs(score_new).max() <= np.abs(score).max():
        coef, p, score = cand, p_new, score_new
    info = (X * (p * (1 - p))[:, None]).T @ X / n
    return LogisticFit(coef, p, score, info, converged, it)
