"""Gaussian linear regression of a proposal variable on included variables.

This is the regression half of the No-Grouping model: the proposal channel
is explained by a subset of the currently included channels, with no class
dependence. Everything is estimated on the kept (untrimmed) rows only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionMismatch, Infeasible, RankDeficient
from .gaussian import LOG_2PI

# sigma^2 never drops below this fraction of the kept-response variance.
VARIANCE_FLOOR = 1e-12
NORMAL_EQ_RIDGE = 1e-10
DEFAULT_MAX_SUBSET = 20


@dataclass(frozen=True)
class RegressionFit:
    """Intercept, slopes and ML residual variance.

    ``subset`` indexes the columns of the candidate matrix the fit was
    selected from; ``coef[i]`` multiplies column ``subset[i]``.
    """

    subset: tuple
    intercept: float
    coef: NDArray
    variance: float
    loglik_on_kept: float
    n_kept: int

    @property
    def n_params(self) -> int:
        return regression_param_count(len(self.subset))

    @property
    def bic(self) -> float:
        return 2.0 * self.loglik_on_kept - self.n_params * np.log(self.n_kept)

    def design(self, candidates: NDArray) -> NDArray:
        """Pick this fit's predictor columns out of the candidate matrix."""
        candidates = np.asarray(candidates, dtype=float)
        if candidates.ndim == 1:
            candidates = candidates[:, None]
        return candidates[:, list(self.subset)]


def regression_param_count(subset_size: int) -> int:
    """Intercept + one slope per predictor + residual variance."""
    return int(subset_size) + 2


def _as_design(X, n) -> NDArray:
    if X is None:
        return np.empty((n, 0))
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise DimensionMismatch(f"{n} responses but {X.shape[0]} design rows")
    return X


def _ls(yk: NDArray, Xk: NDArray):
    """Least squares with intercept on already-restricted rows.

    Returns ``(intercept, coef, variance, loglik)``.
    """
    n, k = Xk.shape
    if n <= k + 1:
        raise Infeasible(f"{n} kept rows cannot support a regression on {k} predictors")
    y_mean = yk.mean()
    yc = yk - y_mean
    var_y = float(yc @ yc) / n
    if var_y <= 0.0:
        raise RankDeficient("response is constant on the kept rows")
    if k == 0:
        coef = np.empty(0)
        intercept = float(y_mean)
        resid = yc
    else:
        x_mean = Xk.mean(axis=0)
        Xc = Xk - x_mean
        coef, _, rank, _ = np.linalg.lstsq(Xc, yc, rcond=None)
        if rank < k:
            gram = Xc.T @ Xc
            scale = np.trace(gram) / k
            if not scale > 0.0:
                raise RankDeficient("every predictor is constant on the kept rows")
            gram[np.diag_indices(k)] += NORMAL_EQ_RIDGE * scale
            try:
                chol = np.linalg.cholesky(gram)
            except np.linalg.LinAlgError:
                raise RankDeficient("regression design is singular on the kept rows") from None
            coef = np.linalg.solve(chol.T, np.linalg.solve(chol, Xc.T @ yc))
        intercept = float(y_mean - x_mean @ coef)
        resid = yc - Xc @ coef
    rss = float(resid @ resid)
    variance = max(rss / n, VARIANCE_FLOOR * var_y)
    loglik = -0.5 * (n * (LOG_2PI + np.log(variance)) + rss / variance)
    return intercept, coef, variance, loglik


def fit_linear_gaussian(y, X, kept=None, subset=None) -> RegressionFit:
    """ML fit of ``y ~ N(alpha + X beta, sigma^2)`` on the kept rows.

    The variance uses the ML divisor N*. An empty ``X`` (or None) gives the
    intercept-only model.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    X = _as_design(X, n)
    kept = np.ones(n, dtype=bool) if kept is None else np.asarray(kept, dtype=bool)
    intercept, coef, variance, loglik = _ls(y[kept], X[kept])
    if subset is None:
        subset = tuple(range(X.shape[1]))
    return RegressionFit(
        subset=tuple(int(j) for j in subset), intercept=intercept, coef=coef,
        variance=variance, loglik_on_kept=loglik, n_kept=int(kept.sum()),
    )


def regression_log_density(fit: RegressionFit, y, X=None) -> NDArray:
    """Per-row ``log phi(y_n; alpha + beta' x_n, sigma^2)``.

    ``X`` holds the predictor columns in ``fit.subset`` order.
    """
    y = np.asarray(y, dtype=float)
    X = _as_design(X, y.shape[0])
    if X.shape[1] != len(fit.subset):
        raise DimensionMismatch(f"fit uses {len(fit.subset)} predictors, got {X.shape[1]} columns")
    resid = y - fit.intercept - X @ fit.coef
    return -0.5 * (LOG_2PI + np.log(fit.variance) + resid * resid / fit.variance)


def select_predictor_subset(y, candidates=None, kept=None, max_subset: int | None = None,
                            bic_tol: float = 0.0) -> RegressionFit:
    """Greedy BIC search for the predictors of ``y``.

    Forward steps add the candidate that raises the regression BIC
    ``2 loglik - (|r| + 2) log N*`` the most, while the gain exceeds
    ``bic_tol``. One backward pass then drops any predictor whose removal
    raises the BIC by more than ``bic_tol``. Candidates that make the design
    singular are skipped.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    C = _as_design(candidates, n)
    kept = np.ones(n, dtype=bool) if kept is None else np.asarray(kept, dtype=bool)
    yk, Ck = y[kept], C[kept]
    n_kept = yk.shape[0]
    log_n = np.log(n_kept)
    n_cand = C.shape[1]
    cap = min(n_cand, DEFAULT_MAX_SUBSET if max_subset is None else max_subset)

    def score(cols):
        fit = _ls(yk, Ck[:, cols])
        return 2.0 * fit[3] - regression_param_count(len(cols)) * log_n, fit

    current: list = []
    best_bic, best_fit = score(current)
    while len(current) < cap:
        step = None
        for j in range(n_cand):
            if j in current:
                continue
            try:
                bic, fit = score(current + [j])
            except (RankDeficient, Infeasible):
                continue
            if step is None or bic > step[0]:
                step = (bic, j, fit)
        if step is None or step[0] - best_bic <= bic_tol:
            break
        best_bic, best_fit = step[0], step[2]
        current.append(step[1])

    for j in list(current):
        if len(current) == 0:
            break
        trial = [c for c in current if c != j]
        try:
            bic, fit = score(trial)
        except (RankDeficient, Infeasible):
            continue
        if bic - best_bic > bic_tol:
            current, best_bic, best_fit = trial, bic, fit

    intercept, coef, variance, loglik = best_fit
    return RegressionFit(
        subset=tuple(current), intercept=intercept, coef=coef, variance=variance,
        loglik_on_kept=loglik, n_kept=n_kept,
    )
