"""Trimmed maximum-likelihood Gaussian classifier (REDDA).

The fit keeps the ``N* = ceil(N (1 - gamma))`` labelled observations that
are most plausible under the model and ignores the rest. It is computed by
concentration steps: estimate on the kept rows, rank every row by its
log-likelihood contribution, keep the best N*, repeat. Each step can only
increase the trimmed log-likelihood, so the loop stops at a fixed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray
from scipy.stats import rankdata

from .errors import ClassCollapsed, DimensionMismatch, Infeasible, ReddaError
from .families import CovarianceFamily, GaussianClassParams, estimate_params
from .gaussian import class_sufficient_stats, log_sum_exp


@dataclass(frozen=True)
class FitConfig:
    max_iter: int = 100
    n_restarts: int = 10
    tol: float = 1e-8
    seed: int = 0

    def with_seed(self, seed: int) -> "FitConfig":
        return replace(self, seed=int(seed))


def trim_count(n: int, gamma: float) -> int:
    """``floor(n * gamma)``, robust to representation error (0.29 * 100 is 28.999...)."""
    if not 0.0 <= gamma < 0.5:
        raise ValueError(f"trimming level must lie in [0, 0.5), got {gamma}")
    t = n * gamma
    r = round(t)
    if abs(t - r) <= 1e-9 * max(1.0, t):
        t = r
    return int(math.floor(t))


def kept_count(n: int, gamma: float) -> int:
    """N* = ceil(n (1 - gamma)) = n - floor(n gamma)."""
    return n - trim_count(n, gamma)


def derive_seed(*entropy: int) -> int:
    """Fold a tuple of non-negative ints into one 32-bit seed."""
    return int(np.random.SeedSequence([int(e) for e in entropy]).generate_state(1)[0])


@dataclass(frozen=True)
class TrimmedFit:
    """Result of :func:`fit_redda`.

    ``traces[r]`` lists the trimmed log-likelihood after every concentration
    step of restart ``r`` (None for restarts discarded after a collapse).
    """

    params: GaussianClassParams
    kept: NDArray
    gamma: float
    trimmed_loglik: float
    iterations: int
    converged: bool
    n_star: int
    restart: int = 0
    traces: tuple = field(default=(), repr=False)

    @property
    def family(self) -> CovarianceFamily:
        return self.params.family

    @property
    def dim(self) -> int:
        return self.params.dim


def per_obs_contribution(params: GaussianClassParams, data: NDArray, labels: NDArray) -> NDArray:
    """``log tau_g(n) + log phi(x_n; mu_g(n), Sigma_g(n))`` for every row."""
    lj = params.log_joint(data)
    labels = np.asarray(labels)
    return lj[np.arange(lj.shape[0]), labels]


def elemental_subset(labels: NDArray, per_class: int, n_classes: int, rng) -> NDArray:
    """Random boolean mask holding ``per_class`` rows of every class (fewer if absent)."""
    labels = np.asarray(labels)
    mask = np.zeros(labels.shape[0], dtype=bool)
    for g in range(n_classes):
        idx = np.flatnonzero(labels == g)
        mask[rng.choice(idx, size=min(per_class, idx.size), replace=False)] = True
    return mask


def _top_rows(contrib: NDArray, n_star: int) -> NDArray:
    order = np.argsort(-contrib, kind="stable")
    mask = np.zeros(contrib.shape[0], dtype=bool)
    mask[order[:n_star]] = True
    return mask


def _estimate(data, labels, kept, n_classes, family):
    stats = class_sufficient_stats(data, labels, kept, n_classes)
    return estimate_params(stats, family)


def concentrate(data, labels, n_classes, family, n_star, kept, max_iter=100, tol=1e-8):
    """Run concentration steps from an initial kept mask.

    Returns ``(params, kept, loglik, iterations, converged, trace)``.
    """
    params = _estimate(data, labels, kept, n_classes, family)
    contrib = per_obs_contribution(params, data, labels)
    loglik = float(contrib[kept].sum())
    trace = [loglik] if kept.sum() == n_star else []
    iterations = 0
    converged = False
    while iterations < max_iter:
        new_kept = _top_rows(contrib, n_star)
        if np.array_equal(new_kept, kept):
            converged = True
            break
        iterations += 1
        new_params = _estimate(data, labels, new_kept, n_classes, family)
        contrib = per_obs_contribution(new_params, data, labels)
        new_loglik = float(contrib[new_kept].sum())
        comparable = bool(trace)
        params, kept = new_params, new_kept
        trace.append(new_loglik)
        small_change = comparable and abs(new_loglik - loglik) <= tol
        loglik = new_loglik
        if small_change:
            converged = True
            break
    return params, kept, loglik, iterations, converged, trace


def initial_masks(labels, n_classes, n_star, n_restarts, seed, dim=1):
    """All-rows start followed by ``n_restarts - 1`` random elemental starts.

    An elemental start holds ``dim + 1`` rows per class, the fewest that
    give a non-singular covariance. Small starts are less likely than
    N*-sized ones to already contain an outlier, so they explore more.
    """
    n = labels.shape[0]
    masks = [np.ones(n, dtype=bool)]
    if n_star < n:
        per_class = max(2, int(dim) + 1)
        for r in range(1, n_restarts):
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), r]))
            masks.append(elemental_subset(labels, per_class, n_classes, rng))
    return masks


def _check_inputs(data, labels):
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (data.shape[0],):
        raise DimensionMismatch(f"{data.shape[0]} rows but {labels.shape[0]} labels")
    if labels.min() < 0:
        raise ValueError("class labels must be non-negative indices")
    return data, labels


def fit_redda(data, labels, family="EEI", gamma: float = 0.0, config: FitConfig | None = None,
              n_classes: int | None = None) -> TrimmedFit:
    """Fit the trimmed Gaussian classifier.

    Parameters
    ----------
    data : array_like, shape (N, p)
    labels : array_like of int, shape (N,)
        Class indices ``0..G-1``.
    family : CovarianceFamily or str
    gamma : float
        Trimming level in ``[0, 0.5)``; ``floor(N gamma)`` rows are discarded.
    config : FitConfig, optional
    n_classes : int, optional
        G, when some classes might be absent from ``labels``.

    Raises
    ------
    Infeasible
        If ``N* < G (p + 1)``.
    ClassCollapsed, NotPositiveDefinite
        If every restart fails.
    """
    config = config or FitConfig()
    family = CovarianceFamily.parse(family)
    data, labels = _check_inputs(data, labels)
    n, p = data.shape
    G = int(labels.max()) + 1 if n_classes is None else int(n_classes)
    n_star = kept_count(n, gamma)
    if n_star < G * (p + 1):
        raise Infeasible(f"N*={n_star} kept rows cannot support {G} classes in {p} dimensions")

    best = None
    traces = []
    first_error = None
    for r, mask in enumerate(initial_masks(labels, G, n_star, config.n_restarts, config.seed, p)):
        try:
            params, kept, ll, its, conv, trace = concentrate(
                data, labels, G, family, n_star, mask, config.max_iter, config.tol
            )
        except ReddaError as exc:
            traces.append(None)
            first_error = first_error or exc
            continue
        traces.append(tuple(trace))
        if best is None or ll > best[2]:
            best = (params, kept, ll, its, conv, r)
    if best is None:
        raise first_error
    params, kept, ll, its, conv, r = best
    return TrimmedFit(
        params=params, kept=kept, gamma=float(gamma), trimmed_loglik=ll, iterations=its,
        converged=conv, n_star=n_star, restart=r, traces=tuple(traces),
    )


def _params(fit) -> GaussianClassParams:
    return fit.params if isinstance(fit, TrimmedFit) else fit


def predict_map(fit, test: NDArray):
    """MAP class assignment.

    Returns
    -------
    labels : ndarray of int, shape (M,)
        Ties go to the lowest class index.
    posterior : ndarray, shape (M, G)
    """
    params = _params(fit)
    test = np.asarray(test, dtype=float)
    if test.ndim == 1:
        test = test[None, :] if params.dim > 1 else test[:, None]
    lj = params.log_joint(test)
    norm = log_sum_exp(lj, axis=1)
    post = np.exp(lj - norm[:, None])
    post /= post.sum(axis=1, keepdims=True)
    return np.argmax(lj, axis=1), post


@dataclass(frozen=True)
class OutlierReport:
    """Marginal log-density per test unit; rank 1 is the least plausible."""

    log_density: NDArray
    rank: NDArray

    def lowest(self, k: int) -> NDArray:
        """Row indices of the ``k`` lowest-density units, most anomalous first."""
        return np.argsort(self.rank, kind="stable")[:k]


def marginal_log_density(fit, test: NDArray, selected=None) -> OutlierReport:
    """Log of the class mixture density ``sum_g tau_g phi(y; mu_g, Sigma_g)``.

    ``test`` may hold exactly the model's variables, or a wider matrix from
    which the ``selected`` columns are taken.
    """
    params = _params(fit)
    test = np.asarray(test, dtype=float)
    if test.ndim == 1:
        test = test[:, None]
    if selected is not None:
        selected = np.asarray(selected, dtype=int)
        if selected.shape[0] != params.dim:
            raise DimensionMismatch(
                f"model has {params.dim} variables but {selected.shape[0]} were listed as selected"
            )
        if test.shape[1] != params.dim:
            if selected.max(initial=-1) >= test.shape[1]:
                raise DimensionMismatch(f"selected column index out of range for {test.shape[1]} columns")
            test = test[:, selected]
    if test.shape[1] != params.dim:
        raise DimensionMismatch(f"model has {params.dim} variables, test data has {test.shape[1]} columns")
    scores = log_sum_exp(params.log_joint(test), axis=1)
    ranks = rankdata(scores, method="ordinal").astype(np.int64)
    return OutlierReport(log_density=scores, rank=ranks)
