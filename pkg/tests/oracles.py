"""Reference implementations used as test oracles.

These are written directly from the model definitions, share no code with
the package, and favour clarity over speed.
"""

import itertools

import numpy as np
from scipy.stats import multivariate_normal

COV_TERMS = {
    "EII": lambda G, p: 1,
    "VII": lambda G, p: G,
    "EEI": lambda G, p: p,
    "VVI": lambda G, p: G * p,
    "EEE": lambda G, p: p * (p + 1) // 2,
    "VVV": lambda G, p: G * p * (p + 1) // 2,
}


def n_params(family, G, p):
    return (G - 1) + G * p + COV_TERMS[family](G, p)


def mle(data, labels, G, family):
    """Closed-form ML estimates ``(tau, mu, covariances)`` on all given rows."""
    N, p = data.shape
    tau = np.array([np.mean(labels == g) for g in range(G)])
    mu = np.stack([data[labels == g].mean(axis=0) for g in range(G)])
    resid = data - mu[labels]
    covs = []
    for g in range(G):
        rg = resid[labels == g]
        ng = rg.shape[0]
        if family == "EII":
            covs.append(np.sum(resid**2) / (N * p) * np.eye(p))
        elif family == "VII":
            covs.append(np.sum(rg**2) / (ng * p) * np.eye(p))
        elif family == "EEI":
            covs.append(np.diag(np.sum(resid**2, axis=0) / N))
        elif family == "VVI":
            covs.append(np.diag(np.sum(rg**2, axis=0) / ng))
        elif family == "EEE":
            covs.append(resid.T @ resid / N)
        else:
            covs.append(rg.T @ rg / ng)
    return tau, mu, np.stack(covs)


def classifier_loglik(data, labels, G, family):
    """Maximized complete-data log-likelihood of a labelled Gaussian model."""
    tau, mu, covs = mle(data, labels, G, family)
    total = 0.0
    for n in range(data.shape[0]):
        g = labels[n]
        total += np.log(tau[g]) + multivariate_normal(mu[g], covs[g]).logpdf(data[n])
    return float(total)


def exhaustive_trimmed_max(data, labels, G, family, n_trim):
    """Best trimmed log-likelihood over every choice of ``n_trim`` discarded rows."""
    N = data.shape[0]
    best = -np.inf
    for drop in itertools.combinations(range(N), n_trim):
        keep = np.setdiff1d(np.arange(N), drop)
        counts = np.bincount(labels[keep], minlength=G)
        if counts.min() < data.shape[1] + 1:
            continue
        best = max(best, classifier_loglik(data[keep], labels[keep], G, family))
    return best


def regression_loglik(y, X):
    """ML Gaussian linear regression with intercept, via normal equations."""
    n = y.shape[0]
    D = np.column_stack([np.ones(n), X]) if X.size else np.ones((n, 1))
    beta = np.linalg.solve(D.T @ D, D.T @ y)
    rss = float(np.sum((y - D @ beta) ** 2))
    s2 = rss / n
    return -0.5 * n * (np.log(2 * np.pi * s2) + 1.0)


def best_regression_bic(y, X):
    """Highest regression BIC over every subset of the columns of X."""
    n, k = X.shape
    best = (-np.inf, ())
    for size in range(k + 1):
        for subset in itertools.combinations(range(k), size):
            ll = regression_loglik(y, X[:, list(subset)])
            bic = 2 * ll - (size + 2) * np.log(n)
            if bic > best[0]:
                best = (bic, subset)
    return best


def greedy_regression_bic(y, X):
    """Forward selection by regression BIC, then one backward pass.

    Returns ``(bic, subset)``; the subset lists columns in the order added.
    """
    n, k = X.shape

    def bic(cols):
        return 2 * regression_loglik(y, X[:, cols]) - (len(cols) + 2) * np.log(n)

    current = []
    best = bic(current)
    while len(current) < k:
        trials = [(bic(current + [j]), j) for j in range(k) if j not in current]
        top = max(t[0] for t in trials)
        j = next(j for b, j in trials if b == top)
        if top <= best:
            break
        current, best = current + [j], top
    for j in list(current):
        trial = [c for c in current if c != j]
        b = bic(trial)
        if b > best:
            current, best = trial, b
    return best, tuple(current)


def plain_bic_grouping(data, labels, G, variables, family):
    X = data[:, list(variables)]
    ll = classifier_loglik(X, labels, G, family)
    return 2 * ll - n_params(family, G, len(variables)) * np.log(data.shape[0])


def plain_bic_no_grouping(data, labels, G, included, proposal, family):
    """BIC of the class model on ``included`` (label proportions alone when
    empty) plus the greedily chosen regression of ``proposal``.

    Returns ``(bic, regressors)``.
    """
    N = data.shape[0]
    included = list(included)
    if included:
        cls = 2 * classifier_loglik(data[:, included], labels, G, family)
        cls -= n_params(family, G, len(included)) * np.log(N)
    else:
        counts = np.bincount(labels, minlength=G)
        cls = 2 * float(np.sum(counts * np.log(counts / N))) - (G - 1) * np.log(N)
    reg, subset = greedy_regression_bic(data[:, proposal], data[:, included])
    return cls + reg, tuple(included[j] for j in subset)
