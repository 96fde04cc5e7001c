"""Multivariate normal primitives and per-class sufficient statistics.

All densities are handled on the log scale. Covariances are carried around
as lower Cholesky factors; nothing in here forms an explicit inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.special import logsumexp

from .errors import ClassCollapsed, DimensionMismatch, NotPositiveDefinite

LOG_2PI = float(np.log(2.0 * np.pi))

# Relative ridge added on the first failed factorization.
RIDGE_EPS = 1e-8
# Squared pivots at or below this fraction of trace/p count as failure.
PIVOT_FLOOR = 1e-10


@dataclass(frozen=True)
class SpdFactor:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Parameters
    ----------
    lower : ndarray, shape (p, p)
        Lower-triangular ``L`` with ``L @ L.T == matrix``.
    log_det : float
        ``log |matrix|``, i.e. twice the sum of ``log(diag(L))``.
    matrix : ndarray, shape (p, p)
        The matrix that was actually factored. Differs from the caller's
        input when the ridge fallback kicked in.
    ridged : bool
        Whether the ridge fallback was used.
    """

    lower: NDArray
    log_det: float
    matrix: NDArray
    ridged: bool = False

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def mahalanobis_sq(self, x: NDArray, mu: NDArray) -> NDArray:
        """Squared Mahalanobis distance of each row of ``x`` from ``mu``."""
        diff = np.atleast_2d(x) - mu
        z = solve_triangular(self.lower, diff.T, lower=True, check_finite=False)
        return np.einsum("ij,ij->j", z, z)


def _try_cholesky(matrix: NDArray, scale: float):
    try:
        lower = cholesky(matrix, lower=True, check_finite=False)
    except LinAlgError:
        return None
    d = np.diag(lower)
    if not np.all(np.isfinite(d)) or np.min(d) ** 2 <= PIVOT_FLOOR * scale:
        return None
    return lower


def cholesky_spd(matrix: NDArray) -> SpdFactor:
    """Factor a symmetric positive definite matrix.

    The input is symmetrized by averaging with its transpose. If the first
    attempt fails, ``RIDGE_EPS * trace / p`` is added to the diagonal and the
    factorization is retried once.

    Raises
    ------
    NotPositiveDefinite
        If the ridged matrix still cannot be factored, or the matrix has a
        non-positive trace.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    a = 0.5 * (a + a.T)
    p = a.shape[0]
    scale = float(np.trace(a)) / p
    if not np.isfinite(scale) or scale <= 0.0:
        raise NotPositiveDefinite(f"matrix has non-positive trace ({scale * p:g})")
    ridged = False
    lower = _try_cholesky(a, scale)
    if lower is None:
        a = a + RIDGE_EPS * scale * np.eye(p)
        ridged = True
        lower = _try_cholesky(a, scale)
        if lower is None:
            raise NotPositiveDefinite("covariance is singular even after ridge regularization")
    log_det = 2.0 * float(np.sum(np.log(np.diag(lower))))
    return SpdFactor(lower=lower, log_det=log_det, matrix=a, ridged=ridged)


def log_mvn_density(x: NDArray, mu: NDArray, sigma: SpdFactor) -> NDArray | float:
    """Log density of ``N(mu, Sigma)`` at ``x``.

    ``x`` may be a single point of length p or an (n, p) array; the return
    value is a float or a length-n array accordingly.
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    p = sigma.dim
    if x2.shape[1] != p or mu.shape != (p,):
        raise DimensionMismatch(
            f"point dimension {x2.shape[1]}, mean length {mu.shape}, covariance dimension {p}"
        )
    out = -0.5 * (p * LOG_2PI + sigma.log_det + sigma.mahalanobis_sq(x2, mu))
    return float(out[0]) if single else out


def log_sum_exp(values, axis=None):
    """``log(sum(exp(values)))`` computed without overflow.

    Returns ``-inf`` when every input is ``-inf``.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("log_sum_exp of an empty array")
    return logsumexp(values, axis=axis)


@dataclass(frozen=True)
class ClassStats:
    """Kept-row counts, means and centered scatter matrices per class.

    Attributes
    ----------
    counts : ndarray of int, shape (G,)
    means : ndarray, shape (G, p)
    scatters : ndarray, shape (G, p, p)
        ``sum_n (x_n - mean_g)(x_n - mean_g)'`` over kept rows of class g.
    pooled : ndarray, shape (p, p)
        Sum of the per-class scatters.
    """

    counts: NDArray
    means: NDArray
    scatters: NDArray
    pooled: NDArray

    @property
    def n_kept(self) -> int:
        return int(self.counts.sum())

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def class_sufficient_stats(
    data: NDArray, labels: NDArray, kept: NDArray | None = None, n_classes: int | None = None
) -> ClassStats:
    """Per-class means and scatters over the kept rows.

    Parameters
    ----------
    data : ndarray, shape (N, p)
    labels : ndarray of int, shape (N,)
        Class indices in ``0..G-1``.
    kept : ndarray of bool, shape (N,), optional
        Rows entering the statistics; all rows when omitted.
    n_classes : int, optional
        G; inferred as ``labels.max() + 1`` when omitted.

    Raises
    ------
    ClassCollapsed
        If some class has fewer than two kept rows.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    labels = np.asarray(labels)
    if kept is None:
        kept = np.ones(data.shape[0], dtype=bool)
    G = int(labels.max()) + 1 if n_classes is None else n_classes
    p = data.shape[1]
    counts = np.zeros(G, dtype=np.int64)
    means = np.zeros((G, p))
    scatters = np.zeros((G, p, p))
    for g in range(G):
        xg = data[kept & (labels == g)]
        n = xg.shape[0]
        if n < 2:
            raise ClassCollapsed(f"class {g} has {n} kept observation(s); at least 2 are required")
        counts[g] = n
        mean = xg.mean(axis=0)
        centered = xg - mean
        means[g] = mean
        scatters[g] = centered.T @ centered
    pooled = scatters.sum(axis=0)
    return ClassStats(counts=counts, means=means, scatters=scatters, pooled=pooled)
