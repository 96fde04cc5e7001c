"""Closed-form members of the EDDA covariance family.

Six parsimonious structures are supported, from spherical with a common
volume (EII) to unconstrained per-class covariances (VVV). The first letter
says whether the volume is shared (E) or varies (V) across classes, the
second the shape, the third the orientation (I means axis-aligned).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionMismatch
from .gaussian import LOG_2PI, ClassStats, SpdFactor, cholesky_spd


class CovarianceFamily(str, enum.Enum):
    EII = "EII"
    VII = "VII"
    EEI = "EEI"
    VVI = "VVI"
    EEE = "EEE"
    VVV = "VVV"

    @property
    def shared(self) -> bool:
        """True when every class uses the same covariance matrix."""
        return self.value[0] == "E"

    @property
    def diagonal(self) -> bool:
        return self.value[2] == "I"

    @classmethod
    def parse(cls, code) -> "CovarianceFamily":
        if isinstance(code, cls):
            return code
        try:
            return cls(str(code).upper())
        except ValueError:
            raise ValueError(
                f"unknown covariance family {code!r}; expected one of {[f.value for f in cls]}"
            ) from None


# Tie-break order used by select_family.
FAMILY_ORDER = tuple(CovarianceFamily)


def estimate_covariances(stats: ClassStats, family, n_total_kept: int | None = None) -> NDArray:
    """Maximum-likelihood class covariances under a family constraint.

    Parameters
    ----------
    stats : ClassStats
    family : CovarianceFamily or str
    n_total_kept : int, optional
        N*, defaults to ``stats.n_kept``.

    Returns
    -------
    ndarray, shape (G, p, p)
        Unregularized estimates; shared families return G identical copies.
    """
    family = CovarianceFamily.parse(family)
    G, p = stats.n_classes, stats.dim
    n_star = stats.n_kept if n_total_kept is None else n_total_kept
    counts = stats.counts.astype(float)

    if family is CovarianceFamily.EII:
        cov = np.trace(stats.pooled) / (n_star * p) * np.eye(p)
        return np.broadcast_to(cov, (G, p, p)).copy()
    if family is CovarianceFamily.EEI:
        cov = np.diag(np.diag(stats.pooled) / n_star)
        return np.broadcast_to(cov, (G, p, p)).copy()
    if family is CovarianceFamily.EEE:
        cov = stats.pooled / n_star
        return np.broadcast_to(cov, (G, p, p)).copy()

    out = np.zeros((G, p, p))
    for g in range(G):
        w = stats.scatters[g]
        if family is CovarianceFamily.VII:
            out[g] = np.trace(w) / (counts[g] * p) * np.eye(p)
        elif family is CovarianceFamily.VVI:
            out[g] = np.diag(np.diag(w) / counts[g])
        else:
            out[g] = w / counts[g]
    return out


def parameter_count(family, n_classes: int, n_vars: int) -> int:
    """Free parameters of a G-class Gaussian model: proportions, means, covariances."""
    family = CovarianceFamily.parse(family)
    G, p = int(n_classes), int(n_vars)
    if G < 1 or p < 1:
        raise ValueError("need at least one class and one variable")
    cov_terms = {
        CovarianceFamily.EII: 1,
        CovarianceFamily.VII: G,
        CovarianceFamily.EEI: p,
        CovarianceFamily.VVI: G * p,
        CovarianceFamily.EEE: p * (p + 1) // 2,
        CovarianceFamily.VVV: G * p * (p + 1) // 2,
    }[family]
    return (G - 1) + G * p + cov_terms


@dataclass(frozen=True)
class GaussianClassParams:
    """Fitted class proportions, means and (factored) covariances.

    ``factors`` holds one SpdFactor per class; shared families repeat the
    same object.
    """

    family: CovarianceFamily
    tau: NDArray
    mu: NDArray
    factors: tuple

    @property
    def n_classes(self) -> int:
        return self.tau.shape[0]

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    @property
    def covariances(self) -> NDArray:
        return np.stack([f.matrix for f in self.factors])

    def log_joint(self, data: NDArray) -> NDArray:
        """``log tau_g + log phi(x_n; mu_g, Sigma_g)`` as an (N, G) array."""
        x = np.asarray(data, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        G, p = self.mu.shape
        if x.shape[1] != p:
            raise DimensionMismatch(f"model has {p} variables, data has {x.shape[1]} columns")
        with np.errstate(divide="ignore"):
            log_tau = np.log(self.tau)
        if self.family.diagonal:
            var = np.stack([np.diag(f.matrix) for f in self.factors])  # (G, p)
            diff = x[:, None, :] - self.mu[None, :, :]
            maha = np.einsum("ngp,gp->ng", diff * diff, 1.0 / var)
            log_det = np.log(var).sum(axis=1)
            return log_tau - 0.5 * (p * LOG_2PI + log_det + maha)
        out = np.empty((x.shape[0], G))
        for g, f in enumerate(self.factors):
            out[:, g] = log_tau[g] - 0.5 * (p * LOG_2PI + f.log_det + f.mahalanobis_sq(x, self.mu[g]))
        return out


def params_from_covariances(family, tau, mu, covariances) -> GaussianClassParams:
    """Factor covariances (once for shared families) and bundle the parameters."""
    family = CovarianceFamily.parse(family)
    covariances = np.asarray(covariances, dtype=float)
    if family.shared:
        f = cholesky_spd(covariances[0])
        factors = tuple(f for _ in range(covariances.shape[0]))
    else:
        factors = tuple(cholesky_spd(c) for c in covariances)
    return GaussianClassParams(
        family=family,
        tau=np.asarray(tau, dtype=float),
        mu=np.asarray(mu, dtype=float),
        factors=factors,
    )


def estimate_params(stats: ClassStats, family) -> GaussianClassParams:
    """M-step: proportions n_g/N*, class means, constrained covariances."""
    family = CovarianceFamily.parse(family)
    covs = estimate_covariances(stats, family)
    tau = stats.counts / stats.n_kept
    return params_from_covariances(family, tau, stats.means.copy(), covs)


def select_family(data, labels, gamma, candidates=FAMILY_ORDER, config=None, return_scores=False):
    """Pick the covariance family with the highest trimmed BIC.

    Each candidate is fitted with :func:`stepredda.redda.fit_redda`. Ties go
    to the family with fewer parameters, then to the earlier code in
    ``EII, VII, EEI, VVI, EEE, VVV``. Candidates whose fit fails are skipped.

    With ``return_scores=True`` the TBIC value of every candidate that
    could be fitted is returned too, as a dict.
    """
    from .errors import ReddaError
    from .redda import fit_redda

    candidates = [CovarianceFamily.parse(c) for c in candidates]
    if not candidates:
        raise ValueError("no candidate families given")
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    labels = np.asarray(labels)
    G, p = int(labels.max()) + 1, data.shape[1]

    scores = {}
    failures = {}
    for fam in candidates:
        try:
            fit = fit_redda(data, labels, fam, gamma, config)
        except ReddaError as exc:
            failures[fam] = str(exc)
            continue
        v = parameter_count(fam, G, p)
        scores[fam] = 2.0 * fit.trimmed_loglik - v * np.log(fit.n_star)
    if not scores:
        detail = "; ".join(f"{f.value}: {msg}" for f, msg in failures.items())
        raise ReddaError(f"every candidate family failed to fit ({detail})")

    best = max(scores.values())
    tol = 1e-9 * max(1.0, abs(best))
    tied = [f for f in scores if scores[f] >= best - tol]
    tied.sort(key=lambda f: (parameter_count(f, G, p), FAMILY_ORDER.index(f)))
    return (tied[0], scores) if return_scores else tied[0]
