"""Greedy add/remove wavelength selection driven by the trimmed BIC.

For a proposal variable ``p`` and the currently included set ``c`` two
models compete:

* Grouping: a trimmed Gaussian classifier on ``c + {p}``.
* No-Grouping: the classifier on ``c`` times a Gaussian regression of ``p``
  on a subset of ``c``, sharing one trimming mask.

The difference of their trimmed BICs approximates twice the log Bayes
factor. Addition and removal sweeps alternate until one of each in a row
is rejected.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from .errors import ClassCollapsed, Infeasible, ReddaError
from .families import FAMILY_ORDER, CovarianceFamily, estimate_params, parameter_count, select_family
from .gaussian import class_sufficient_stats
from .redda import (
    FitConfig, _check_inputs, _top_rows, derive_seed, fit_redda, initial_masks, kept_count,
    per_obs_contribution,
)
from .regression import regression_log_density, regression_param_count, select_predictor_subset

logger = logging.getLogger(__name__)

ADD = "add"
REMOVE = "remove"


@dataclass(frozen=True)
class StepwiseConfig:
    """Search settings.

    ``max_steps`` defaults to twice the number of variables. ``n_jobs`` only
    changes how candidate evaluations are scheduled, never the result.
    """

    fit: FitConfig = FitConfig()
    max_steps: int | None = None
    min_diff: float = 0.0
    max_subset: int | None = None
    bic_tol: float = 0.0
    n_jobs: int = 1

    @property
    def seed(self) -> int:
        return self.fit.seed


@dataclass(frozen=True)
class TbicScore:
    trimmed_loglik: float
    param_count: int
    n_star: int
    kept: NDArray | None = field(default=None, compare=False, repr=False)
    detail: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def value(self) -> float:
        return 2.0 * self.trimmed_loglik - self.param_count * np.log(self.n_star)


def _grouping_score(data, labels, G, variables, family, gamma, fit_config) -> TbicScore:
    variables = sorted(int(v) for v in variables)
    if not variables:
        raise ValueError("the grouping model needs at least one variable")
    cfg = fit_config.with_seed(derive_seed(fit_config.seed, 0, *variables))
    fit = fit_redda(data[:, variables], labels, family, gamma, cfg, n_classes=G)
    return TbicScore(
        trimmed_loglik=fit.trimmed_loglik,
        param_count=parameter_count(family, G, len(variables)),
        n_star=fit.n_star,
        kept=fit.kept,
        detail={"fit": fit},
    )


def _label_only(labels, kept, G):
    counts = np.bincount(labels[kept], minlength=G)
    if counts.min() < 2:
        raise ClassCollapsed(f"class {int(np.argmin(counts))} has {int(counts.min())} kept observation(s)")
    tau = counts / counts.sum()
    return np.log(tau)[labels]


def _ng_components(Xc, y, labels, G, family, kept, max_subset, bic_tol):
    if Xc.shape[1]:
        stats = class_sufficient_stats(Xc, labels, kept, G)
        cls = per_obs_contribution(estimate_params(stats, family), Xc, labels)
    else:
        cls = _label_only(labels, kept, G)
    reg = select_predictor_subset(y, Xc, kept, max_subset=max_subset, bic_tol=bic_tol)
    reg_ll = regression_log_density(reg, y, reg.design(Xc))
    return cls, reg, reg_ll


def _ng_concentrate(Xc, y, labels, G, family, n_star, kept, fit_config, max_subset, bic_tol):
    cls, reg, reg_ll = _ng_components(Xc, y, labels, G, family, kept, max_subset, bic_tol)
    contrib = cls + reg_ll
    total = float(contrib[kept].sum())
    seen = {kept.tobytes()}
    iterations = 0
    while iterations < fit_config.max_iter:
        new_kept = _top_rows(contrib, n_star)
        key = new_kept.tobytes()
        if key in seen:
            break
        seen.add(key)
        iterations += 1
        comparable = kept.sum() == n_star
        kept = new_kept
        cls, reg, reg_ll = _ng_components(Xc, y, labels, G, family, kept, max_subset, bic_tol)
        contrib = cls + reg_ll
        new_total = float(contrib[kept].sum())
        done = comparable and abs(new_total - total) <= fit_config.tol
        total = new_total
        if done:
            break
    return kept, float(cls[kept].sum()), reg


def _no_grouping_score(data, labels, G, included, proposal, family, gamma, fit_config,
                       max_subset=None, bic_tol=0.0) -> TbicScore:
    c = sorted(int(v) for v in included)
    proposal = int(proposal)
    if proposal in c:
        raise ValueError("proposal variable is already among the included ones")
    n = data.shape[0]
    n_star = kept_count(n, gamma)
    if c and n_star < G * (len(c) + 1):
        raise Infeasible(f"N*={n_star} kept rows cannot support {G} classes in {len(c)} dimensions")
    Xc = data[:, c]
    y = data[:, proposal]
    v_class = parameter_count(family, G, len(c)) if c else G - 1
    seed = derive_seed(fit_config.seed, 1, proposal, *c)

    best = None
    first_error = None
    for mask in initial_masks(labels, G, n_star, fit_config.n_restarts, seed, len(c) + 1):
        try:
            kept, ll_class, reg = _ng_concentrate(
                Xc, y, labels, G, family, n_star, mask, fit_config, max_subset, bic_tol
            )
        except ReddaError as exc:
            first_error = first_error or exc
            continue
        score = TbicScore(
            trimmed_loglik=ll_class + reg.loglik_on_kept,
            param_count=v_class + regression_param_count(len(reg.subset)),
            n_star=n_star,
            kept=kept,
            detail={
                "class_loglik": ll_class,
                "regression": reg,
                "regressors": tuple(c[j] for j in reg.subset),
            },
        )
        if best is None or score.value > best.value:
            best = score
    if best is None:
        raise first_error
    return best


def tbic_grouping(data, labels, variables, family="EEI", gamma=0.0, config=None,
                  n_classes=None) -> TbicScore:
    """Trimmed BIC of the Grouping model on ``variables``.

    ``2 * trimmed loglik - v * log N*`` with ``v`` the parameter count of a
    ``family`` classifier on ``len(variables)`` variables.
    """
    config = _as_stepwise_config(config)
    data, labels = _check_inputs(data, labels)
    G = int(labels.max()) + 1 if n_classes is None else n_classes
    family = CovarianceFamily.parse(family)
    return _grouping_score(data, labels, G, variables, family, gamma, config.fit)


def tbic_no_grouping(data, labels, included, proposal, family="EEI", gamma=0.0, config=None,
                     n_classes=None) -> TbicScore:
    """Trimmed BIC of the No-Grouping model for ``proposal`` given ``included``.

    The classifier on ``included`` and the regression of ``proposal`` on a
    greedily chosen subset of ``included`` share a single trimming mask,
    chosen by concentration steps on the summed per-row contributions.
    With nothing included, the classification term reduces to the class
    proportions and the regression to a single Gaussian.
    """
    config = _as_stepwise_config(config)
    data, labels = _check_inputs(data, labels)
    G = int(labels.max()) + 1 if n_classes is None else n_classes
    family = CovarianceFamily.parse(family)
    return _no_grouping_score(
        data, labels, G, included, proposal, family, gamma, config.fit, config.max_subset, config.bic_tol
    )


def _as_stepwise_config(config) -> StepwiseConfig:
    if config is None:
        return StepwiseConfig()
    if isinstance(config, FitConfig):
        return StepwiseConfig(fit=config)
    return config


# ---------------------------------------------------------------------------
# Candidate evaluation
# ---------------------------------------------------------------------------


def _grouping_key(variables):
    return ("GR", tuple(sorted(int(v) for v in variables)))


def _no_grouping_key(included, proposal):
    return ("NG", tuple(sorted(int(v) for v in included)), int(proposal))


def _keys_for(included, direction, candidate):
    c = set(included)
    if direction == ADD:
        return _grouping_key(c | {candidate}), _no_grouping_key(c, candidate)
    rest = c - {candidate}
    return _grouping_key(c), _no_grouping_key(rest, candidate)


def _score_model(data, labels, G, key, family, gamma, config):
    """Evaluate one model; returns ``(score, None)`` or ``(None, reason)``."""
    try:
        if key[0] == "GR":
            score = _grouping_score(data, labels, G, key[1], family, gamma, config.fit)
        else:
            score = _no_grouping_score(
                data, labels, G, key[1], key[2], family, gamma, config.fit,
                config.max_subset, config.bic_tol,
            )
    except ReddaError as exc:
        return None, f"{type(exc).__name__}: {exc}"
    # keep what crosses process boundaries small
    return replace(score, detail={}), None


class CandidateEvaluator:
    """Caches model scores across sweeps of one selection run.

    Scores depend only on the model identity (variables, family, gamma,
    seed), so a model met again in a later sweep is never refitted and
    an addition evaluated in the removal direction gives exactly the
    negated difference.
    """

    def __init__(self, data, labels, family, gamma, config: StepwiseConfig, n_classes=None):
        self.data, self.labels = _check_inputs(data, labels)
        self.G = int(self.labels.max()) + 1 if n_classes is None else int(n_classes)
        self.family = CovarianceFamily.parse(family)
        self.gamma = float(gamma)
        self.config = config
        self.cache: dict = {}

    def _compute(self, keys):
        missing = [k for k in dict.fromkeys(keys) if k not in self.cache]
        if not missing:
            return
        if self.config.n_jobs == 1 or len(missing) == 1:
            results = [
                _score_model(self.data, self.labels, self.G, k, self.family, self.gamma, self.config)
                for k in missing
            ]
        else:
            from joblib import Parallel, delayed

            results = Parallel(n_jobs=self.config.n_jobs)(
                delayed(_score_model)(self.data, self.labels, self.G, k, self.family, self.gamma, self.config)
                for k in missing
            )
        for k, res in zip(missing, results):
            self.cache[k] = res

    def score(self, key) -> TbicScore:
        self._compute([key])
        score, reason = self.cache[key]
        if score is None:
            raise ReddaError(reason)
        return score

    def diffs(self, included, direction, candidates) -> dict:
        """TBIC differences for every candidate; ``-inf`` if a model failed."""
        pairs = {j: _keys_for(included, direction, j) for j in candidates}
        self._compute([k for pair in pairs.values() for k in pair])
        out = {}
        for j, (gr_key, ng_key) in pairs.items():
            gr, gr_reason = self.cache[gr_key]
            ng, ng_reason = self.cache[ng_key]
            if gr is None or ng is None:
                logger.debug("candidate %d skipped (%s): %s", j, direction, gr_reason or ng_reason)
                out[j] = -np.inf
            elif direction == ADD:
                out[j] = gr.value - ng.value
            else:
                out[j] = ng.value - gr.value
        return out


def evaluate_candidate(data, labels, included, direction, candidate, family="EEI", gamma=0.0,
                       config=None, evaluator: CandidateEvaluator | None = None) -> float:
    """TBIC(Grouping) - TBIC(No-Grouping) for one move.

    For ``direction="add"`` the Grouping model uses ``included + {candidate}``
    and a positive value favours adding. For ``"remove"`` the roles are
    swapped (No-Grouping treats ``candidate`` as regressed on the rest), so a
    positive value favours removing. Returns ``-inf`` if either model fails.
    """
    if direction not in (ADD, REMOVE):
        raise ValueError(f"direction must be 'add' or 'remove', got {direction!r}")
    included = [int(v) for v in included]
    candidate = int(candidate)
    if direction == ADD and candidate in included:
        raise ValueError(f"variable {candidate} is already included")
    if direction == REMOVE and candidate not in included:
        raise ValueError(f"variable {candidate} is not included")
    if evaluator is None:
        evaluator = CandidateEvaluator(data, labels, family, gamma, _as_stepwise_config(config))
    return evaluator.diffs(included, direction, [candidate])[candidate]


def sweep(evaluator: CandidateEvaluator, included, direction, pool):
    """Best move over ``pool``: ``(candidate, diff)``, or ``(None, -inf)`` if empty.

    Ties go to the lowest variable index.
    """
    pool = sorted(int(j) for j in pool)
    if not pool:
        return None, -np.inf
    diffs = evaluator.diffs(included, direction, pool)
    best = max(pool, key=lambda j: (diffs[j], -j))
    return best, float(diffs[best])


# ---------------------------------------------------------------------------
# Search driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    step: int
    direction: str
    candidate: int | None
    tbic_diff: float
    accepted: bool
    family: str
    gamma: float

    def log_line(self, wavelengths=None) -> str:
        """Tab-separated: step, direction, wavelength, column, diff, accepted."""
        if self.candidate is None:
            wl, col = "NA", "NA"
        else:
            col = str(self.candidate)
            wl = _format_wavelength(wavelengths[self.candidate]) if wavelengths is not None else col
        return "\t".join([
            str(self.step), self.direction, wl, col, repr(float(self.tbic_diff)),
            "1" if self.accepted else "0",
        ])


def _format_wavelength(w) -> str:
    w = float(w)
    return str(int(w)) if w.is_integer() else repr(w)


STEP_LOG_HEADER = "step\tdirection\twavelength\tcolumn\ttbic_diff\taccepted"


@dataclass
class SelectionState:
    included: list = field(default_factory=list)
    history: list = field(default_factory=list)
    terminated: bool = False

    def replay(self) -> list:
        """Rebuild the included list from accepted history records."""
        out: list = []
        for rec in self.history:
            if not rec.accepted:
                continue
            if rec.direction == ADD:
                out.append(rec.candidate)
            else:
                out.remove(rec.candidate)
        return out

    def step_log(self, wavelengths=None) -> str:
        lines = [STEP_LOG_HEADER] + [rec.log_line(wavelengths) for rec in self.history]
        return "\n".join(lines) + "\n"


def constant_columns(data, tol: float = 0.0) -> NDArray:
    """Indices of columns with (near-)zero variance."""
    data = np.asarray(data, dtype=float)
    return np.flatnonzero(data.var(axis=0) <= tol)


def run_stepwise(data, labels, family="EEI", gamma=0.0, config: StepwiseConfig | None = None,
                 wavelengths=None, n_classes=None) -> SelectionState:
    """Stepwise selection from the empty set.

    Addition and removal sweeps alternate, starting with addition. The best
    move of a sweep is accepted when its TBIC difference exceeds
    ``config.min_diff``. The search stops after two consecutive rejected
    sweeps (a removal sweep over an empty set counts as rejected), or after
    ``config.max_steps`` sweeps.
    """
    config = _as_stepwise_config(config)
    evaluator = CandidateEvaluator(data, labels, family, gamma, config, n_classes)
    P = evaluator.data.shape[1]
    if P < 1:
        raise ValueError("no variables to select from")
    max_steps = 2 * P if config.max_steps is None else config.max_steps

    skipped = set(constant_columns(evaluator.data).tolist())
    for j in sorted(skipped):
        logger.info("variable %d skipped: zero variance", j)

    state = SelectionState()
    direction = ADD
    rejections = 0
    for step in range(1, max_steps + 1):
        if direction == ADD:
            pool = [j for j in range(P) if j not in skipped and j not in state.included]
        else:
            pool = list(state.included)
        best, diff = sweep(evaluator, state.included, direction, pool)
        accepted = best is not None and diff > config.min_diff
        rec = StepRecord(step, direction, best, diff, accepted, evaluator.family.value, evaluator.gamma)
        state.history.append(rec)
        logger.info(rec.log_line(wavelengths))
        if accepted:
            if direction == ADD:
                state.included.append(best)
            else:
                state.included.remove(best)
            rejections = 0
        else:
            rejections += 1
            if rejections >= 2:
                state.terminated = True
                break
        direction = REMOVE if direction == ADD else ADD
    return state


def choose_family(data, labels, gamma=0.0, config: StepwiseConfig | None = None, n_top: int = 5,
                  candidates=FAMILY_ORDER, n_classes=None) -> CovarianceFamily:
    """Fix a covariance family for a whole run.

    Variables are screened by their first-step (empty included set) TBIC
    difference; the ``n_top`` best are then handed to
    :func:`~stepredda.families.select_family`.
    """
    config = _as_stepwise_config(config)
    evaluator = CandidateEvaluator(data, labels, CovarianceFamily.VVV, gamma, config, n_classes)
    skipped = set(constant_columns(evaluator.data).tolist())
    pool = [j for j in range(evaluator.data.shape[1]) if j not in skipped]
    diffs = evaluator.diffs([], ADD, pool)
    top = sorted(sorted(pool, key=lambda j: (-diffs[j], j))[:n_top])
    family = select_family(evaluator.data[:, top], evaluator.labels, gamma, candidates, config.fit)
    logger.info("family %s chosen on variables %s", family.value, top)
    return family
