import numpy as np
import pytest

from oracles import plain_bic_grouping, plain_bic_no_grouping
from stepredda.errors import ReddaError
from stepredda.redda import FitConfig
from stepredda.stepwise import (
    ADD, REMOVE, STEP_LOG_HEADER, CandidateEvaluator, StepRecord, StepwiseConfig, choose_family,
    constant_columns, evaluate_candidate, run_stepwise, sweep, tbic_grouping, tbic_no_grouping,
)

FAST = StepwiseConfig(fit=FitConfig(n_restarts=3, seed=4))


def _toy(rng, n=120, P=6, relevant=(1, 3), sep=3.0):
    labels = np.repeat([0, 1, 2], n // 3)
    X = rng.normal(size=(n, P))
    for j in relevant:
        X[:, j] += sep * rng.permutation([-1.0, 0.0, 1.0])[labels]
    return X, labels


@pytest.mark.parametrize("family", ["EII", "VVI", "EEE", "VVV"])
def test_untrimmed_scores_equal_plain_bic(rng, family):
    X, labels = _toy(rng, P=4)
    X[:, 2] += 0.8 * X[:, 1]
    gr = tbic_grouping(X, labels, [1, 3], family, 0.0)
    assert gr.value == pytest.approx(plain_bic_grouping(X, labels, 3, [1, 3], family), rel=1e-10)
    for included in ([], [1], [1, 3]):
        ng = tbic_no_grouping(X, labels, included, 2, family, 0.0)
        ref, regressors = plain_bic_no_grouping(X, labels, 3, included, 2, family)
        assert ng.value == pytest.approx(ref, rel=1e-10)
        assert ng.detail["regressors"] == regressors


def test_no_grouping_detail_names_regressors(rng):
    X, labels = _toy(rng, P=4)
    X[:, 0] = 2.0 * X[:, 3] + rng.normal(scale=0.05, size=X.shape[0])
    ng = tbic_no_grouping(X, labels, [1, 3], 0, "VVI", 0.1)
    assert ng.detail["regressors"] == (3,)
    assert ng.kept.sum() == ng.n_star == 108


def test_remove_difference_negates_add(rng):
    X, labels = _toy(rng)
    ev = CandidateEvaluator(X, labels, "VVI", 0.1, FAST)
    add = ev.diffs([1], ADD, [3])[3]
    remove = ev.diffs([1, 3], REMOVE, [3])[3]
    assert remove == -add


def test_evaluate_candidate_validates_moves(rng):
    X, labels = _toy(rng)
    with pytest.raises(ValueError):
        evaluate_candidate(X, labels, [1], ADD, 1)
    with pytest.raises(ValueError):
        evaluate_candidate(X, labels, [1], REMOVE, 2)
    with pytest.raises(ValueError):
        evaluate_candidate(X, labels, [], "sideways", 2)
    assert evaluate_candidate(X, labels, [], ADD, 1, "VVI", 0.1, FAST) > 0


class _FixedDiffs:
    def __init__(self, diffs):
        self._d = diffs

    def diffs(self, included, direction, candidates):
        return {j: self._d[j] for j in candidates}


def test_sweep_breaks_ties_by_index():
    ev = _FixedDiffs({0: 1.0, 1: 5.0, 2: 5.0, 3: -np.inf})
    assert sweep(ev, [], ADD, [3, 2, 1, 0]) == (1, 5.0)
    assert sweep(ev, [], ADD, []) == (None, -np.inf)


def test_failed_models_score_minus_infinity():
    labels = np.repeat([0, 1], 4)
    X = np.random.default_rng(0).normal(size=(8, 5))
    ev = CandidateEvaluator(X, labels, "VVV", 0.0, FAST)
    d = ev.diffs([0, 1, 2], ADD, [3])
    assert d[3] == -np.inf
    with pytest.raises(ReddaError):
        ev.score(("GR", (0, 1, 2, 3)))


def test_selection_finds_relevant_variables(rng):
    X, labels = _toy(rng)
    state = run_stepwise(X, labels, "VVI", 0.1, FAST)
    assert sorted(state.included) == [1, 3]
    assert state.terminated
    assert state.replay() == state.included
    dirs = [r.direction for r in state.history]
    assert dirs[0] == ADD and all(a != b for a, b in zip(dirs, dirs[1:]))
    assert not state.history[-1].accepted and not state.history[-2].accepted


def test_null_data_stops_after_two_rejections(rng):
    labels = np.repeat([0, 1, 2], 40)
    X = rng.normal(size=(120, 5))
    state = run_stepwise(X, labels, "EEI", 0.1, FAST)
    assert state.included == []
    assert [r.direction for r in state.history] == [ADD, REMOVE]
    assert state.history[1].candidate is None


def test_parallel_and_serial_runs_agree(rng):
    X, labels = _toy(rng, P=5)
    serial = run_stepwise(X, labels, "VVI", 0.1, FAST)
    parallel = run_stepwise(X, labels, "VVI", 0.1, StepwiseConfig(fit=FAST.fit, n_jobs=2))
    assert serial.step_log() == parallel.step_log()


def test_constant_columns_are_skipped(rng):
    X, labels = _toy(rng)
    X[:, 0] = 1.0
    assert constant_columns(X).tolist() == [0]
    state = run_stepwise(X, labels, "VVI", 0.1, FAST)
    assert 0 not in state.included


def test_min_diff_and_max_steps(rng):
    X, labels = _toy(rng)
    state = run_stepwise(X, labels, "VVI", 0.1, StepwiseConfig(fit=FAST.fit, max_steps=1))
    assert len(state.history) == 1 and len(state.included) == 1
    strict = run_stepwise(X, labels, "VVI", 0.1, StepwiseConfig(fit=FAST.fit, min_diff=1e9))
    assert strict.included == []


def test_step_log_format():
    rec = StepRecord(3, REMOVE, 2, -1.25, False, "VVI", 0.1)
    assert rec.log_line([1100.0, 1102.0, 1104.5]) == "3\tremove\t1104.5\t2\t-1.25\t0"
    assert StepRecord(2, REMOVE, None, -np.inf, False, "VVI", 0.1).log_line() == "2\tremove\tNA\tNA\t-inf\t0"
    assert STEP_LOG_HEADER.split("\t")[0] == "step"


def test_choose_family_returns_a_family(rng):
    X, labels = _toy(rng)
    fam = choose_family(X, labels, 0.1, FAST, n_top=2)
    assert fam.value in {"EII", "VII", "EEI", "VVI", "EEE", "VVV"}
