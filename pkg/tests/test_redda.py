import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from conftest import random_instance
from oracles import exhaustive_trimmed_max, mle
from stepredda.errors import ClassCollapsed, DimensionMismatch, Infeasible
from stepredda.families import FAMILY_ORDER, estimate_params
from stepredda.gaussian import class_sufficient_stats
from stepredda.redda import (
    FitConfig, concentrate, derive_seed, fit_redda, initial_masks, kept_count, marginal_log_density,
    per_obs_contribution, predict_map, elemental_subset, trim_count,
)

FAMILIES = [f.value for f in FAMILY_ORDER]


def test_trim_count_is_robust_to_rounding():
    assert trim_count(100, 0.29) == 29
    assert trim_count(100, 0.07) == 7
    assert trim_count(10, 0.0) == 0
    assert trim_count(19, 0.1) == 1
    assert kept_count(300, 0.1) == 270
    assert kept_count(7, 0.25) == 6
    with pytest.raises(ValueError):
        trim_count(10, 0.5)
    with pytest.raises(ValueError):
        trim_count(10, -0.1)


def test_derive_seed_is_stable():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)


@pytest.mark.parametrize("family", FAMILIES)
def test_untrimmed_fit_equals_closed_form(rng, family):
    data, labels = random_instance(rng, 3, 3, 80)
    fit = fit_redda(data, labels, family, 0.0)
    tau, mu, covs = mle(data, labels, 3, family)
    np.testing.assert_allclose(fit.params.tau, tau, atol=1e-12)
    np.testing.assert_allclose(fit.params.mu, mu, atol=1e-12)
    np.testing.assert_allclose(fit.params.covariances, covs, atol=1e-12)
    assert fit.kept.all() and fit.n_star == 80 and fit.converged


def test_trimmed_loglik_is_sum_of_kept_contributions(rng):
    data, labels = random_instance(rng, 2, 2, 60)
    fit = fit_redda(data, labels, "VVV", 0.1)
    contrib = per_obs_contribution(fit.params, data, labels)
    assert fit.kept.sum() == fit.n_star == 54
    assert fit.trimmed_loglik == pytest.approx(contrib[fit.kept].sum(), rel=1e-12)
    # fixed point: the kept rows are the most plausible ones under the fitted parameters
    assert contrib[fit.kept].min() >= contrib[~fit.kept].max()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(FAMILIES), st.sampled_from([0.05, 0.1, 0.25]))
def test_concentration_never_decreases(seed, family, gamma):
    rng = np.random.default_rng(seed)
    data, labels = random_instance(rng, 2, 2, 50)
    data[:3] += 8.0  # a few gross outliers
    fit = fit_redda(data, labels, family, gamma, FitConfig(n_restarts=4, seed=seed))
    for trace in fit.traces:
        if trace is not None:
            assert np.all(np.diff(trace) >= -1e-9 * np.maximum(1.0, np.abs(trace[:-1])))


def test_parameters_are_optimal_on_the_kept_set(rng):
    data, labels = random_instance(rng, 2, 3, 70)
    fit = fit_redda(data, labels, "VVV", 0.1)
    base = fit.trimmed_loglik
    params = fit.params
    for g in range(2):
        for delta in (1e-3, -1e-3):
            mu = params.mu.copy()
            mu[g, 0] += delta
            kept = fit.kept
            ll = 0.0
            for n in np.flatnonzero(kept):
                h = labels[n]
                ll += np.log(params.tau[h]) + multivariate_normal(mu[h], params.covariances[h]).logpdf(data[n])
            assert ll < base


def test_trimming_discards_planted_outliers(rng):
    labels = np.repeat([0, 1], 50)
    data = rng.normal(size=(100, 2)) + 4.0 * labels[:, None]
    data[[3, 60]] += 25.0
    fit = fit_redda(data, labels, "EEE", 0.05)
    assert not fit.kept[3] and not fit.kept[60]


def test_matches_exhaustive_trimming_on_small_instance():
    rng = np.random.default_rng(11)
    labels = np.repeat([0, 1], 7)
    data = rng.normal(size=(14, 2)) + 2.0 * labels[:, None]
    data[0] += 4.0
    for family in ("EEI", "VVV"):
        fit = fit_redda(data, labels, family, 0.15, FitConfig(n_restarts=20, seed=1))
        best = exhaustive_trimmed_max(data, labels, 2, family, 2)
        assert fit.trimmed_loglik <= best + 1e-8
        assert fit.trimmed_loglik == pytest.approx(best, abs=1e-8)


def test_same_seed_same_fit(rng):
    data, labels = random_instance(rng, 3, 2, 90)
    a = fit_redda(data, labels, "VVI", 0.2, FitConfig(seed=5))
    b = fit_redda(data, labels, "VVI", 0.2, FitConfig(seed=5))
    assert a.trimmed_loglik == b.trimmed_loglik
    assert np.array_equal(a.kept, b.kept)


def test_infeasible_and_collapsed_inputs():
    rng = np.random.default_rng(0)
    with pytest.raises(Infeasible):
        fit_redda(rng.normal(size=(9, 4)), np.array([0] * 5 + [1] * 4), "VVV", 0.0)
    labels = np.array([0] * 20 + [1])
    with pytest.raises(ClassCollapsed):
        fit_redda(rng.normal(size=(21, 1)), labels, "EII", 0.0)
    with pytest.raises(DimensionMismatch):
        fit_redda(rng.normal(size=(20, 2)), np.zeros(19, dtype=int), "EII", 0.0)


def test_elemental_subset_takes_rows_from_every_class(rng):
    labels = np.repeat([0, 1, 2], [50, 30, 2])
    mask = elemental_subset(labels, 4, 3, rng)
    np.testing.assert_array_equal(np.bincount(labels[mask]), [4, 4, 2])


def test_initial_masks_start_from_all_rows():
    labels = np.repeat([0, 1], 10)
    masks = initial_masks(labels, 2, 18, 5, seed=3, dim=2)
    assert len(masks) == 5 and masks[0].all()
    assert all(m.sum() == 6 for m in masks[1:])
    assert not np.array_equal(masks[1], masks[2])
    assert len(initial_masks(labels, 2, 20, 5, seed=3)) == 1


def test_concentrate_reports_fixed_point(rng):
    data, labels = random_instance(rng, 2, 1, 40)
    params, kept, ll, its, converged, trace = concentrate(
        data, labels, 2, "EII", 36, np.ones(40, dtype=bool)
    )
    assert converged and kept.sum() == 36 and trace[-1] == ll


def test_predict_posteriors(rng):
    data, labels = random_instance(rng, 3, 2, 90)
    fit = fit_redda(data, labels, "VVV", 0.0)
    pred, post = predict_map(fit, data)
    np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(pred, post.argmax(axis=1))
    assert np.mean(pred == labels) > 0.5
    one, _ = predict_map(fit, data[0])
    assert one.shape == (1,)


def test_predict_tie_goes_to_lowest_class():
    data = np.array([[-2.0], [-1.0], [-3.0], [2.0], [1.0], [3.0]])
    labels = np.array([0, 0, 0, 1, 1, 1])
    fit = fit_redda(data, labels, "EII", 0.0)
    pred, post = predict_map(fit, np.array([[0.0]]))
    assert pred[0] == 0
    np.testing.assert_allclose(post[0], [0.5, 0.5])


def test_marginal_density_and_ranks(rng):
    data, labels = random_instance(rng, 2, 2, 80)
    fit = fit_redda(data, labels, "VVV", 0.1)
    test = np.vstack([data[:10], [[50.0, -50.0]]])
    rep = marginal_log_density(fit, test)
    p = fit.params
    ref = np.log(sum(p.tau[g] * multivariate_normal(p.mu[g], p.covariances[g]).pdf(test[:10]) for g in range(2)))
    np.testing.assert_allclose(rep.log_density[:10], ref, rtol=1e-10)
    assert rep.rank[10] == 1 and rep.lowest(1)[0] == 10
    assert sorted(rep.rank.tolist()) == list(range(1, 12))


def test_marginal_density_projects_wide_input(rng):
    data, labels = random_instance(rng, 2, 4, 80)
    fit = fit_redda(data[:, [1, 3]], labels, "EEE", 0.0)
    wide = marginal_log_density(fit, data, selected=[1, 3])
    narrow = marginal_log_density(fit, data[:, [1, 3]])
    np.testing.assert_array_equal(wide.log_density, narrow.log_density)
    with pytest.raises(DimensionMismatch):
        marginal_log_density(fit, data[:, :3])
    with pytest.raises(DimensionMismatch):
        marginal_log_density(fit, data, selected=[1])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fit_is_invariant_to_row_order_without_trimming(seed):
    rng = np.random.default_rng(seed)
    data, labels = random_instance(rng, 2, 2, 40)
    perm = rng.permutation(40)
    a = fit_redda(data, labels, "VVV", 0.0)
    b = fit_redda(data[perm], labels[perm], "VVV", 0.0)
    assert a.trimmed_loglik == pytest.approx(b.trimmed_loglik, rel=1e-12)
    np.testing.assert_allclose(a.params.covariances, b.params.covariances, rtol=1e-10, atol=1e-14)


def test_estimate_params_proportions(rng):
    data, labels = random_instance(rng, 3, 1, 30)
    params = estimate_params(class_sufficient_stats(data, labels), "VII")
    np.testing.assert_allclose(params.tau, np.bincount(labels) / 30)
