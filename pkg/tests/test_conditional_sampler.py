import numpy as np
import pytest

from pwshap.conditional_sampler import (
    CapabilityError,
    SupportError,
    bernoulli_node,
    fit_imputer,
    fit_knn,
    GenerativeScenario,
    sample_conditional,
    sample_do,
    uniform_node,
)
from pwshap.scenarios import build_scenario


def _mean_within(values, target, tol):
    assert abs(float(np.mean(values)) - target) <= tol, (float(np.mean(values)), target)


def test_imputer_copies_identical_column():
    rng = np.random.default_rng(0)
    c1 = rng.random(300)
    X = np.c_[c1, c1, rng.integers(0, 2, 300)]
    imp = fit_imputer(X, feature_names=("C1", "C2", "T"))
    rows = imp.sample_conditional({"C1": 0.3}, 1000, seed=1)
    _mean_within(rows[:, 1], 0.3, 0.05)


def test_imputer_independent_columns():
    rng = np.random.default_rng(2)
    X = np.c_[rng.random(2000), rng.random(2000), rng.integers(0, 2, 2000)]
    imp = fit_imputer(X, feature_names=("C1", "C2", "T"))
    marginal = X[:, 1].mean()
    for c1 in (0.1, 0.9):
        rows = imp.sample_conditional({0: c1}, 4000, seed=3)
        se = rows[:, 1].std(ddof=1) / np.sqrt(rows.shape[0])
        assert abs(rows[:, 1].mean() - marginal) <= 3 * se + 0.01


@pytest.mark.parametrize("factory", [fit_imputer, fit_knn])
def test_fully_observed_row_unchanged(factory):
    rng = np.random.default_rng(4)
    X = np.c_[rng.random(100), rng.random(100), rng.integers(0, 2, 100)]
    s = factory(X, feature_names=("C1", "C2", "T"))
    known = {"C1": 0.25, "C2": 0.75, "T": 1.0}
    rows = s.sample_conditional(known, 7, seed=0)
    assert np.all(rows == np.array([0.25, 0.75, 1.0]))


def test_imputer_binary_columns_stay_binary():
    rng = np.random.default_rng(5)
    X = np.c_[rng.random(200), rng.integers(0, 2, 200)]
    rows = fit_imputer(X, feature_names=("C1", "T")).sample_conditional({"C1": 0.4}, 500, seed=0)
    assert set(np.unique(rows[:, 1])) <= {0.0, 1.0}


def test_imputer_needs_rows():
    with pytest.raises(ValueError):
        fit_imputer(np.zeros((5, 2)), feature_names=("C1", "T"))


def test_knn_draws_neighbours_and_warns_far_away():
    rng = np.random.default_rng(6)
    c1 = rng.random(400)
    X = np.c_[c1, 2 * c1, rng.integers(0, 2, 400)]
    knn = fit_knn(X, feature_names=("C1", "C2", "T"))
    rows = knn.sample_conditional({"C1": 0.5}, 500, seed=1)
    _mean_within(rows[:, 1], 1.0, 0.1)
    assert knn.support_warnings({"C1": 0.5}) == []
    assert knn.support_warnings({"C1": 5.0})


def test_mediation_conditional_on_treatment():
    spec = build_scenario("mediation")
    rows = sample_conditional(spec.sampler, {"T": 1.0}, 50_000, 0)
    _mean_within(rows[:, spec.index("D")], 0.2, 0.01)


def test_moderation_marginal_mean():
    spec = build_scenario("moderation")
    rows = sample_conditional(spec.sampler, {}, 50_000, 0)
    _mean_within(rows[:, 0], 0.5, 0.01)


def test_known_everything_returns_known():
    spec = build_scenario("bias")
    rows = spec.sampler.sample_conditional({"C1": 0.2, "C2": 0.4, "T": 1.0}, 10, seed=0)
    assert np.all(rows == np.array([0.2, 0.4, 1.0]))


def test_bias_do_versus_conditioning():
    spec = build_scenario("bias", {"alpha": 2.0})
    do_rows = sample_do(spec.sampler, {"T": 1.0}, 50_000, 1)
    _mean_within(do_rows[:, 0], 0.5, 0.01)
    cond_rows = sample_conditional(spec.sampler, {"T": 1.0}, 50_000, 1)
    _mean_within(cond_rows[:, 0], 3 / 4, 0.01)  # (alpha + 1) / (alpha + 2)


def test_do_on_root_equals_conditioning():
    spec = build_scenario("mediation")
    a = sample_do(spec.sampler, {"T": 1.0}, 20_000, 2)
    b = sample_conditional(spec.sampler, {"T": 1.0}, 20_000, 2)
    assert abs(a[:, 1].mean() - b[:, 1].mean()) < 0.02


def test_common_random_numbers_across_arms():
    # upstream draws are shared between do(T=1) and do(T=0)
    spec = build_scenario("mediation")
    a = sample_do(spec.sampler, {"T": 1.0}, 1000, 3)
    b = sample_do(spec.sampler, {"T": 0.0}, 1000, 3)
    assert np.array_equal(a[:, 0], b[:, 0])


def test_zero_probability_conditioning_raises():
    nodes = [uniform_node("C1"), uniform_node("C2"),
             bernoulli_node("T", ("C1",), lambda pa: (pa["C1"] > 0.5).astype(float))]
    sampler = GenerativeScenario(nodes, ("C1", "C2", "T"))
    with pytest.raises(SupportError):
        sampler.sample_conditional({"C1": 0.2, "T": 1.0}, 10, seed=0)


def test_fitted_samplers_cannot_intervene():
    rng = np.random.default_rng(7)
    imp = fit_imputer(np.c_[rng.random(50), rng.integers(0, 2, 50)], feature_names=("C1", "T"))
    with pytest.raises(CapabilityError):
        sample_do(imp, {"T": 1.0}, 10, 0)


def test_seeded_draws_reproducible():
    spec = build_scenario("dependent_mediators")
    a = spec.sampler.sample_conditional({"T": 1.0}, 500, seed=11)
    b = spec.sampler.sample_conditional({"T": 1.0}, 500, seed=11)
    assert np.array_equal(a, b)
