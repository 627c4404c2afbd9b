import json
import math

import numpy as np
import pytest

from pwshap.blackbox_models import ConstantPropensity, FunctionModel, sup_norm_over_box
from pwshap.pwshap_engine import (
    NearZeroWeightError,
    PropensityWeight,
    PwshapSettings,
    coalition_effect,
    effect_from_shapley,
    error_bound_harness,
    explain_instance,
    integration_check,
    path_effect,
    propensity_bound_harness,
    propensity_weight,
    shared_draw_decomposition,
)
from pwshap.scenarios import build_scenario
from pwshap.shapley_engine import Coalition, ValueEstimate, coalition_shapley_value


def within(value, se, expected, k):
    assert abs(value - expected) <= k * se + 1e-12, (value, expected, se)


class _NoClosedForm:
    """Wraps a propensity model and hides its closed-form marginal, forcing MC marginalisation."""

    def __init__(self, inner):
        self.inner = inner
        self.clip_epsilon = inner.clip_epsilon

    def propensity(self, C):
        return self.inner.propensity(C)

    def marginal(self, known):
        return None


# ---------------------------------------------------------------- weights

def test_randomized_weight():
    spec = build_scenario("moderation")
    x = spec.instance(C1=0.3, C2=0.6, T=1)
    prop = ConstantPropensity(0.5, spec.covariates)
    for S in (Coalition(()), Coalition((0,)), Coalition((0, 1))):
        assert propensity_weight(prop, spec.sampler, S, x).w == 0.5


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_bias_weights(alpha):
    spec = build_scenario("bias", {"alpha": alpha})
    prop = _NoClosedForm(spec.propensity)
    c1 = 0.7
    w = propensity_weight(prop, spec.sampler, Coalition((0,)), spec.instance(C1=c1, C2=0.2, T=1), 50_000, 1)
    within(w.w, w.mc_std_error, 1 - c1 ** alpha, 4)
    w = propensity_weight(prop, spec.sampler, Coalition((1,)), spec.instance(C1=c1, C2=0.2, T=0), 50_000, 2)
    within(w.w, w.mc_std_error, -1 / (alpha + 1), 4)
    assert w.source == "fitted_marginalized"
    exact = propensity_weight(spec.propensity, spec.sampler, Coalition((1,)), spec.instance(C1=c1, C2=0.2, T=0))
    assert exact.w == pytest.approx(-1 / (alpha + 1)) and exact.source == "closed_form"


def test_strict_overlap_guard():
    spec = build_scenario("moderation")
    prop = ConstantPropensity(0.999, spec.covariates, clip_epsilon=0.01)
    x = spec.instance(C1=0.3, C2=0.6, T=1)
    with pytest.raises(NearZeroWeightError):
        propensity_weight(prop, spec.sampler, Coalition(()), x, overlap="strict")
    clipped = propensity_weight(prop, spec.sampler, Coalition(()), x)
    assert clipped.clip_applied and clipped.w == pytest.approx(0.01)


# ---------------------------------------------------------------- coalition effects

def test_moderation_coalition_effects():
    spec = build_scenario("moderation")
    p = spec.params
    x = spec.instance(C1=0.2, C2=0.9, T=0)
    full = coalition_effect(spec.model, spec.sampler, Coalition((0, 1)), x, 1000, 0)
    assert full.psi == pytest.approx(p["beta"] + p["alpha1"] * 0.2 + p["alpha2"] * 0.9, abs=1e-12)
    base = coalition_effect(spec.model, spec.sampler, Coalition(()), x, 50_000, 1)
    within(base.psi, base.mc_std_error, p["beta"] + p["alpha1"] / 2 + p["alpha2"] / 2, 4)


def test_effect_zero_when_model_ignores_t():
    spec = build_scenario("moderation")
    f = FunctionModel(spec.feature_names, lambda X: X[:, 0] * 3 + X[:, 1])
    eff = coalition_effect(f, spec.sampler, Coalition((1,)), spec.instance(C1=0.5, C2=0.5, T=1), 5000, 2)
    within(eff.psi, eff.mc_std_error, 0.0, 4)


def test_t_free_model_still_moves_under_confounding():
    # on-manifold arms condition on T, so C1 | T differs: 3 (E[C1|T=1] - E[C1|T=0]) = 3 (2/3 - 1/3)
    spec = build_scenario("bias")
    f = FunctionModel(spec.feature_names, lambda X: X[:, 0] * 3 + X[:, 1])
    eff = coalition_effect(f, spec.sampler, Coalition((1,)), spec.instance(C1=0.5, C2=0.5, T=1), 20_000, 2)
    within(eff.psi, eff.mc_std_error, 1.0, 4)


def test_division_arithmetic():
    w = PropensityWeight(Coalition(()), 0.5, "closed_form", False)
    eff = effect_from_shapley(ValueEstimate(0.25, 0.0, 1), w)
    assert eff.psi == 0.5 and eff.method == "shapley_division"


def test_division_guard_strict():
    w = PropensityWeight(Coalition(()), 0.001, "closed_form", False)
    with pytest.raises(NearZeroWeightError):
        effect_from_shapley(ValueEstimate(0.25, 0.0, 1), w, clip_epsilon=0.01, overlap="strict")


def test_division_round_trip_moderation():
    spec = build_scenario("moderation")
    x = spec.instance(C1=0.8, C2=0.3, T=1)
    for S in (Coalition(()), Coalition((0,)), Coalition((0, 1))):
        phi = coalition_shapley_value(spec.model, spec.sampler, S, x, n_draws=40_000, seed=3)
        w = propensity_weight(spec.propensity, spec.sampler, S, x)
        est = effect_from_shapley(phi, w)
        ref = coalition_effect(spec.model, spec.sampler, S, x, 40_000, 4)
        assert abs(est.psi - ref.psi) <= 5 * math.hypot(est.mc_std_error, ref.mc_std_error) + 1e-12


def test_shared_draw_identity_exact():
    spec = build_scenario("bias")
    x = spec.instance(C1=0.4, C2=0.1, T=0)
    for S in (Coalition(()), Coalition((0,)), Coalition((1,))):
        phi, w, psi = shared_draw_decomposition(spec.model, spec.sampler, S, x, 3000, 5)
        assert abs(phi - w * psi) < 1e-12


# ---------------------------------------------------------------- paths

def test_moderation_path_through_c1():
    spec = build_scenario("moderation")
    a1 = spec.params["alpha1"]
    for c1 in (0.1, 0.5, 0.95):
        pe = path_effect(spec.model, spec.sampler, spec.dag, "C1", spec.instance(C1=c1, C2=0.4, T=1),
                         n_draws=50_000, seed=6)
        within(pe.psi_path, pe.mc_std_error, a1 * (c1 - 0.5), 5)


def test_mediation_path_through_d():
    spec = build_scenario("mediation")
    p = spec.params
    for d in (0.0, 1.0):
        pe = path_effect(spec.model, spec.sampler, spec.dag, "D", spec.instance(Q=0.4, D=d, T=1),
                         n_draws=50_000, seed=7)
        within(pe.psi_path, pe.mc_std_error, 0.6 * p["alpha_D"] + p["alpha_DT"] * (d - 0.2), 5)


def test_alternative_variant_needs_single_covariate():
    spec = build_scenario("moderation")
    with pytest.raises(ValueError):
        path_effect(spec.model, spec.sampler, spec.dag, "C1", spec.instance(C1=0.1, C2=0.4, T=1),
                    variant="sideways")


def test_dependent_mediators_alternative_mean_zero():
    spec = build_scenario("dependent_mediators")
    # the reduced coalition only sees D (two values), so its inner MC error is shared by every outer row
    s = PwshapSettings(n_draws=50_000, seed=8)
    alt, alt_se = integration_check(spec.model, spec.sampler, spec.dag, "Q", n_outer=4000,
                                    settings=PwshapSettings(n_draws=1000, seed=8), variant="alternative")
    assert abs(alt) <= 5 * alt_se
    std, std_se = integration_check(spec.model, spec.sampler, spec.dag, "Q", n_outer=4000, settings=s)
    assert abs(std) > 5 * std_se


# ---------------------------------------------------------------- explain_instance

def test_moderation_null_paths_at_half():
    spec = build_scenario("moderation")
    x = spec.instance(C1=0.5, C2=0.5, T=1)
    rep = explain_instance(spec.model, spec.propensity, spec.sampler, spec.dag, x, PwshapSettings(n_draws=20_000))
    assert len(rep.path_effects) == 4
    for row in rep.path_effects:
        assert abs(row["psi"]) <= 5 * row["se"] + 1e-12, row
    assert rep.full_effect["psi"] == pytest.approx(1 + 1 + 2, abs=1e-12)


def test_explain_deterministic_and_worker_independent():
    spec = build_scenario("mixed")
    x = spec.instance(C1=0.3, C2=1.0, Q=1.0, D=0.0, T=1.0)
    runs = [explain_instance(spec.model, spec.propensity, spec.sampler, spec.dag, x,
                             PwshapSettings(n_draws=300, workers=w, merged_paths=True, alternative=True))
            for w in (1, 1, 2, 8)]
    blobs = {json.dumps(r.to_dict(), sort_keys=True) for r in runs}
    assert len(blobs) == 1


def test_explain_records_strict_failures_per_coalition():
    spec = build_scenario("moderation")
    prop = ConstantPropensity(0.995, spec.covariates, clip_epsilon=0.01)
    rep = explain_instance(spec.model, prop, spec.sampler, spec.dag, spec.instance(C1=0.2, C2=0.2, T=1),
                           PwshapSettings(n_draws=200, overlap="strict"))
    assert rep.errors
    assert all("psi" in r for r in rep.path_effects if r["method"] == "direct")
    assert all("error" in r for r in rep.path_effects if r["method"] == "shapley_division")


def test_explain_rejects_non_binary_treatment():
    spec = build_scenario("moderation")
    with pytest.raises(ValueError):
        explain_instance(spec.model, spec.propensity, spec.sampler, spec.dag, np.array([0.1, 0.2, 0.5]))


# ---------------------------------------------------------------- integration checks

def test_moderator_integrates_to_zero():
    spec = build_scenario("moderation")
    m, se = integration_check(spec.model, spec.sampler, spec.dag, "C1", {"C2": 0.3}, n_outer=2000,
                              settings=PwshapSettings(n_draws=400, seed=9), fixed_values={"T": 1})
    assert abs(m) <= 4 * se


def test_bias_non_confounder_zero_confounder_not():
    spec = build_scenario("bias")
    s = PwshapSettings(n_draws=400, seed=10)
    m2, se2 = integration_check(spec.model, spec.sampler, spec.dag, "C2", n_outer=2000, settings=s)
    assert abs(m2) <= 4 * se2
    m1, se1 = integration_check(spec.model, spec.sampler, spec.dag, "C1", n_outer=2000, settings=s)
    assert abs(m1) > 5 * se1


# ---------------------------------------------------------------- error bounds

def test_constant_perturbation_cancels_and_bounds_hold():
    spec = build_scenario("moderation")
    rep = error_bound_harness(spec.model, spec.sampler, spec.dag, e=0.1, n_trials=6,
                              settings=PwshapSettings(n_draws=1000, seed=11))
    constant = [c for c in rep.checks if c.trial == 0]
    assert constant and all(c.observed < 1e-12 for c in constant)
    assert rep.violations == []


def test_t_alternating_full_effect_shift():
    spec = build_scenario("moderation")
    e = 0.1
    bumped = FunctionModel(spec.feature_names, lambda X: spec.model.predict(X) + e * (2 * X[:, -1] - 1))
    x = spec.instance(C1=0.6, C2=0.2, T=1)
    a = coalition_effect(bumped, spec.sampler, Coalition((0, 1)), x, 100, 0).psi
    b = coalition_effect(spec.model, spec.sampler, Coalition((0, 1)), x, 100, 0).psi
    assert abs(a - b) == pytest.approx(2 * e) and abs(a - b) <= 4 * e


def test_propensity_bound_example():
    spec = build_scenario("moderation", {"p": 0.5})
    sup = sup_norm_over_box(spec.model, spec.domain_box())
    assert sup <= 10
    rep = propensity_bound_harness(spec.model, spec.sampler, spec.dag, p_true=0.5, e=0.05, e_prop=0.02,
                                   overlap_eps=0.1, sup_norm=10.0, n_trials=10,
                                   settings=PwshapSettings(n_draws=1000, seed=12))
    assert rep.violations == []


def test_propensity_bound_needs_overlap():
    spec = build_scenario("moderation")
    with pytest.raises(ValueError):
        propensity_bound_harness(spec.model, spec.sampler, spec.dag, p_true=0.95, e=0.05, e_prop=0.02,
                                 overlap_eps=0.1, sup_norm=10.0, n_trials=2)
