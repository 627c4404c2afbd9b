"""Acceptance suite: one PASS/FAIL line per criterion, then a hard assert.

Run with `pytest tests/test_acceptance.py -v`; the verdict lines are printed
even when pytest captures output. Tolerances: 5 SE oracle agreement, 4 SE
zero-mean and null-indirect checks, 6 SE slack on error bounds, 1e-12 for
float-exact identities.
"""
import math
import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from pwshap._rng import stream
from pwshap.analytic_oracles import estimate_entry, get_entry, run_oracle_check
from pwshap.blackbox_models import LinearInteractionModel, sup_norm_over_box
from pwshap.cli import main
from pwshap.conditional_sampler import GenerativeScenario, bernoulli_node, uniform_node
from pwshap.experiments import DESK_SCALE, PAPER_SCALE, ExperimentConfig, run_experiment
from pwshap.pwshap_engine import (
    PwshapSettings,
    coalition_effect,
    error_bound_harness,
    integration_check,
    propensity_bound_harness,
    propensity_weight,
    shared_draw_decomposition,
)
from pwshap.scenarios import build_scenario
from pwshap.shapley_engine import (
    MAX_FEATURES,
    Coalition,
    causal_shapley_split,
    coalition_shapley_value,
    coalition_subsets,
    full_shapley,
    shapley_weights,
)

EXACT = 1e-12


@pytest.fixture
def verdict(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
        assert ok, detail
    return emit


# ---------------------------------------------------------------- 1. decomposition identity

def _random_moderation_model(spec, rng):
    names = spec.feature_names
    main_terms = {n: round(float(rng.uniform(-3, 3)), 3) for n in names}
    inter = {pair: round(float(rng.uniform(-3, 3)), 3) for pair in (("C1", "T"), ("C2", "T"), ("C1", "C2"))}
    return LinearInteractionModel(names, round(float(rng.uniform(-2, 2)), 3), main_terms, inter)


def test_criterion_1_decomposition_identity(verdict):
    start = time.perf_counter()
    rng = stream(101, "acceptance-1")
    shared_gap, worst_z = 0.0, 0.0
    for k in range(50):
        spec = build_scenario("moderation", {"p": round(float(rng.uniform(0.2, 0.8)), 3)})
        model = _random_moderation_model(spec, rng)
        x = spec.instance(C1=rng.random(), C2=rng.random(), T=float(rng.integers(0, 2)))
        for S in coalition_subsets(2):
            phi, w, psi = shared_draw_decomposition(model, spec.sampler, S, x, 4000, seed=k)
            shared_gap = max(shared_gap, abs(phi - w * psi))
            ph = coalition_shapley_value(model, spec.sampler, S, x, "on_manifold", 4000, seed=1000 + k)
            wt = propensity_weight(spec.propensity, spec.sampler, S, x, 4000, seed=2000 + k)
            ps = coalition_effect(model, spec.sampler, S, x, 4000, seed=3000 + k)
            se = math.sqrt(ph.mc_std_error ** 2 + (wt.w * ps.mc_std_error) ** 2 + (ps.psi * wt.mc_std_error) ** 2)
            gap = abs(ph.value - wt.w * ps.psi)
            worst_z = max(worst_z, 0.0 if gap <= EXACT else gap / se)
    elapsed = time.perf_counter() - start
    ok = shared_gap <= EXACT and worst_z <= 5.0 and elapsed < 120
    verdict(1, ok, f"shared-draw max gap {shared_gap:.2e} (<= {EXACT:g}); independent-draw worst "
                   f"{worst_z:.2f} SE (<= 5); {elapsed:.1f}s (< 120s)")


# ---------------------------------------------------------------- 2. oracle suite

def test_criterion_2_oracle_suite(verdict):
    start = time.perf_counter()
    results = run_oracle_check(n_draws=50_000, seed=0)
    outside = [f"{r.entry.scenario}:{r.entry.quantity} z={r.z:.2f}" for r in results if r.z > 5.0]

    # named closed forms, checked at several instances against the formula written out here
    named = []
    mod = get_entry("moderation", "path[C1]")
    a1 = build_scenario("moderation").params["alpha1"]
    for c1 in (0.1, 0.5, 0.9):
        e = replace(mod, inputs={**mod.inputs, "C1": c1})
        assert e.value() == pytest.approx(a1 * (c1 - 0.5), abs=EXACT)
        named.append((e, e.value()))
    med = get_entry("mediation", "path[D]")
    prm = build_scenario("mediation").params
    for d in (0.0, 1.0):
        e = replace(med, inputs={**med.inputs, "D": d})
        assert e.value() == pytest.approx(0.6 * prm["alpha_D"] + prm["alpha_DT"] * (d - 0.2), abs=EXACT)
        named.append((e, e.value()))
    for e, expected in named:
        est, se = estimate_entry(e, n_draws=50_000, seed=5)
        z = 0.0 if abs(est - expected) <= 1e-9 else abs(est - expected) / se
        if z > 5.0:
            outside.append(f"{e.scenario}:{e.quantity}@{e.inputs} z={z:.2f}")

    # dependent mediators: standard mean nonzero, alternative mean zero
    std_entry = get_entry("dependent_mediators", "mean path[Q]")
    alt_entry = get_entry("dependent_mediators", "mean path_alt[Q]")
    contrast = abs(std_entry.value()) > 0.01 and alt_entry.value() == 0.0
    spec = build_scenario("dependent_mediators")
    m_std, se_std = integration_check(spec.model, spec.sampler, spec.dag, "Q", {"T": 1.0}, n_outer=4000,
                                      settings=PwshapSettings(n_draws=50_000, seed=6))
    m_alt, se_alt = integration_check(spec.model, spec.sampler, spec.dag, "Q", {"T": 1.0}, n_outer=4000,
                                      settings=PwshapSettings(n_draws=1000, seed=6), variant="alternative")
    z_std = abs(m_std - std_entry.value()) / se_std
    z_alt = abs(m_alt) / se_alt
    elapsed = time.perf_counter() - start
    ok = not outside and contrast and z_std <= 5 and z_alt <= 5 and elapsed < 600
    verdict(2, ok, f"{len(results)} oracle entries + {len(named)} named closed forms, outside 5 SE: {outside or 'none'}; "
                   f"E[Psi_Q] oracle {std_entry.value():.4f} est {m_std:.4f} ({z_std:.2f} SE), "
                   f"E[Psi_Q,alt] est {m_alt:.4f} ({z_alt:.2f} SE); {elapsed:.1f}s (< 600s)")


# ---------------------------------------------------------------- 3. integration properties

ZERO_MEAN = [("moderation", "mean path[C1]"), ("bias", "mean path[C2]"), ("mediation", "mean path[Q]"),
             ("mixed", "mean path[Q]|C1,C2"), ("mixed", "mean path[C2]|d,q"),
             ("dependent_mediators", "mean path_alt[Q]")]
NON_NULL = [("bias", "mean path[C1]"), ("mediation", "mean path[D]")]


def test_criterion_3_integration_properties(verdict):
    start = time.perf_counter()
    lines, ok = [], True
    for scen, q in ZERO_MEAN:
        entry = get_entry(scen, q)
        assert entry.value() == 0.0
        m, se = estimate_entry(entry, seed=7, n_outer=5000)
        passed = abs(m) <= 4 * se
        ok &= passed
        lines.append(f"{scen}:{q} {m / se:+.2f} SE")
    for scen, q in NON_NULL:
        m, se = estimate_entry(get_entry(scen, q), seed=7, n_outer=5000)
        passed = abs(m) > 5 * se
        ok &= passed
        lines.append(f"{scen}:{q} {m / se:+.1f} SE")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 300
    verdict(3, ok, "; ".join(lines) + f"; {elapsed:.1f}s (< 300s)")


# ---------------------------------------------------------------- 4. causal-Shapley indirect part

def test_criterion_4_null_indirect_and_mediation_closed_form(verdict):
    rng = stream(104, "acceptance-4")
    worst = 0.0
    for name in ("moderation", "bias"):
        for shared in (False, True):
            spec = build_scenario(name, {"shared_cause": shared})
            for k in range(20):
                x = spec.instance(C1=rng.random(), C2=rng.random(), T=float(rng.integers(0, 2)))
                ind = full_shapley(spec.model, spec.sampler, x, "causal", 5000, 40 + k).indirect["T"]
                worst = max(worst, 0.0 if abs(ind.value) <= EXACT else abs(ind.value) / ind.mc_std_error)

    cases = []
    for t, a_dt, form in ((0.0, 1.0, "short"), (1.0, 0.0, "short"), (1.0, 1.0, "full")):
        spec = build_scenario("mediation", {"alpha_DT": a_dt})
        a_d = spec.params["alpha_D"]
        expected = a_d * (0.3 - 0.6 * t) if form == "short" else (a_d + a_dt * t) * (0.3 - 0.6 * t)
        x = spec.instance(Q=0.3, D=1.0, T=t)
        _, ind = causal_shapley_split(spec.model, spec.sampler, Coalition((0,)), 2, x, 50_000, 44)
        cases.append((t, a_dt, form, expected, abs(ind.value - expected) / ind.mc_std_error))
    ok = worst <= 4 and all(c[-1] <= 4 for c in cases)
    detail = ", ".join(f"t={c[0]:g} aDT={c[1]:g} {c[2]} {c[3]:+.2f} at {c[4]:.2f} SE" for c in cases)
    verdict(4, ok, f"80 instances on the two pre-treatment DAGs, worst |indirect_T| {worst:.2f} SE (<= 4); "
                   f"mediation indirect: {detail}")


# ---------------------------------------------------------------- 5. error bounds

def test_criterion_5_error_bounds(verdict):
    settings = PwshapSettings(n_draws=2000, seed=105)
    parts, total, violations = [], 0, 0
    for name in ("moderation", "bias", "mediation"):
        spec = build_scenario(name)
        rep = error_bound_harness(spec.model, spec.sampler, spec.dag, e=0.1, n_trials=100, settings=settings)
        total += len(rep.checks)
        violations += len(rep.violations)
        parts.append(f"{name} worst ratio 2e {rep.worst('coalition_shapley'):.2f} / 4e {rep.worst('path'):.2f}")
    spec = build_scenario("moderation", {"p": 0.5})
    sup = sup_norm_over_box(spec.model, spec.domain_box())
    rep = propensity_bound_harness(spec.model, spec.sampler, spec.dag, p_true=0.5, e=0.05, e_prop=0.02,
                                   overlap_eps=0.1, sup_norm=sup, n_trials=100, settings=settings)
    total += len(rep.checks)
    violations += len(rep.violations)
    parts.append(f"estimated-propensity worst ratio {rep.worst('path_estimated'):.3f}")
    verdict(5, violations == 0, f"{violations} violations in {total} checks over 100 perturbations each; "
                                + "; ".join(parts))


# ---------------------------------------------------------------- 6 and 7. synthetic tables

def _means(table):
    return lambda variant, quantity: table.value(variant, quantity)[0]


@pytest.fixture(scope="module")
def desk_tables():
    return {name: run_experiment(ExperimentConfig(name, **DESK_SCALE)) for name in ("bias", "mediation")}


@pytest.mark.slow
def test_criterion_6_local_bias_table(verdict, desk_tables):
    v = _means(desk_tables["bias"])
    non_conf = max(v("i", "psi_C1"), v("i", "psi_C2"), v("ii", "psi_C2"))
    ii_ok = v("ii", "psi_C1") >= 3 * v("ii", "psi_C2")
    iii_ok = min(v("iii", "psi_C1"), v("iii", "psi_C2")) >= 3 * non_conf
    verdict(6, ii_ok and iii_ok,
            f"desk scale (ii) C1 {v('ii', 'psi_C1'):.3f} vs C2 {v('ii', 'psi_C2'):.3f}; (iii) C1 {v('iii', 'psi_C1'):.3f}, "
            f"C2 {v('iii', 'psi_C2'):.3f} vs largest non-confounder {non_conf:.3f}; factor 3 required")


@pytest.mark.slow
def test_criterion_6_paper_scale_magnitudes(verdict):
    cfg = ExperimentConfig("bias", **{**DESK_SCALE, **PAPER_SCALE}, variants=("ii",))
    t = run_experiment(cfg)
    c1, c2 = t.value("ii", "psi_C1")[0], t.value("ii", "psi_C2")[0]
    ok = 0.505 / 2 <= c1 <= 0.505 * 2 and 0.054 / 2 <= c2 <= 0.054 * 2
    verdict("6 (paper scale)", ok, f"(ii) C1 {c1:.3f} vs 0.505, C2 {c2:.3f} vs 0.054, factor-2 band")


@pytest.mark.slow
def test_criterion_7_local_mediation_table(verdict, desk_tables):
    v = _means(desk_tables["mediation"])
    ii_ok = v("ii", "psi_D") >= 3 * v("ii", "psi_Q")
    baseline = max(v("iii", "cs_direct"), v("iii", "cs_indirect"))
    iii_ok = v("iii", "psi_Q") > v("iii", "psi_D") >= 3 * baseline
    verdict(7, ii_ok and iii_ok,
            f"(ii) D {v('ii', 'psi_D'):.3f} vs Q {v('ii', 'psi_Q'):.3f}; (iii) Q {v('iii', 'psi_Q'):.3f} > "
            f"D {v('iii', 'psi_D'):.3f} >= 3 x baselines {baseline:.3f} (direct route Q {v('iii', 'psi_Q_direct'):.3f}, "
            f"D {v('iii', 'psi_D_direct'):.3f})")


# ---------------------------------------------------------------- 8. adversarial

@pytest.mark.slow
def test_criterion_8_adversarial(verdict):
    start = time.perf_counter()
    t = run_experiment(ExperimentConfig("adversarial", **DESK_SCALE))
    off = {m: t.value(m, "phi_T_off_manifold:mean_abs")[0] for m in ("fair", "unfair", "attacker")}
    on = {m: t.value(m, "phi_T_on_manifold:mean_abs")[0] for m in ("fair", "unfair", "attacker")}
    between = off["fair"] < off["attacker"] < off["unfair"]
    gap_ok = abs(on["attacker"] - on["unfair"]) <= 0.25 * abs(on["unfair"] - on["fair"])
    fair_min = all(min(d, key=d.get) == "fair" for d in (off, on))
    elapsed = time.perf_counter() - start
    fmt = lambda d: ", ".join(f"{k} {v:.3f}" for k, v in d.items())
    verdict(8, between and gap_ok and fair_min and elapsed < 300,
            f"mean |phi_T| off-manifold: {fmt(off)}; on-manifold: {fmt(on)}; {elapsed:.1f}s (< 300s)")


# ---------------------------------------------------------------- 9. Shapley axioms

def test_criterion_9_shapley_axioms(verdict):
    rng = stream(109, "acceptance-9")
    spec = build_scenario("moderation")
    worst_eff = worst_dummy = worst_sym = 0.0
    for k in range(20):
        model = _random_moderation_model(spec, rng)
        x = spec.instance(C1=rng.random(), C2=rng.random(), T=float(rng.integers(0, 2)))
        rep = full_shapley(model, spec.sampler, x, "on_manifold", 5000, 300 + k)
        # E f for independent U(0,1) covariates and T ~ Bern(p): substitute means into the bilinear model
        p = spec.params["p"]
        mean_row = np.array([[0.5, 0.5, p]])
        mean_f = float(model.predict(mean_row)[0])
        total = sum(a.value for a in rep.attributions.values())
        se = math.sqrt(sum(a.mc_std_error ** 2 for a in rep.attributions.values()))
        worst_eff = max(worst_eff, abs(total - (model.predict_one(x) - mean_f)) / se)

        names = ("A", "B", "T")
        sampler = GenerativeScenario([uniform_node("A"), uniform_node("B"), bernoulli_node("T", (), lambda pa: 0.4)],
                                     names)
        a, b = (round(float(v), 3) for v in rng.uniform(-3, 3, 2))
        dummy = LinearInteractionModel(names, a, {"A": b, "T": a}, {("A", "T"): b})
        z = np.array([rng.random(), rng.random(), float(rng.integers(0, 2))])
        att = full_shapley(dummy, sampler, z, "off_manifold", 3000, 400 + k).attributions["B"]
        worst_dummy = max(worst_dummy, 0.0 if abs(att.value) <= EXACT else abs(att.value) / att.mc_std_error)
        sym = LinearInteractionModel(names, 0.0, {"A": a, "B": a, "T": b}, {("A", "B"): b})
        z[1] = z[0]
        r = full_shapley(sym, sampler, z, "off_manifold", 3000, 500 + k).attributions
        d = abs(r["A"].value - r["B"].value)
        worst_sym = max(worst_sym, 0.0 if d <= EXACT else d / math.hypot(r["A"].mc_std_error, r["B"].mc_std_error))
    weights_exact = all(
        sum(math.comb(m - 1, s) * w for s, w in enumerate(shapley_weights(m))) == Fraction(1)
        for m in range(1, MAX_FEATURES + 1))
    ok = worst_eff <= 5 and worst_dummy <= 5 and worst_sym <= 5 and weights_exact
    verdict(9, ok, f"efficiency worst {worst_eff:.2f} SE, dummy worst {worst_dummy:.2f} SE, symmetry worst "
                   f"{worst_sym:.2f} SE (all <= 5) over 20 random models; weight sums exactly 1 for m = 1..{MAX_FEATURES}: "
                   f"{weights_exact}")


# ---------------------------------------------------------------- 10. determinism

def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_10_byte_identical_across_workers(verdict, tmp_path):
    gen = tmp_path / "gen"
    assert main(["generate", "mediation", "--samples", "200", "--seed", "3", "--out", str(gen)]) == 0
    assert main(["generate", "mediation", "--samples", "200", "--seed", "3", "--out", str(tmp_path / "gen2")]) == 0
    same = {"generate": _tree_bytes(gen) == _tree_bytes(tmp_path / "gen2")}
    runs = {}
    for w in (1, 2, 8):
        ex = tmp_path / f"explain{w}"
        assert main(["explain", "--data", str(gen / "data.csv"), "--dag", str(gen / "dag.json"), "--instances", "0-3",
                     "--mc-draws", "500", "--alternative", "--workers", str(w), "--out", str(ex)]) == 0
        xp = tmp_path / f"experiment{w}"
        assert main(["experiment", "mediation", "--replicates", "3", "--samples", "60", "--mc-draws", "300",
                     "--workers", str(w), "--out", str(xp)]) == 0
        runs[w] = (_tree_bytes(ex), _tree_bytes(xp))
    same["explain"] = runs[1][0] == runs[2][0] == runs[8][0]
    same["experiment"] = runs[1][1] == runs[2][1] == runs[8][1]
    for k in (1, 2):
        assert main(["oracle-check", "--scenario", "mediation", "--mc-draws", "500", "--n-outer", "100",
                     "--out", str(tmp_path / f"oracle{k}")]) == 0
    same["oracle-check"] = _tree_bytes(tmp_path / "oracle1") == _tree_bytes(tmp_path / "oracle2")
    verdict(10, all(same.values()), ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}" for k, v in same.items())
            + " (workers 1, 2, 8 where the command takes them)")
