"""Synthetic building-block scenarios: structural equations, DAG, true outcome model, exact propensity."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from pwshap._rng import derive_seed, stream
from pwshap.blackbox_models import FunctionModel, LinearInteractionModel, PredictiveModel, PropensityModel
from pwshap.causal_graph import DagSpec
from pwshap.conditional_sampler import GenerativeScenario, bernoulli_node, uniform_node
from pwshap.data import Dataset

SCENARIOS = ("moderation", "bias", "mediation", "mixed", "dependent_mediators", "adversarial",
             "bias_table1", "mediation_table2")

_LINEAR_BASE = dict(beta=1.0, gamma1=1.0, gamma2=1.0, alpha1=2.0, alpha2=4.0, noise=0.1)
_MEDIATION_BASE = dict(alpha_Q=1.0, alpha_D=1.0, alpha_T=1.0, alpha_DT=1.0, alpha_QT=1.0, noise=0.1)

DEFAULT_PARAMS = {
    "moderation": dict(_LINEAR_BASE, p=0.5, shared_cause=False),
    "bias": dict(_LINEAR_BASE, alpha=1.0, shared_cause=False),
    # experiment presets: all ones (see README, "Experiment presets")
    "bias_table1": dict(beta=1.0, gamma1=1.0, gamma2=1.0, alpha1=1.0, alpha2=1.0, noise=0.1, variant="ii"),
    "mediation": dict(_MEDIATION_BASE),
    "mediation_table2": dict(_MEDIATION_BASE, alpha_Q=3.0, variant="ii"),
    "mixed": dict(_MEDIATION_BASE, alpha_1=1.0, alpha_2=1.0, alpha_1T=1.0, alpha_2T=1.0, c1_law="uniform"),
    "dependent_mediators": dict(_MEDIATION_BASE),
    "adversarial": dict(pi=0.99, p_treat=0.5, noise=0.0),
}


class ScenarioError(ValueError):
    pass


class ScenarioPropensity(PropensityModel):
    """Exact P(T=1 | C=c) by Bayes over the structural likelihoods (no latent nodes)."""

    def __init__(self, sampler: GenerativeScenario, marginal_fn: Callable | None = None, clip_epsilon=0.01):
        if any(nd.latent for nd in sampler.nodes):
            self._ok = False
        else:
            self._ok = True
        self.sampler = sampler
        self.covariate_names = sampler.feature_names[:-1]
        self.clip_epsilon = clip_epsilon
        self._marginal_fn = marginal_fn

    def _joint(self, C, t):
        names = self.sampler.feature_names
        n = C.shape[0]
        vals = {nm: C[:, j] for j, nm in enumerate(names[:-1])}
        vals[names[-1]] = np.full(n, float(t))
        dens = np.ones(n)
        for node in self.sampler.nodes:
            dens *= node.likelihood(vals[node.name], {p: vals[p] for p in node.parents})
        return dens

    def propensity(self, C):
        if not self._ok:
            raise ScenarioError("exact propensity needs every structural node observed")
        C = np.atleast_2d(np.asarray(C, dtype=float))
        p1, p0 = self._joint(C, 1.0), self._joint(C, 0.0)
        tot = p1 + p0
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, p1 / np.where(tot > 0, tot, 1.0), np.nan)

    def marginal(self, known):
        return None if self._marginal_fn is None else self._marginal_fn(known)


@dataclass
class ScenarioSpec:
    name: str
    params: dict
    sampler: GenerativeScenario
    dag: DagSpec
    model: PredictiveModel
    propensity: ScenarioPropensity
    models: dict = field(default_factory=dict)
    provenance: str = ""

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.sampler.feature_names

    @property
    def covariates(self) -> tuple[str, ...]:
        return self.feature_names[:-1]

    def index(self, name: str) -> int:
        return self.feature_names.index(name)

    def instance(self, **values) -> np.ndarray:
        missing = [f for f in self.feature_names if f not in values]
        if missing:
            raise ScenarioError(f"instance is missing {missing}")
        return np.array([float(values[f]) for f in self.feature_names])

    def domain_box(self) -> dict:
        return {f: (0.0, 1.0) for f in self.feature_names}

    def params_json(self) -> str:
        return json.dumps(self.params, sort_keys=True)


def _check(name, params):
    base = DEFAULT_PARAMS[name]
    unknown = sorted(set(params) - set(base))
    if unknown:
        raise ScenarioError(f"unknown parameters for {name}: {unknown}; known: {sorted(base)}")
    merged = dict(base)
    merged.update(params)
    for key in ("p", "pi", "p_treat"):
        if key in merged and not 0.0 < float(merged[key]) < 1.0:
            raise ScenarioError(f"{key} must lie in (0, 1)")
    if "alpha" in merged and not float(merged["alpha"]) > 0:
        raise ScenarioError("alpha exponent must be > 0")
    if float(merged.get("noise", 0.0)) < 0:
        raise ScenarioError("noise must be >= 0")
    if "variant" in merged and merged["variant"] not in ("i", "ii", "iii"):
        raise ScenarioError("variant must be 'i', 'ii' or 'iii'")
    return merged


def _uniform_covariates(shared_cause: bool):
    """C1, C2 ~ U(0,1); with a shared latent cause L ~ Bern(1/2), C_i | L ~ U(L/2, L/2 + 1/2)."""
    if not shared_cause:
        return [uniform_node("C1"), uniform_node("C2")]
    lo = lambda pa: 0.5 * pa["L"]
    hi = lambda pa: 0.5 * pa["L"] + 0.5
    return [bernoulli_node("L", (), lambda pa: 0.5, latent=True),
            uniform_node("C1", ("L",), lo, hi, max_density=2.0),
            uniform_node("C2", ("L",), lo, hi, max_density=2.0)]


def _two_covariate_model(p):
    return LinearInteractionModel(("C1", "C2", "T"), 0.0,
                                  {"T": p["beta"], "C1": p["gamma1"], "C2": p["gamma2"]},
                                  {("T", "C1"): p["alpha1"], ("T", "C2"): p["alpha2"]})


def _mediation_model(p, extra_main=None, extra_inter=None, names=("Q", "D", "T")):
    main = {"Q": p["alpha_Q"], "D": p["alpha_D"], "T": p["alpha_T"]}
    inter = {("D", "T"): p["alpha_DT"], ("Q", "T"): p["alpha_QT"]}
    main.update(extra_main or {})
    inter.update(extra_inter or {})
    return LinearInteractionModel(names, 0.0, main, inter)


def _dag(nodes, edges):
    return DagSpec(tuple(nodes), tuple(edges), "T", "Y")


def _build_moderation(p):
    pt = float(p["p"])
    nodes = _uniform_covariates(p["shared_cause"]) + [bernoulli_node("T", (), lambda pa: pt)]
    sampler = GenerativeScenario(nodes, ("C1", "C2", "T"), name="moderation")
    dag = _dag(["C1", "C2", "T", "Y"], [("C1", "Y"), ("C2", "Y"), ("T", "Y")])
    marginal = lambda known: pt
    return sampler, dag, _two_covariate_model(p), marginal, "randomized treatment, two moderators"


def _build_bias(p):
    a = float(p["alpha"])
    nodes = _uniform_covariates(p["shared_cause"]) + [bernoulli_node("T", ("C1",), lambda pa: pa["C1"] ** a)]
    sampler = GenerativeScenario(nodes, ("C1", "C2", "T"), name="bias")
    dag = _dag(["C1", "C2", "T", "Y"], [("C1", "T"), ("C1", "Y"), ("C2", "Y"), ("T", "Y")])

    def marginal(known):
        if p["shared_cause"]:
            return None
        return known[0] ** a if 0 in known else 1.0 / (a + 1.0)

    return sampler, dag, _two_covariate_model(p), marginal, "E[T|C1,C2] = C1^alpha"


def _build_bias_table1(p):
    v = p["variant"]
    prob = {"i": lambda pa: np.full_like(pa["C1"], 0.5),
            "ii": lambda pa: pa["C1"],
            "iii": lambda pa: pa["C1"] * pa["C2"]}[v]
    parents = {"i": ("C1",), "ii": ("C1",), "iii": ("C1", "C2")}[v]
    nodes = [uniform_node("C1"), uniform_node("C2"), bernoulli_node("T", parents, prob)]
    sampler = GenerativeScenario(nodes, ("C1", "C2", "T"), name=f"bias_table1_{v}")
    # the hypothesised graph is the same for every variant; only the data changes
    dag = _dag(["C1", "C2", "T", "Y"], [("C1", "T"), ("C2", "T"), ("C1", "Y"), ("C2", "Y"), ("T", "Y")])

    def marginal(known):
        c1 = known.get(0, 0.5)
        c2 = known.get(1, 0.5)
        return {"i": 0.5, "ii": c1, "iii": c1 * c2}[v]

    desc = {"i": "p(T=1|C) = 0.5", "ii": "p(T=1|C) = C1", "iii": "p(T=1|C) = C1*C2"}[v]
    return sampler, dag, _two_covariate_model(p), marginal, desc


def _mediation_dag():
    # both Q and D are hypothesised mediators, whatever the data say
    return _dag(["Q", "D", "T", "Y"], [("T", "Q"), ("T", "D"), ("Q", "Y"), ("D", "Y"), ("T", "Y")])


def _build_mediation(p):
    nodes = [uniform_node("Q"), bernoulli_node("T", (), lambda pa: 0.5),
             bernoulli_node("D", ("T",), lambda pa: 0.8 - 0.6 * pa["T"])]
    sampler = GenerativeScenario(nodes, ("Q", "D", "T"), name="mediation")
    return sampler, _mediation_dag(), _mediation_model(p), None, "D | T ~ Bern(0.8 - 0.6 T), Q ~ U(0,1)"


def _build_mediation_table2(p):
    v = p["variant"]
    nodes = [bernoulli_node("T", (), lambda pa: 0.5)]
    if v == "iii":
        lo = lambda pa: 0.4 * (1.0 - pa["T"])
        nodes.append(uniform_node("Q", ("T",), lo, lambda pa: lo(pa) + 0.6, max_density=1.0 / 0.6))
    else:
        nodes.append(uniform_node("Q"))
    if v == "i":
        nodes.append(bernoulli_node("D", (), lambda pa: 0.5))
    else:
        nodes.append(bernoulli_node("D", ("T",), lambda pa: 0.8 - 0.6 * pa["T"]))
    sampler = GenerativeScenario(nodes, ("Q", "D", "T"), name=f"mediation_table2_{v}")
    dag = _mediation_dag()
    desc = {"i": "no mediators", "ii": "D mediates", "iii": "Q and D mediate"}[v]
    return sampler, dag, _mediation_model(p), None, desc


def _build_mixed(p):
    if p["c1_law"] == "uniform":
        c1 = uniform_node("C1")
    elif p["c1_law"] == "bernoulli":
        c1 = bernoulli_node("C1", (), lambda pa: 0.5)
    else:
        raise ScenarioError("c1_law must be 'uniform' or 'bernoulli'")
    nodes = [c1, bernoulli_node("C2", (), lambda pa: 0.5),
             bernoulli_node("Q", ("C1",), lambda pa: 1.0 - pa["C1"]),
             bernoulli_node("T", ("C1",), lambda pa: pa["C1"]),
             bernoulli_node("D", ("T", "C1"), lambda pa: 0.8 - 0.3 * (pa["T"] + pa["C1"]))]
    names = ("C1", "C2", "Q", "D", "T")
    sampler = GenerativeScenario(nodes, names, name="mixed")
    dag = _dag(["C1", "C2", "Q", "D", "T", "Y"],
               [("C1", "T"), ("C2", "T"), ("C1", "Q"), ("C1", "D"), ("T", "Q"), ("T", "D"),
                ("C1", "Y"), ("C2", "Y"), ("Q", "Y"), ("D", "Y"), ("T", "Y")])
    model = _mediation_model(p, {"C1": p["alpha_1"], "C2": p["alpha_2"]},
                             {("C1", "T"): p["alpha_1T"], ("C2", "T"): p["alpha_2T"]}, names)
    return sampler, dag, model, None, f"confounder C1 ({p['c1_law']}), moderator C2, mediator D, null mediator Q"


def _build_dependent(p):
    nodes = [uniform_node("Q"), bernoulli_node("T", (), lambda pa: 0.5),
             bernoulli_node("D", ("T", "Q"), lambda pa: 0.8 - 0.3 * (pa["T"] + pa["Q"]))]
    sampler = GenerativeScenario(nodes, ("Q", "D", "T"), name="dependent_mediators")
    dag = _dag(["Q", "D", "T", "Y"], [("T", "Q"), ("T", "D"), ("Q", "D"), ("D", "Y"), ("Q", "Y"), ("T", "Y")])
    return sampler, dag, _mediation_model(p), None, "D | T, Q ~ Bern(0.8 - 0.3 (T + Q))"


def adversarial_models(names=("Q", "D", "T")):
    """(fair, unfair, attacker, on_manifold) over rows laid out as (Q, D, T)."""
    iq, i_d, it = (names.index(n) for n in ("Q", "D", "T"))

    def on_manifold(X):
        X = np.atleast_2d(X)
        return X[:, it] == 1.0 - X[:, i_d]

    fair = FunctionModel(names, lambda X: X[:, iq], sup_norm_bound=1.0, name="fair")
    unfair = FunctionModel(names, lambda X: (X[:, it] + X[:, it] * X[:, i_d]) / 2.0, sup_norm_bound=1.0,
                           name="unfair")
    attacker = FunctionModel(names, lambda X: np.where(on_manifold(X), unfair.predict(X), fair.predict(X)),
                             sup_norm_bound=1.0, name="attacker")
    return fair, unfair, attacker, on_manifold


def _build_adversarial(p):
    pi, pt = float(p["pi"]), float(p["p_treat"])
    nodes = [uniform_node("Q"), bernoulli_node("T", (), lambda pa: pt),
             bernoulli_node("D", ("T",), lambda pa: pi * (1.0 - pa["T"]) + (1.0 - pi) * pa["T"])]
    sampler = GenerativeScenario(nodes, ("Q", "D", "T"), name="adversarial")
    dag = _dag(["Q", "D", "T", "Y"], [("T", "D"), ("D", "Y"), ("Q", "Y"), ("T", "Y")])
    fair, unfair, attacker, _ = adversarial_models()
    return sampler, dag, unfair, None, "T ~ Bern(p_treat) (binary, see notes), D ~ Bern(pi(1-T)+(1-pi)T), Q ~ U(0,1)"


_BUILDERS = {
    "moderation": _build_moderation,
    "bias": _build_bias,
    "bias_table1": _build_bias_table1,
    "mediation": _build_mediation,
    "mediation_table2": _build_mediation_table2,
    "mixed": _build_mixed,
    "dependent_mediators": _build_dependent,
    "adversarial": _build_adversarial,
}


def build_scenario(name: str, params: dict | None = None, clip_epsilon: float = 0.01) -> ScenarioSpec:
    if name not in _BUILDERS:
        raise ScenarioError(f"unknown scenario {name!r}; available: {', '.join(SCENARIOS)}")
    p = _check(name, dict(params or {}))
    sampler, dag, model, marginal, desc = _BUILDERS[name](p)
    models = {}
    if name == "adversarial":
        fair, unfair, attacker, on_manifold = adversarial_models(sampler.feature_names)
        models = {"fair": fair, "unfair": unfair, "attacker": attacker, "on_manifold": on_manifold}
    return ScenarioSpec(name, p, sampler, dag, model, ScenarioPropensity(sampler, marginal, clip_epsilon),
                        models, desc)


def generate_dataset(scenario: ScenarioSpec, n: int, noise_sigma: float | None = None, seed: int = 0) -> Dataset:
    """Ancestral draws of the features plus outcome = true model + Gaussian noise."""
    if n < 2:
        raise ValueError("n must be >= 2")
    sigma = scenario.params.get("noise", 0.0) if noise_sigma is None else noise_sigma
    X = scenario.sampler.sample_marginal(n, derive_seed(seed, "data"))
    y = scenario.model.predict(X)
    if sigma > 0:
        y = y + sigma * stream(seed, "noise").standard_normal(n)
    return Dataset(scenario.covariates, "T", "Y", X, y)
