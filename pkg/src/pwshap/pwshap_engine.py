"""Propensity weights, coalition-wise and path-wise treatment effects, and the per-instance report."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from pwshap import __version__
from pwshap._rng import derive_seed
from pwshap.blackbox_models import clip_propensity
from pwshap.causal_graph import CausalPath, DagSpec, coalition_label, enumerate_paths, single_path_for
from pwshap.conditional_sampler import SupportError
from pwshap.shapley_engine import Coalition, ValueEstimate, _mean_se, value_function

REPORT_SCHEMA_VERSION = "1"


class NearZeroWeightError(ValueError):
    pass


@dataclass(frozen=True)
class PropensityWeight:
    coalition: Coalition
    w: float
    source: str  # closed_form | fitted_marginalized
    clip_applied: bool
    mc_std_error: float = 0.0
    propensity: float = float("nan")

    def to_dict(self, covariates=None) -> dict:
        return {
            "coalition": self.coalition.names(covariates) if covariates else list(self.coalition.members),
            "w": self.w,
            "se": self.mc_std_error,
            "propensity": self.propensity,
            "source": self.source,
            "clip_applied": self.clip_applied,
        }


@dataclass(frozen=True)
class CoalitionEffect:
    coalition: Coalition
    psi: float
    mc_std_error: float
    interpretation_label: str = ""
    method: str = "direct"

    def to_dict(self, covariates=None) -> dict:
        return {
            "coalition": self.coalition.names(covariates) if covariates else list(self.coalition.members),
            "psi": self.psi,
            "se": self.mc_std_error,
            "label": self.interpretation_label,
            "method": self.method,
        }


@dataclass(frozen=True)
class PathEffect:
    path: CausalPath
    psi_path: float
    mc_std_error: float
    components: tuple[CoalitionEffect, CoalitionEffect]
    variant: str = "standard"
    method: str = "direct"


def _coalition_name(S: Coalition, covariates) -> str:
    return "{" + ",".join(S.names(covariates)) + "}"


def _check_binary_t(x):
    t = float(x[-1])
    if t not in (0.0, 1.0):
        raise ValueError(f"treatment value must be 0 or 1, got {t}")
    return t


def propensity_weight(propensity, sampler, S: Coalition, x, n_draws: int = 10_000, seed: int = 0,
                      clip_epsilon: float | None = None, overlap: str = "clip",
                      covariates=None) -> PropensityWeight:
    """w = t - E[pi(c_S, C_rest) | c_S], marginalising the propensity model over the sampler."""
    x = np.asarray(x, dtype=float)
    t = _check_binary_t(x)
    eps = propensity.clip_epsilon if clip_epsilon is None else clip_epsilon
    n_cov = x.shape[0] - 1
    known = {i: float(x[i]) for i in S.members}
    se = 0.0
    exact = propensity.marginal(known)
    if exact is not None:
        p, source = float(exact), "closed_form"
    elif len(S.members) == n_cov:
        p, source = float(propensity.propensity(x[None, :-1])[0]), "fitted_marginalized"
    else:
        rows = sampler.sample_conditional(known, n_draws, derive_seed(seed, "propensity", S.mask(n_cov)))
        p, se = _mean_se(propensity.propensity(rows[:, :-1]))
        p = min(max(p, 0.0), 1.0)
        source = "fitted_marginalized"
    if overlap == "strict":
        if abs(t - p) < eps:
            raise NearZeroWeightError(
                f"propensity weight {t - p:.4g} for coalition {_coalition_name(S, covariates or [f'C{i}' for i in range(n_cov)])} "
                f"is below clip_epsilon={eps}")
        return PropensityWeight(S, t - p, source, False, se, p)
    if overlap != "clip":
        raise ValueError("overlap must be 'clip' or 'strict'")
    pc = clip_propensity(p, eps)
    return PropensityWeight(S, t - pc, source, pc != p, se, p)


def coalition_effect(model, sampler, S: Coalition, x, n_draws: int = 10_000, seed: int = 0,
                     dag: DagSpec | None = None, mode: str = "on_manifold") -> CoalitionEffect:
    """Psi_S = v(S + T; c_S, 1) - v(S + T; c_S, 0), both arms drawn from the coalition's seed."""
    if S.includes_treatment:
        raise ValueError("S must exclude the treatment")
    x = np.asarray(x, dtype=float)
    x1, x0 = x.copy(), x.copy()
    x1[-1], x0[-1] = 1.0, 0.0
    St = S.with_treatment()
    v1 = value_function(model, sampler, St, x1, mode, n_draws, seed)
    v0 = value_function(model, sampler, St, x0, mode, n_draws, seed)
    label = coalition_label(dag, S.names(dag.covariates)) if dag is not None else ""
    return CoalitionEffect(S, v1.value - v0.value, math.hypot(v1.mc_std_error, v0.mc_std_error), label)


def effect_from_shapley(phi: ValueEstimate, w: PropensityWeight, clip_epsilon: float = 0.01,
                        overlap: str = "clip", label: str = "") -> CoalitionEffect:
    """Psi = phi / w, SE by the first-order delta method."""
    if abs(w.w) < clip_epsilon:
        if overlap == "strict":
            raise NearZeroWeightError(f"|w| = {abs(w.w):.4g} below clip_epsilon={clip_epsilon}")
    if w.w == 0.0:
        raise NearZeroWeightError("propensity weight is exactly zero")
    psi = phi.value / w.w
    se = math.hypot(phi.mc_std_error / w.w, phi.value * w.mc_std_error / w.w ** 2)
    return CoalitionEffect(w.coalition, psi, se, label, "shapley_division")


def shared_draw_decomposition(model, sampler, S: Coalition, x, n_draws: int = 10_000, seed: int = 0):
    """One joint draw of (C_rest, T) given c_S, split by T.

    Returns (phi, w, psi) with phi = mean_{T=t} - mean_all, w = t - share(T=1),
    psi = mean_{T=1} - mean_{T=0}; phi == w * psi up to float rounding.
    """
    x = np.asarray(x, dtype=float)
    t = _check_binary_t(x)
    n_cov = x.shape[0] - 1
    known = {i: float(x[i]) for i in S.members}
    rows = sampler.sample_conditional(known, n_draws, derive_seed(seed, "shared", S.mask(n_cov)))
    drawn_t = rows[:, -1]
    treated = drawn_t == 1.0
    n1 = int(treated.sum())
    if n1 == 0 or n1 == n_draws:
        raise NearZeroWeightError(f"all {n_draws} shared draws have T={int(drawn_t[0])}; cannot split")
    rows1 = rows[treated].copy()
    rows0 = rows[~treated].copy()
    rows1[:, -1] = 1.0
    rows0[:, -1] = 0.0
    m1 = float(model.predict(rows1).mean())
    m0 = float(model.predict(rows0).mean())
    share = n1 / n_draws
    mean_all = share * m1 + (1 - share) * m0
    phi = (m1 if t == 1.0 else m0) - mean_all
    return phi, t - share, m1 - m0


# ---------------------------------------------------------------- paths

def _reduced_coalition(dag: DagSpec, path: CausalPath) -> Coalition:
    covs = dag.covariates
    return Coalition(tuple(i for i, c in enumerate(covs) if c not in path.inner_nodes))


def path_effect(model, sampler, dag: DagSpec, path, x, variant: str = "standard", n_draws: int = 10_000,
                seed: int = 0) -> PathEffect:
    """Full-coalition effect minus the effect with the path's inner nodes removed (direct route).

    variant="alternative" (single-covariate paths only): Psi_{C_i}(c_i) - Psi_{empty}.
    """
    if isinstance(path, str):
        path = single_path_for(dag, path)
    covs = dag.covariates
    if path.is_direct:
        raise ValueError("the direct T->Y edge has no path-wise effect; use the full coalition effect")
    if variant == "standard":
        upper = Coalition(tuple(range(len(covs))))
        lower = _reduced_coalition(dag, path)
    elif variant == "alternative":
        if len(path.inner_nodes) != 1:
            raise ValueError("alternative path effect is only defined for single-covariate paths")
        upper = Coalition((covs.index(path.inner_nodes[0]),))
        lower = Coalition(())
    else:
        raise ValueError("variant must be 'standard' or 'alternative'")
    a = coalition_effect(model, sampler, upper, x, n_draws, seed, dag)
    b = coalition_effect(model, sampler, lower, x, n_draws, seed, dag)
    return PathEffect(path, a.psi - b.psi, math.hypot(a.mc_std_error, b.mc_std_error), (a, b), variant)


# ---------------------------------------------------------------- per-instance report

@dataclass(frozen=True)
class PwshapSettings:
    n_draws: int = 10_000
    seed: int = 0
    clip_epsilon: float = 0.01
    overlap: str = "clip"
    merged_paths: bool = False
    alternative: bool = False
    discrepancy_sigmas: float = 5.0
    workers: int = 1
    paths: tuple[str, ...] | None = None  # restrict to these single covariates

    def to_dict(self) -> dict:
        out = {
            "n_draws": self.n_draws,
            "seed": self.seed,
            "clip_epsilon": self.clip_epsilon,
            "overlap": self.overlap,
            "merged_paths": self.merged_paths,
            "alternative": self.alternative,
            "discrepancy_sigmas": self.discrepancy_sigmas,
        }
        if self.paths is not None:
            out["paths"] = list(self.paths)
        return out


@dataclass
class PwshapReport:
    feature_names: tuple[str, ...]
    instance: tuple[float, ...]
    treatment: str
    outcome: str
    settings: PwshapSettings
    coalition_effects: list[dict]
    weights: list[dict]
    path_effects: list[dict]
    warnings: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def _find(self, coalition_names, method):
        for e in self.coalition_effects:
            if e["coalition"] == list(coalition_names) and e["method"] == method:
                return e
        return None

    @property
    def base_effect(self):
        return self._find([], "direct")

    @property
    def full_effect(self):
        return self._find(list(self.feature_names[:-1]), "direct")

    def path(self, description: str, method: str = "direct") -> dict:
        for p in self.path_effects:
            if p["path"] == description and p["method"] == method:
                return p
        raise KeyError(description)

    def to_dict(self) -> dict:
        out = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "tool_version": __version__,
            "features": list(self.feature_names),
            "treatment": self.treatment,
            "outcome": self.outcome,
            "instance": dict(zip(self.feature_names, self.instance)),
            "settings": self.settings.to_dict(),
            "base_effect": self.base_effect,
            "full_effect": self.full_effect,
            "coalition_effects": self.coalition_effects,
            "weights": self.weights,
            "path_effects": self.path_effects,
            "warnings": self.warnings,
            "errors": self.errors,
        }
        out.update(self.extra)
        return out

    def summary_rows(self) -> list[dict]:
        """Rows for the CSV summary: path, role, psi, se, weight, method."""
        rows = []
        for label, eff in (("base", self.base_effect), ("full", self.full_effect)):
            if eff is not None:
                rows.append({"path": f"{self.treatment}->{self.outcome}|{label}", "role": eff["label"],
                             "psi": eff["psi"], "se": eff["se"], "weight": "", "method": eff["method"]})
        for p in self.path_effects:
            rows.append({"path": p["path"], "role": p["role"], "psi": p.get("psi", ""), "se": p.get("se", ""),
                         "weight": p.get("weight", ""), "method": p["method"]})
        return rows


def explain_instance(model, propensity, sampler, dag: DagSpec, x, settings: PwshapSettings = PwshapSettings()) -> PwshapReport:
    """Base, full and path-wise effects by both routes (direct difference and Shapley division)."""
    x = np.asarray(x, dtype=float)
    t = _check_binary_t(x)
    covs = dag.covariates
    n_cov = len(covs)
    paths = [p for p in enumerate_paths(dag, merged=settings.merged_paths) if not p.is_direct]
    if settings.paths is not None:
        paths = [p for p in paths if len(p.inner_nodes) == 1 and p.inner_nodes[0] in settings.paths]

    needed = {Coalition(()), Coalition(tuple(range(n_cov)))}
    for p in paths:
        needed.add(_reduced_coalition(dag, p))
        if settings.alternative and len(p.inner_nodes) == 1:
            needed.add(Coalition((covs.index(p.inner_nodes[0]),)))
    needed = sorted(needed, key=lambda S: (len(S.members), S.members))

    def compute(S: Coalition):
        label = coalition_label(dag, S.names(covs))
        out = {"direct": None, "division": None, "weight": None, "phi": None, "error": None, "warnings": []}
        try:
            St = S.with_treatment()
            x1, x0 = x.copy(), x.copy()
            x1[-1], x0[-1] = 1.0, 0.0
            v1 = value_function(model, sampler, St, x1, "on_manifold", settings.n_draws, settings.seed)
            v0 = value_function(model, sampler, St, x0, "on_manifold", settings.n_draws, settings.seed)
            out["direct"] = CoalitionEffect(S, v1.value - v0.value, math.hypot(v1.mc_std_error, v0.mc_std_error), label)
            vS = value_function(model, sampler, S, x, "on_manifold", settings.n_draws, settings.seed)
            out["phi"] = (v1 if t == 1.0 else v0) - vS
            out["warnings"] = list(v1.warnings + v0.warnings + vS.warnings)
        except (SupportError, ValueError) as exc:
            out["error"] = str(exc)
            return out
        # a weight failure (strict overlap) only loses the division route for this coalition
        try:
            out["weight"] = propensity_weight(propensity, sampler, S, x, settings.n_draws, settings.seed,
                                              settings.clip_epsilon, settings.overlap, covs)
            out["division"] = effect_from_shapley(out["phi"], out["weight"], settings.clip_epsilon,
                                                  settings.overlap, label)
        except (SupportError, ValueError) as exc:
            out["error"] = str(exc)
        return out

    if settings.workers > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            results = dict(zip(needed, pool.map(compute, needed)))
    else:
        results = {S: compute(S) for S in needed}

    coalition_rows, weight_rows, warnings, errors = [], [], [], []
    for S in needed:
        r = results[S]
        name = _coalition_name(S, covs)
        if r["error"]:
            errors.append(f"coalition {name}: {r['error']}")
        warnings.extend(r["warnings"])
        for key in ("direct", "division"):
            if r[key] is not None:
                coalition_rows.append(r[key].to_dict(covs))
        if r["weight"] is not None:
            wd = r["weight"].to_dict(covs)
            wd["phi"] = r["phi"].value
            wd["phi_se"] = r["phi"].mc_std_error
            weight_rows.append(wd)
            if r["weight"].clip_applied:
                warnings.append(f"propensity clipped for coalition {name}")

    path_rows = []
    full = Coalition(tuple(range(n_cov)))
    for p in paths:
        desc = p.describe(dag.treatment, dag.outcome)
        variants = [("standard", full, _reduced_coalition(dag, p))]
        if settings.alternative and len(p.inner_nodes) == 1:
            variants.append(("alternative", Coalition((covs.index(p.inner_nodes[0]),)), Coalition(())))
        per_method = {}
        for variant, upper, lower in variants:
            for method, key in (("direct", "direct"), ("shapley_division", "division")):
                a, b = results[upper][key], results[lower][key]
                row = {"path": desc, "inner_nodes": list(p.inner_nodes), "role": p.role_label,
                       "variant": variant, "method": method,
                       "components": [_coalition_name(upper, covs), _coalition_name(lower, covs)]}
                if a is None or b is None:
                    row["error"] = "; ".join(
                        filter(None, [results[upper]["error"], results[lower]["error"]])) or "missing component"
                else:
                    row["psi"] = a.psi - b.psi
                    row["se"] = math.hypot(a.mc_std_error, b.mc_std_error)
                    if method == "shapley_division":
                        row["weight"] = results[lower]["weight"].w
                path_rows.append(row)
                per_method[(variant, method)] = row
            d, s = per_method[(variant, "direct")], per_method[(variant, "shapley_division")]
            if "psi" in d and "psi" in s:
                gap = abs(d["psi"] - s["psi"])
                scale = math.hypot(d["se"], s["se"])
                if gap > settings.discrepancy_sigmas * scale and gap > 1e-12:
                    warnings.append(f"{desc} ({variant}): direct and Shapley-division routes differ by "
                                    f"{gap:.4g} (> {settings.discrepancy_sigmas:g} SE)")
    return PwshapReport(dag.feature_names, tuple(float(v) for v in x), dag.treatment, dag.outcome, settings,
                        coalition_rows, weight_rows, path_rows, warnings, errors)


# ---------------------------------------------------------------- integration property checks

def integration_check(model, sampler, dag: DagSpec, covariate_i, conditioning_values=None, n_outer: int = 5000,
                      settings: PwshapSettings = PwshapSettings(n_draws=1000), fixed_values=None,
                      variant: str = "standard") -> tuple[float, float]:
    """Monte-Carlo mean (and SE) of the path effect through `covariate_i`.

    Outer points come from the sampler conditioned on `conditioning_values`
    (empty: the joint law); `fixed_values` are then written over the draws
    without conditioning on them. Inner effects whose inputs repeat are
    computed once and their MC error counted once.
    """
    covs = dag.covariates
    names = dag.feature_names
    cov_name = covs[covariate_i] if isinstance(covariate_i, int) else covariate_i
    i = covs.index(cov_name)
    known = {names.index(k) if isinstance(k, str) else int(k): float(v)
             for k, v in (conditioning_values or {}).items()}
    rows = sampler.sample_conditional(known, n_outer, derive_seed(settings.seed, "outer"))
    for k, v in (fixed_values or {}).items():
        rows[:, names.index(k) if isinstance(k, str) else int(k)] = float(v)
    n_cov = len(covs)
    if variant == "standard":
        upper = Coalition(tuple(range(n_cov)))
        lower = Coalition(tuple(j for j in range(n_cov) if j != i))
    elif variant == "alternative":
        upper, lower = Coalition((i,)), Coalition(())
    else:
        raise ValueError("variant must be 'standard' or 'alternative'")

    cache = {}

    def effect(S: Coalition, row):
        key = (S.members, tuple(row[list(S.members)]))
        if key not in cache:
            seed = derive_seed(settings.seed, "inner", len(cache))
            cache[key] = coalition_effect(model, sampler, S, row, settings.n_draws, seed)
        return key, cache[key]

    psi = np.empty(n_outer)
    groups = {}
    for r in range(n_outer):
        ku, eu = effect(upper, rows[r])
        kl, el = effect(lower, rows[r])
        psi[r] = eu.psi - el.psi
        for key, eff in ((ku, eu), (kl, el)):
            cnt, se = groups.get(key, (0, eff.mc_std_error))
            groups[key] = (cnt + 1, se)
    mean = float(psi.mean())
    between = float(psi.var(ddof=1)) / n_outer if n_outer > 1 else 0.0
    shared = sum((cnt / n_outer) ** 2 * se ** 2 for cnt, se in groups.values() if cnt > 1)
    return mean, math.sqrt(between + shared)


# ---------------------------------------------------------------- error-bound harness

@dataclass(frozen=True)
class BoundCheck:
    trial: int
    kind: str          # coalition_shapley | path | path_estimated
    target: str
    observed: float
    bound: float
    slack: float

    @property
    def passed(self) -> bool:
        return self.observed <= self.bound + self.slack

    def to_dict(self) -> dict:
        return {"trial": self.trial, "kind": self.kind, "target": self.target, "observed": self.observed,
                "bound": self.bound, "slack": self.slack, "passed": self.passed}


@dataclass
class BoundReport:
    checks: list

    @property
    def violations(self) -> list:
        return [c for c in self.checks if not c.passed]

    def worst(self, kind: str) -> float:
        """Largest observed / (bound + slack) ratio for one kind of check."""
        ratios = [c.observed / (c.bound + c.slack) for c in self.checks if c.kind == kind and c.bound + c.slack > 0]
        return max(ratios, default=0.0)


def bump_perturbation(feature_names, box: dict, e: float, rng, n_bumps: int = 2):
    """Random sum of Gaussian bumps with sup-norm at most e on all inputs."""
    d = len(feature_names)
    lo = np.array([box[f][0] for f in feature_names], dtype=float)
    hi = np.array([box[f][1] for f in feature_names], dtype=float)
    centers = lo + (hi - lo) * rng.random((n_bumps, d))
    widths = (hi - lo) * (0.1 + 0.9 * rng.random((n_bumps, d))) + 1e-12
    mix = rng.dirichlet(np.ones(n_bumps)) * rng.choice([-1.0, 1.0], n_bumps)

    def delta(X):
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0])
        for k in range(n_bumps):
            z = (X - centers[k]) / widths[k]
            out += mix[k] * np.exp(-0.5 * np.sum(z * z, axis=1))
        return e * out

    return delta


def _perturbations(feature_names, box, e, n_trials, seed):
    from pwshap._rng import stream
    rng = stream(seed, "bumps")
    for trial in range(n_trials):
        if trial == 0:
            yield trial, "constant", (lambda X: np.full(np.atleast_2d(X).shape[0], e))
        elif trial == 1:
            yield trial, "t-alternating", (lambda X: e * (2.0 * np.atleast_2d(X)[:, -1] - 1.0))
        else:
            yield trial, "bumps", bump_perturbation(feature_names, box, e, rng)


def error_bound_harness(model_true, sampler, dag: DagSpec, e: float, n_trials: int = 100,
                        settings: PwshapSettings = PwshapSettings(n_draws=2000), slack_sigmas: float = 6.0,
                        box: dict | None = None) -> BoundReport:
    """Outcome-model perturbation bounds: |dphi_{S,T}| <= 2e and |dPsi_path| <= 4e.

    Each trial draws an instance from the sampler and a perturbation delta with
    sup |delta| <= e. Both models are evaluated on the same draws, so the
    difference is the delta-model's own estimate; slack is slack_sigmas times
    its standard error.
    """
    from pwshap.blackbox_models import FunctionModel
    from pwshap.shapley_engine import coalition_shapley_value, coalition_subsets

    names = tuple(model_true.feature_names)
    box = box or {f: (0.0, 1.0) for f in names}
    n_cov = len(names) - 1
    paths = [p for p in enumerate_paths(dag) if not p.is_direct]
    instances = sampler.sample_marginal(n_trials, derive_seed(settings.seed, "bound-instances"))
    checks = []
    for trial, _, delta in _perturbations(names, box, e, n_trials, settings.seed):
        x = instances[trial]
        f_hat = FunctionModel(names, lambda X, d=delta: model_true.predict(X) + d(X))
        f_delta = FunctionModel(names, delta)
        seed = derive_seed(settings.seed, "bound-trial", trial)
        for S in coalition_subsets(n_cov):
            a = coalition_shapley_value(f_hat, sampler, S, x, "on_manifold", settings.n_draws, seed)
            b = coalition_shapley_value(model_true, sampler, S, x, "on_manifold", settings.n_draws, seed)
            dd = coalition_shapley_value(f_delta, sampler, S, x, "on_manifold", settings.n_draws, seed)
            checks.append(BoundCheck(trial, "coalition_shapley", ",".join(S.names(dag.covariates)) or "{}",
                                     abs(a.value - b.value), 2 * e, slack_sigmas * dd.mc_std_error))
        for path in paths:
            a = path_effect(f_hat, sampler, dag, path, x, n_draws=settings.n_draws, seed=seed)
            b = path_effect(model_true, sampler, dag, path, x, n_draws=settings.n_draws, seed=seed)
            dd = path_effect(f_delta, sampler, dag, path, x, n_draws=settings.n_draws, seed=seed)
            checks.append(BoundCheck(trial, "path", path.describe(dag.treatment, dag.outcome),
                                     abs(a.psi_path - b.psi_path), 4 * e, slack_sigmas * dd.mc_std_error))
    return BoundReport(checks)


def propensity_bound_harness(model_true, sampler, dag: DagSpec, p_true: float, e: float, e_prop: float,
                             overlap_eps: float, sup_norm: float, n_trials: int = 100,
                             settings: PwshapSettings = PwshapSettings(n_draws=2000),
                             slack_sigmas: float = 6.0) -> BoundReport:
    """Estimated-propensity bound for a randomised treatment with P(T=1) = p_true.

    The fitted propensity is p_true + eta with |eta| <= e_prop (both inside
    [overlap_eps, 1 - overlap_eps]); the outcome model is perturbed by a bump
    of size e. e_Shap is the observed coalition-term error plus MC slack, and
    the estimate (division route) is compared with the true model's direct-route
    effect: |Psi_hat - Psi| <= 4 e_Shap / eps + 4 |f*|_inf e_prop / eps^2.
    """
    from pwshap._rng import stream
    from pwshap.blackbox_models import ConstantPropensity, FunctionModel
    from pwshap.shapley_engine import coalition_shapley_value

    if not (overlap_eps <= p_true - e_prop and p_true + e_prop <= 1 - overlap_eps):
        raise ValueError("true and perturbed propensities must both satisfy the overlap bound")
    names = tuple(model_true.feature_names)
    box = {f: (0.0, 1.0) for f in names}
    covs = dag.covariates
    n_cov = len(covs)
    paths = [p for p in enumerate_paths(dag) if not p.is_direct]
    rng = stream(settings.seed, "eta")
    instances = sampler.sample_marginal(n_trials, derive_seed(settings.seed, "bound-instances"))
    checks = []
    for trial, _, delta in _perturbations(names, box, e, n_trials, settings.seed):
        x = instances[trial]
        eta = e_prop * (2.0 * rng.random() - 1.0)
        fitted = ConstantPropensity(p_true + eta, covs, clip_epsilon=overlap_eps)
        f_hat = FunctionModel(names, lambda X, d=delta: model_true.predict(X) + d(X))
        seed = derive_seed(settings.seed, "bound-trial", trial)
        full = Coalition(tuple(range(n_cov)))
        cache = {}

        def estimated(S):
            if S.members not in cache:
                a = coalition_shapley_value(f_hat, sampler, S, x, "on_manifold", settings.n_draws, seed)
                b = coalition_shapley_value(model_true, sampler, S, x, "on_manifold", settings.n_draws, seed)
                w = propensity_weight(fitted, sampler, S, x, clip_epsilon=overlap_eps)
                true = coalition_effect(model_true, sampler, S, x, settings.n_draws, seed)
                # the true-model estimate itself deviates from the exact value by MC error
                e_shap = abs(a.value - b.value) + slack_sigmas * max(a.mc_std_error, b.mc_std_error)
                cache[S.members] = (a.value / w.w, e_shap, true)
            return cache[S.members]

        for path in paths:
            lower = _reduced_coalition(dag, path)
            up_hat, up_e, up_true = estimated(full)
            lo_hat, lo_e, lo_true = estimated(lower)
            e_shap = max(up_e, lo_e)
            bound = 4 * e_shap / overlap_eps + 4 * sup_norm * e_prop / overlap_eps ** 2
            observed = abs((up_hat - lo_hat) - (up_true.psi - lo_true.psi))
            slack = slack_sigmas * math.hypot(up_true.mc_std_error, lo_true.mc_std_error)
            checks.append(BoundCheck(trial, "path_estimated", path.describe(dag.treatment, dag.outcome),
                                     observed, bound, slack))
    return BoundReport(checks)
