"""Synthetic experiment protocols: local bias table, local mediation table, adversarial robustness.

Protocol per replicate: generate a dataset, split 50/50, fit the outcome model
(degree-2 linear), the propensity model (logistic) and a chained imputer on the
training half, then explain every test instance. Reported numbers are
|mean over test set| / sd(training outcome), averaged across replicates.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from pwshap import __version__
from pwshap._rng import derive_seed, stream
from pwshap.blackbox_models import ConvergenceError, fit_linear, fit_logistic
from pwshap.conditional_sampler import fit_imputer, fit_knn
from pwshap.pwshap_engine import PwshapSettings, coalition_effect, explain_instance, path_effect
from pwshap.scenarios import build_scenario, generate_dataset
from pwshap.shapley_engine import Coalition, full_shapley

EXPERIMENTS = ("bias", "mediation", "adversarial")
VARIANTS = ("i", "ii", "iii")
VARIANT_LABELS = {
    "bias": {"i": "C1, C2 non-conf.", "ii": "C1 conf., C2 not", "iii": "C1, C2 conf."},
    "mediation": {"i": "Q, D non-med.", "ii": "D med., Q not", "iii": "Q, D med."},
}
SAMPLERS = ("imputer", "knn", "exact")
DESK_SCALE = dict(replicates=10, samples=200, n_draws=5000)
PAPER_SCALE = dict(replicates=25, samples=200)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    replicates: int = 10
    samples: int = 200
    n_draws: int = 5000
    seed: int = 0
    clip_epsilon: float = 0.01
    overlap: str = "clip"
    sampler: str = "imputer"
    normalize: bool = True
    variants: tuple = VARIANTS
    workers: int = 1        # excluded from the hash: results do not depend on it
    out: str | None = None  # excluded from the hash

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.name!r}; choose from {EXPERIMENTS}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}; choose from {SAMPLERS}")
        if self.samples < 40:
            raise ValueError("samples must be >= 40 (the imputer needs 20 training rows)")

    def hashed_fields(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        d.pop("out")
        d["variants"] = list(self.variants)
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_fields(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ExperimentTable:
    config: ExperimentConfig
    rows: list                      # summary rows
    replicate_rows: list            # one row per (variant, replicate, quantity)
    instance_rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def stamp(self) -> dict:
        return {"tool_version": __version__, "seed": self.config.seed, "config_hash": self.config.config_hash}

    def to_json(self) -> str:
        out = dict(self.stamp())
        out["config"] = self.config.hashed_fields()
        out["rows"] = self.rows
        out["notes"] = sorted(set(self.notes))
        return json.dumps(out, indent=2, sort_keys=True) + "\n"

    def csv_text(self, rows) -> str:
        if not rows:
            return ""
        buf = io.StringIO()
        stamp = self.stamp()
        fields = list(rows[0]) + list(stamp)
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**{k: _fmt(v) for k, v in r.items()}, **stamp})
        return buf.getvalue()

    def files(self) -> dict[str, str]:
        name = {"bias": "table1", "mediation": "table2", "adversarial": "adversarial"}[self.config.name]
        out = {f"{name}.json": self.to_json(), f"{name}.csv": self.csv_text(self.rows),
               f"{name}_replicates.csv": self.csv_text(self.replicate_rows)}
        if self.instance_rows:
            out[f"{name}_instances.csv"] = self.csv_text(self.instance_rows)
        return out

    def write(self, out_dir) -> list[str]:
        from pathlib import Path
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        written = []
        for fname, text in self.files().items():
            (d / fname).write_text(text, encoding="utf-8")
            written.append(str(d / fname))
        return written

    def value(self, variant: str, quantity: str) -> tuple[float, float]:
        for r in self.rows:
            if r["variant"] == variant and r["quantity"] == quantity:
                return r["mean"], r["std_error"]
        raise KeyError((variant, quantity))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _split(n, seed):
    perm = stream(seed, "split").permutation(n)
    return perm[: n // 2], perm[n // 2:]


def _mean_se(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    if a.size < 2:
        return float(a.mean()), float("nan")
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


# ---------------------------------------------------------------- tables 1 and 2

def _reference_sampler(kind, spec, train):
    if kind == "exact":
        return spec.sampler
    if kind == "knn":
        return fit_knn(train)
    return fit_imputer(train)


def _table_replicate(cfg: ExperimentConfig, variant: str, r: int) -> tuple[dict, list]:
    scen = "bias_table1" if cfg.name == "bias" else "mediation_table2"
    spec = build_scenario(scen, {"variant": variant}, clip_epsilon=cfg.clip_epsilon)
    seed = derive_seed(cfg.seed, cfg.name, variant, "replicate", r)
    data = generate_dataset(spec, cfg.samples, seed=seed)
    train_idx, test_idx = _split(data.n, seed)
    train = data.subset(train_idx)
    sigma = float(np.std(train.y, ddof=1)) if cfg.normalize else 1.0
    model = fit_linear(train, degree=2)
    notes = []
    try:
        propensity = fit_logistic(train, clip_epsilon=cfg.clip_epsilon)
    except ConvergenceError as exc:
        notes.append(f"variant {variant} replicate {r}: logistic fit failed ({exc}); exact propensity used")
        propensity = spec.propensity
    sampler = _reference_sampler(cfg.sampler, spec, train)
    settings = PwshapSettings(n_draws=cfg.n_draws, seed=derive_seed(seed, "explain"), clip_epsilon=cfg.clip_epsilon,
                              overlap=cfg.overlap)
    covs = spec.covariates
    sums = {f"psi_{c}": [] for c in covs}
    sums.update({f"psi_{c}_direct": [] for c in covs})
    sums.update({"cs_direct": [], "cs_indirect": []})
    for k, row in enumerate(test_idx):
        x = data.X[row]
        rep = explain_instance(model, propensity, sampler, spec.dag, x, settings)
        for p in rep.path_effects:
            if len(p["inner_nodes"]) != 1 or p["variant"] != "standard" or "psi" not in p:
                continue
            c = p["inner_nodes"][0]
            key = f"psi_{c}" if p["method"] == "shapley_division" else f"psi_{c}_direct"
            sums[key].append(p["psi"])
        cs = full_shapley(model, spec.sampler, x, "causal", cfg.n_draws, derive_seed(seed, "causal", k))
        sums["cs_direct"].append(cs.direct["T"].value)
        sums["cs_indirect"].append(cs.indirect["T"].value)
    ratios = {q: (abs(float(np.mean(v))) / sigma if v else float("nan")) for q, v in sums.items()}
    ratios["sigma_y"] = sigma
    return ratios, notes


def _run_tables(cfg: ExperimentConfig) -> ExperimentTable:
    jobs = [(v, r) for v in cfg.variants for r in range(cfg.replicates)]
    task = lambda job: _table_replicate(cfg, *job)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(task, jobs))
    else:
        results = [task(j) for j in jobs]
    rep_rows, notes = [], []
    by_variant = {}
    for (v, r), (ratios, n) in zip(jobs, results):
        notes.extend(n)
        for q, val in ratios.items():
            rep_rows.append({"variant": v, "replicate": r, "quantity": q, "value": val})
            by_variant.setdefault((v, q), []).append(val)
    rows = []
    for (v, q), vals in by_variant.items():
        m, se = _mean_se(vals)
        rows.append({"variant": v, "scenario": VARIANT_LABELS[cfg.name][v], "quantity": q, "mean": m,
                     "std_error": se, "n_replicates": len(vals)})
    return ExperimentTable(cfg, rows, rep_rows, notes=notes)


# ---------------------------------------------------------------- adversarial

def _adversarial_replicate(cfg: ExperimentConfig, r: int):
    spec = build_scenario("adversarial", clip_epsilon=cfg.clip_epsilon)
    seed = derive_seed(cfg.seed, "adversarial", "replicate", r)
    data = generate_dataset(spec, cfg.samples, seed=seed)
    train_idx, test_idx = _split(data.n, seed)
    train = data.subset(train_idx)
    # the fitted propensity is not used here: with pi near 1 the division route is dominated by
    # clipping, so both PWSHAP panels use the direct (difference of conditional means) route
    notes = []
    sampler = _reference_sampler(cfg.sampler, spec, train)
    dag = spec.dag
    rows = []
    for k, row in enumerate(test_idx):
        x = data.X[row]
        s = derive_seed(seed, "instance", k)
        for mname in ("fair", "unfair", "attacker"):
            model = spec.models[mname]
            for mode in ("off_manifold", "on_manifold"):
                rep = full_shapley(model, sampler, x, mode, cfg.n_draws, s)
                rows.append({"replicate": r, "instance": int(row), "model": mname, "quantity": f"phi_T_{mode}",
                             "value": rep.attributions["T"].value})
            base = coalition_effect(model, sampler, Coalition(()), x, cfg.n_draws, s)
            rows.append({"replicate": r, "instance": int(row), "model": mname, "quantity": "psi_base",
                         "value": base.psi})
            pe = path_effect(model, sampler, dag, "D", x, n_draws=cfg.n_draws, seed=s)
            rows.append({"replicate": r, "instance": int(row), "model": mname, "quantity": "psi_T->D->Y",
                         "value": pe.psi_path})
    return rows, notes


def _run_adversarial(cfg: ExperimentConfig) -> ExperimentTable:
    task = lambda r: _adversarial_replicate(cfg, r)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(task, range(cfg.replicates)))
    else:
        results = [task(r) for r in range(cfg.replicates)]
    inst_rows, notes = [], []
    for rows, n in results:
        inst_rows.extend(rows)
        notes.extend(n)
    # per replicate: mean |value| and mean value over the test set, then across replicates
    per_rep = {}
    for row in inst_rows:
        per_rep.setdefault((row["model"], row["quantity"], row["replicate"]), []).append(row["value"])
    rep_rows = []
    agg = {}
    for (mname, q, r), vals in per_rep.items():
        a = np.asarray(vals)
        for stat, val in (("mean_abs", float(np.mean(np.abs(a)))), ("mean", float(np.mean(a)))):
            rep_rows.append({"model": mname, "quantity": q, "statistic": stat, "replicate": r, "value": val})
            agg.setdefault((mname, q, stat), []).append(val)
    rows = []
    for (mname, q, stat), vals in agg.items():
        m, se = _mean_se(vals)
        rows.append({"variant": mname, "model": mname, "quantity": f"{q}:{stat}", "mean": m, "std_error": se,
                     "n_replicates": len(vals)})
    return ExperimentTable(cfg, rows, rep_rows, inst_rows, notes)


def run_experiment(cfg: ExperimentConfig) -> ExperimentTable:
    if cfg.name == "adversarial":
        return _run_adversarial(cfg)
    return _run_tables(cfg)
