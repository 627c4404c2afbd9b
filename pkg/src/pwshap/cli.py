"""`pwshap` command line: generate, explain, experiment, oracle-check.

Exit codes: 0 ok, 1 validation failure (bad input, failed oracle check), 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from pwshap import __version__
from pwshap._rng import derive_seed, stream
from pwshap.analytic_oracles import oracle_entries, oracle_table, run_oracle_check
from pwshap.blackbox_models import fit_linear, fit_logistic
from pwshap.causal_graph import DagSpec, GraphError, validate_dag
from pwshap.conditional_sampler import fit_imputer, fit_knn
from pwshap.data import SchemaError, read_csv
from pwshap.experiments import DESK_SCALE, EXPERIMENTS, PAPER_SCALE, SAMPLERS, ExperimentConfig, run_experiment
from pwshap.pwshap_engine import PwshapSettings, explain_instance
from pwshap.scenarios import SCENARIOS, ScenarioError, build_scenario, generate_dataset

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class ValidationError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def _file_digest(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


def _stamp(seed, chash) -> dict:
    return {"tool_version": __version__, "seed": seed, "config_hash": chash}


def _csv_text(rows, stamp) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]) + list(stamp), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**{k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()}, **stamp})
    return buf.getvalue()


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _parse_params(pairs) -> dict:
    params = {}
    for item in pairs or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise ValidationError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            params[key] = json.loads(val)
        except json.JSONDecodeError:
            params[key] = val
    return params


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    try:
        spec = build_scenario(args.scenario, _parse_params(args.param))
    except ScenarioError as exc:
        raise ValidationError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = generate_dataset(spec, args.samples, seed=args.seed)
    data.to_csv(out / "data.csv")
    spec.dag.dump(out / "dag.json")
    cfg = {"command": "generate", "scenario": args.scenario, "params": spec.params_json(), "samples": args.samples,
           "seed": args.seed}
    # the data CSV stays a plain table; provenance lives in the sidecar manifest
    manifest = {**_stamp(args.seed, config_hash(cfg)), "config": cfg, "files": ["data.csv", "dag.json"]}
    (out / "manifest.json").write_text(_dump_json(manifest), encoding="utf-8")
    print(f"wrote {out / 'data.csv'} ({data.n} rows) and {out / 'dag.json'}")
    return EXIT_OK


# ---------------------------------------------------------------- explain

def _parse_instances(text, n_rows):
    if text in (None, "", "all"):
        return list(range(n_rows))
    idx = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            idx.extend(range(int(lo), int(hi) + 1))
        elif part:
            idx.append(int(part))
    bad = [i for i in idx if not 0 <= i < n_rows]
    if bad:
        raise ValidationError(f"instance index {bad[0]} out of range (data has {n_rows} rows)")
    return idx


def _parse_point(text, feature_names):
    vals = {}
    for item in text.split(","):
        key, sep, val = item.partition("=")
        if not sep or key.strip() not in feature_names:
            raise ValidationError(f"--at expects NAME=VALUE for every feature in {list(feature_names)}, got {item!r}")
        vals[key.strip()] = float(val)
    missing = [f for f in feature_names if f not in vals]
    if missing:
        raise ValidationError(f"--at is missing values for {missing}")
    return np.array([vals[f] for f in feature_names])


def _fit(data, args, dag, scenario):
    if args.model == "linear":
        model = fit_linear(data, degree=args.degree)
    else:
        if not np.all((data.y == 0) | (data.y == 1)):
            raise ValidationError(f"--model logistic needs a 0/1 outcome column {data.outcome!r}")
        model = fit_logistic(data.X, target=data.y, feature_names=data.feature_names, degree=args.degree,
                             clip_epsilon=0.0)
    propensity = fit_logistic(data, clip_epsilon=args.clip_eps)
    if args.sampler == "exact":
        sampler = scenario.sampler
    elif args.sampler == "knn":
        sampler = fit_knn(data)
    else:
        sampler = fit_imputer(data)
    return model, propensity, sampler


def _bootstrap_sd(data, args, dag, scenario, points, settings):
    """Refit on K subsamples that each leave out 20% of rows; sd of each path effect across refits."""
    rng = stream(args.seed, "bootstrap")
    keep = int(round(0.8 * data.n))
    draws = [[] for _ in points]
    for k in range(args.bootstrap):
        rows = np.sort(rng.choice(data.n, size=keep, replace=False))
        model, propensity, sampler = _fit(data.subset(rows), args, dag, scenario)
        s = PwshapSettings(**{**settings.to_dict(), "seed": derive_seed(settings.seed, "bootstrap", k)})
        for j, x in enumerate(points):
            rep = explain_instance(model, propensity, sampler, dag, x, s)
            draws[j].append({(p["path"], p["method"]): p.get("psi") for p in rep.path_effects})
    out = []
    for per_point in draws:
        sd = {}
        for key in per_point[0]:
            vals = [d[key] for d in per_point if d.get(key) is not None]
            sd[f"{key[0]}|{key[1]}"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
        out.append(sd)
    return out


def cmd_explain(args) -> int:
    scenario = None
    if args.scenario:
        try:
            scenario = build_scenario(args.scenario, _parse_params(args.param), clip_epsilon=args.clip_eps)
        except ScenarioError as exc:
            raise ValidationError(str(exc)) from exc
    if args.dag:
        try:
            dag = DagSpec.load(args.dag)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read DAG {args.dag}: {exc}") from exc
    elif scenario is not None:
        dag = scenario.dag
    else:
        raise ValidationError("explain needs --dag (or --scenario to use a built-in DAG)")
    problems = validate_dag(dag)
    if problems:
        raise ValidationError("invalid DAG: " + "; ".join(problems))
    if args.sampler == "exact" and scenario is None:
        raise ValidationError("--sampler exact needs --scenario (the exact backend is the scenario's generating law)")
    if scenario is not None and tuple(scenario.covariates) != tuple(dag.covariates):
        raise ValidationError(f"DAG covariates {list(dag.covariates)} differ from scenario features "
                              f"{list(scenario.covariates)}")
    data = read_csv(args.data, dag.covariates, dag.treatment, dag.outcome)

    settings = PwshapSettings(n_draws=args.mc_draws, seed=args.seed, clip_epsilon=args.clip_eps, overlap=args.overlap,
                              merged_paths=args.merged_paths, alternative=args.alternative, workers=args.workers)
    model, propensity, sampler = _fit(data, args, dag, scenario)
    if args.at:
        points = [("at" + str(k), _parse_point(a, data.feature_names)) for k, a in enumerate(args.at)]
    else:
        points = [(str(i), data.X[i]) for i in _parse_instances(args.instances, data.n)]

    cfg = {"command": "explain", "data_sha256": _file_digest(args.data), "dag": dag.to_dict(),
           "scenario": args.scenario, "params": scenario.params_json() if scenario else None,
           "model": args.model, "degree": args.degree, "sampler": args.sampler, "instances": [p[0] for p in points],
           "at": args.at, "bootstrap": args.bootstrap, "settings": {k: v for k, v in settings.to_dict().items()
                                                                    if k != "workers"}}
    chash = config_hash(cfg)
    stamp = _stamp(args.seed, chash)
    boot = _bootstrap_sd(data, args, dag, scenario, [p[1] for p in points], settings) if args.bootstrap else None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    n_errors = 0
    for j, (label, x) in enumerate(points):
        report = explain_instance(model, propensity, sampler, dag, x, settings)
        doc = {**report.to_dict(), **stamp, "instance_label": label}
        if boot is not None:
            doc["bootstrap_sd"] = boot[j]
        (out / f"report_{label}.json").write_text(_dump_json(doc), encoding="utf-8")
        n_errors += len(report.errors)
        for row in report.summary_rows():
            summary.append({"instance": label, **row})
    (out / "summary.csv").write_text(_csv_text(summary, stamp), encoding="utf-8")
    print(f"explained {len(points)} instance(s) -> {out}")
    if n_errors:
        print(f"{n_errors} per-path error(s) recorded in the reports", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- experiment

def cmd_experiment(args) -> int:
    scale = dict(DESK_SCALE)
    if args.paper_scale:
        scale.update(PAPER_SCALE)
    for key in ("replicates", "samples", "n_draws"):
        if getattr(args, key) is not None:
            scale[key] = getattr(args, key)
    try:
        cfg = ExperimentConfig(args.name, seed=args.seed, workers=args.workers, out=args.out, sampler=args.sampler,
                               clip_epsilon=args.clip_eps, overlap=args.overlap,
                               normalize=not args.no_normalize, **scale)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    table = run_experiment(cfg)
    written = table.write(args.out)
    width = max(len(r["quantity"]) for r in table.rows)
    for r in table.rows:
        print(f"{r['variant']:>9}  {r['quantity']:<{width}}  {r['mean']:.3f} ({r['std_error']:.3f})")
    for note in sorted(set(table.notes)):
        print(f"note: {note}", file=sys.stderr)
    print("wrote " + ", ".join(written))
    return EXIT_OK


# ---------------------------------------------------------------- oracle-check

def cmd_oracle_check(args) -> int:
    entries = oracle_entries(args.scenario) if args.scenario else oracle_table()
    if not entries:
        known = sorted({e.scenario for e in oracle_table()})
        raise ValidationError(f"no oracles for scenario {args.scenario!r}; available: {', '.join(known)}")
    results = run_oracle_check(entries, n_draws=args.mc_draws, seed=args.seed, n_outer=args.n_outer,
                               pass_se=args.pass_se, fail_se=args.fail_se)
    for r in results:
        row = r.row()
        print(f"{row['status'].upper():4}  {row['scenario']:<20} {row['quantity']:<34} expected {row['expected']:+.5f}  "
              f"got {row['estimate']:+.5f}  se {row['std_error']:.5f}  z {row['z']:.2f} (tol {row['tolerance_se']:g} SE)"
              + (f"  [{row['note']}]" if row["note"] else ""))
    counts = {s: sum(r.status == s for r in results) for s in ("pass", "warn", "fail")}
    print(f"{len(results)} entries: {counts['pass']} pass, {counts['warn']} warn, {counts['fail']} fail")
    if args.out:
        cfg = {"command": "oracle-check", "scenario": args.scenario, "mc_draws": args.mc_draws, "seed": args.seed,
               "n_outer": args.n_outer, "pass_se": args.pass_se, "fail_se": args.fail_se}
        stamp = _stamp(args.seed, config_hash(cfg))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "oracle_check.json").write_text(_dump_json({**stamp, "config": cfg, "counts": counts,
                                                           "results": [r.row() for r in results]}), encoding="utf-8")
        (out / "oracle_check.csv").write_text(_csv_text([r.row() for r in results], stamp), encoding="utf-8")
    return EXIT_INVALID if counts["fail"] else EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pwshap", description="Path-wise Shapley effects of a binary treatment.")
    p.add_argument("--version", action="version", version=f"pwshap {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic scenario dataset and its DAG")
    g.add_argument("scenario", choices=SCENARIOS)
    g.add_argument("--samples", type=int, default=1000)
    g.add_argument("--param", action="append", metavar="KEY=VALUE", help="override a scenario parameter")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("explain", help="fit models on a CSV and explain instances")
    e.add_argument("--data", required=True)
    e.add_argument("--dag", help="DAG JSON (nodes, edges, treatment, outcome)")
    e.add_argument("--scenario", choices=SCENARIOS, help="built-in scenario; enables --sampler exact")
    e.add_argument("--param", action="append", metavar="KEY=VALUE")
    e.add_argument("--model", choices=("linear", "logistic"), default="linear")
    e.add_argument("--degree", type=int, choices=(1, 2), default=2, help="polynomial degree of the outcome model")
    e.add_argument("--sampler", choices=SAMPLERS, default="imputer")
    e.add_argument("--instances", default="0", help="row indices, e.g. 0,3,10-12, or 'all'")
    e.add_argument("--at", action="append", metavar="NAME=V,...", help="explain an explicit feature vector")
    e.add_argument("--mc-draws", type=int, default=10_000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--overlap", choices=("clip", "strict"), default="clip")
    e.add_argument("--clip-eps", type=float, default=0.01)
    e.add_argument("--merged-paths", action="store_true")
    e.add_argument("--alternative", action="store_true", help="also report the alternative path variant")
    e.add_argument("--bootstrap", type=int, default=0, metavar="K", help="refit K times on 80%% subsamples")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_explain)

    x = sub.add_parser("experiment", help="run a synthetic experiment protocol")
    x.add_argument("name", choices=EXPERIMENTS)
    x.add_argument("--replicates", type=int)
    x.add_argument("--samples", type=int)
    x.add_argument("--mc-draws", dest="n_draws", type=int)
    x.add_argument("--paper-scale", action="store_true", help="25 replicates of 200 samples")
    x.add_argument("--sampler", choices=SAMPLERS, default="imputer")
    x.add_argument("--overlap", choices=("clip", "strict"), default="clip")
    x.add_argument("--clip-eps", type=float, default=0.01)
    x.add_argument("--no-normalize", action="store_true", help="report raw means instead of dividing by sd(Y)")
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--workers", type=int, default=1)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_experiment)

    o = sub.add_parser("oracle-check", help="compare the estimators with every closed-form oracle")
    o.add_argument("--scenario", help="restrict to one scenario's entries")
    o.add_argument("--mc-draws", type=int, default=50_000)
    o.add_argument("--n-outer", type=int, default=2000)
    o.add_argument("--pass-se", type=float, default=5.0)
    o.add_argument("--fail-se", type=float, default=6.0)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, SchemaError, GraphError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 2
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
