import csv
import json

import pytest

from pwshap.cli import main
from pwshap.experiments import ExperimentConfig, run_experiment


@pytest.fixture
def moderation_dir(tmp_path):
    out = tmp_path / "gen"
    assert main(["generate", "moderation", "--samples", "400", "--seed", "1", "--out", str(out)]) == 0
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_generate_writes_table_dag_and_manifest(moderation_dir):
    rows = _rows(moderation_dir / "data.csv")
    assert len(rows) == 400 and set(rows[0]) == {"C1", "C2", "T", "Y"}
    manifest = json.loads((moderation_dir / "manifest.json").read_text())
    assert {"tool_version", "seed", "config_hash"} <= set(manifest)
    assert json.loads((moderation_dir / "dag.json").read_text())["treatment"] == "T"


def test_moderating_paths_vanish_at_covariate_means(moderation_dir, tmp_path):
    out = tmp_path / "ex"
    rc = main(["explain", "--data", str(moderation_dir / "data.csv"), "--scenario", "moderation", "--sampler", "exact",
               "--at", "C1=0.5,C2=0.5,T=1", "--mc-draws", "20000", "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "report_at0.json").read_text())
    direct = [p for p in report["path_effects"] if p["method"] == "direct" and p["inner_nodes"]]
    assert len(direct) == 2
    for p in direct:
        assert abs(p["psi"]) <= 5 * p["se"] + 1e-12, p


def test_explain_rerun_is_byte_identical(moderation_dir, tmp_path):
    args = ["explain", "--data", str(moderation_dir / "data.csv"), "--dag", str(moderation_dir / "dag.json"),
            "--instances", "0,2-3", "--mc-draws", "500"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--workers", "4", "--out", str(tmp_path / "b")]) == 0
    for name in ("summary.csv", "report_0.json", "report_3.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_missing_column_is_a_validation_error(moderation_dir, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    lines = (moderation_dir / "data.csv").read_text().splitlines()
    bad.write_text("\n".join(",".join(line.split(",")[1:]) for line in lines) + "\n")
    rc = main(["explain", "--data", str(bad), "--dag", str(moderation_dir / "dag.json"), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "C1" in capsys.readouterr().err


def test_exit_codes_for_bad_invocations(tmp_path, moderation_dir):
    assert main(["explain", "--data", str(tmp_path / "nope.csv"), "--dag", str(moderation_dir / "dag.json"),
                 "--out", str(tmp_path / "o")]) == 1
    assert main(["explain", "--data", str(moderation_dir / "data.csv"), "--dag", str(moderation_dir / "dag.json"),
                 "--sampler", "exact", "--out", str(tmp_path / "o")]) == 1
    assert main(["generate", "moderation", "--param", "bogus=1", "--out", str(tmp_path / "g")]) == 1
    with pytest.raises(SystemExit) as err:
        main(["generate", "not-a-scenario", "--out", str(tmp_path / "g")])
    assert err.value.code == 1


def test_cyclic_dag_rejected(moderation_dir, tmp_path):
    dag = json.loads((moderation_dir / "dag.json").read_text())
    dag["edges"].append(["Y", "C1"])
    path = tmp_path / "cyclic.json"
    path.write_text(json.dumps(dag))
    rc = main(["explain", "--data", str(moderation_dir / "data.csv"), "--dag", str(path), "--out", str(tmp_path / "o")])
    assert rc == 1


def test_oracle_check_command(tmp_path, capsys):
    rc = main(["oracle-check", "--scenario", "moderation", "--mc-draws", "2000", "--n-outer", "200",
               "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "0 fail" in out
    assert json.loads((tmp_path / "oracle_check.json").read_text())["counts"]["fail"] == 0
    assert main(["oracle-check", "--scenario", "nowhere"]) == 1


def test_experiment_command_and_thread_invariance(tmp_path):
    base = ["experiment", "bias", "--replicates", "2", "--samples", "60", "--mc-draws", "300"]
    assert main(base + ["--out", str(tmp_path / "w1")]) == 0
    assert main(base + ["--workers", "2", "--out", str(tmp_path / "w2")]) == 0
    files = sorted(p.name for p in (tmp_path / "w1").iterdir())
    assert "table1.csv" in files and "table1.json" in files
    for name in files:
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w2" / name).read_bytes()
    row = _rows(tmp_path / "w1" / "table1.csv")[0]
    assert {"tool_version", "seed", "config_hash"} <= set(row)


def test_config_hash_ignores_workers_and_output():
    a = ExperimentConfig("bias", replicates=1, samples=40, n_draws=100, workers=1, out="x")
    b = ExperimentConfig("bias", replicates=1, samples=40, n_draws=100, workers=8, out="y")
    c = ExperimentConfig("bias", replicates=1, samples=40, n_draws=100, seed=9)
    assert a.config_hash == b.config_hash != c.config_hash


def test_adversarial_table_has_every_model():
    table = run_experiment(ExperimentConfig("adversarial", replicates=1, samples=100, n_draws=200))
    assert {r["variant"] for r in table.rows} == {"fair", "unfair", "attacker"}
