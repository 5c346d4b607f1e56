import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from hse.analysis import nondominated_bruteforce
from hse.cli import main
from hse.io import read_sidecar
from hse.runner import load_store


def hse(*args):
    return main([str(a) for a in args])


def last_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


def test_plan_is_byte_identical(tmp_path, monkeypatch):
    monkeypatch.delenv("HSE_SEED", raising=False)
    for name in ("a.csv", "b.csv"):
        assert hse("plan", "--space", "builtin:fev", "--n", 20, "--seed", 3,
                   "--out", tmp_path / name) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert read_sidecar(tmp_path / "a.csv")["seed"] == 3


def test_seed_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("HSE_SEED", "11")
    hse("plan", "--space", "builtin:branin", "--n", 5, "--out", tmp_path / "env.csv")
    hse("plan", "--space", "builtin:branin", "--n", 5, "--seed", 11, "--out", tmp_path / "flag.csv")
    hse("plan", "--space", "builtin:branin", "--n", 5, "--seed", 12, "--out", tmp_path / "other.csv")
    assert (tmp_path / "env.csv").read_bytes() == (tmp_path / "flag.csv").read_bytes()
    assert (tmp_path / "env.csv").read_bytes() != (tmp_path / "other.csv").read_bytes()


def test_space_validate(tmp_path, capsys):
    good = tmp_path / "good.json"
    assert hse("space", "dump", "builtin:yaw", "--out", good) == 0
    assert hse("space", "validate", good) == 0
    bad = tmp_path / "bad.json"
    doc = json.loads(good.read_text())
    doc["design"][0]["lower"] = 5e5
    bad.write_text(json.dumps(doc))
    assert hse("space", "validate", bad) == 2
    assert "K" in capsys.readouterr().err
    (tmp_path / "corrupt.json").write_text("{not json")
    assert hse("space", "validate", tmp_path / "corrupt.json") == 2


def test_usage_and_io_errors(tmp_path, capsys):
    assert hse("plan") == 2
    assert last_error(capsys)["error"] == "usage"
    assert hse("fit", "--results", tmp_path / "missing.csv", "--out", tmp_path / "m.json") == 1
    assert last_error(capsys)["error"] == "io"
    assert hse("plan", "--space", "builtin:nope", "--n", 3, "--out", tmp_path / "p.csv") == 2


def test_pipeline_and_front_oracle(tmp_path, capsys):
    plan, res, model = tmp_path / "plan.csv", tmp_path / "res.csv", tmp_path / "model.json"
    assert hse("plan", "--space", "builtin:fev", "--n", 48, "--seed", 5, "--out", plan) == 0
    assert hse("run", "--plan", plan, "--sim", "fev", "--out", res, "--jobs", 4) == 0
    assert not (tmp_path / "res.csv.partial").exists()
    assert hse("pareto", "--results", res, "--group-by", "topology", "--out",
               tmp_path / "front.csv", "--plot", tmp_path / "front.svg") == 0
    store = load_store(res)
    rows = list(csv.DictReader(io.StringIO((tmp_path / "front.csv").read_text())))
    assert list(rows[0])[:2] == ["group", "run_id"]
    for topo in ("A1", "A2"):
        recs = [r for r in store.ok_records() if r.design["topology"] == topo]
        y = np.array([[r.targets["t_a50"], r.targets["E_c"]] for r in recs])
        oracle = sorted(recs[i].run_id for i in nondominated_bruteforce(y))
        got = sorted(int(r["run_id"]) for r in rows if r["group"] == topo)
        assert got == oracle
    assert (tmp_path / "front.svg").read_text().lstrip().startswith("<?xml")
    assert hse("fit", "--results", res, "--degree", 2, "--out", model) == 0
    meta = read_sidecar(model)
    assert meta["inputs"]["results"]["sha256"]
    assert hse("potential", "--model", model, "--sweep", "T_max", "--grid", "80:240:5",
               "--target", "t_a50", "--group-by", "topology", "--seed", 1,
               "--out", tmp_path / "env.csv") == 0
    assert len((tmp_path / "env.csv").read_text().splitlines()) == 1 + 2 * 5


def test_resume_completes_partial_run(tmp_path, capsys):
    plan, res = tmp_path / "plan.csv", tmp_path / "res.csv"
    hse("plan", "--space", "builtin:branin", "--n", 10, "--seed", 1, "--out", plan)
    hse("run", "--plan", plan, "--sim", "branin", "--out", res)
    full = res.read_bytes()
    lines = res.read_text().splitlines(keepends=True)
    partial = tmp_path / "res.csv.partial"
    partial.write_text("".join(lines[:5]) + lines[5][:9])
    (tmp_path / "res.csv.partial.meta.json").write_text((tmp_path / "res.csv.meta.json").read_text())
    res.unlink()
    capsys.readouterr()
    assert hse("run", "--plan", plan, "--sim", "branin", "--out", res, "--resume") == 0
    assert "skipped=4" in capsys.readouterr().out
    got = load_store(res)
    assert got.canonical_bytes() == load_store_bytes(full, tmp_path)


def load_store_bytes(data, tmp_path):
    ref = tmp_path / "ref.csv"
    ref.write_bytes(data)
    (tmp_path / "ref.csv.meta.json").write_text((tmp_path / "res.csv.meta.json").read_text())
    return load_store(ref).canonical_bytes()


def test_run_abort_is_simulation_error(tmp_path, capsys):
    plan, res = tmp_path / "plan.csv", tmp_path / "res.csv"
    hse("plan", "--space", "builtin:fev", "--n", 10, "--seed", 1, "--out", plan)
    child = tmp_path / "dead.py"
    child.write_text("import sys\nsys.exit(0)\n")
    code = hse("run", "--plan", plan, "--sim", f"exec:{sys.executable} {child}", "--out", res,
               "--max-failures", 0.1)
    assert code == 1
    err = last_error(capsys)
    assert err["error"] == "simulation" and "--resume" in err["message"]
    assert (tmp_path / "res.csv.partial").exists() and not res.exists()


def test_report_outputs(tmp_path, capsys):
    out = tmp_path / "rep"
    assert hse("report", "--project", "builtin:branin", "--out", out, "--seed", 2) == 0
    names = {p.name for p in out.iterdir()}
    for f in ("plan.csv", "results.csv", "model.json", "front_observed.csv", "front_surrogate.csv",
              "envelope.csv", "envelope.svg", "meta.csv", "summary.txt", "space.json"):
        assert f in names
    for f in ("plan.csv", "results.csv", "model.json", "front_observed.csv", "meta.csv"):
        assert f + ".meta.json" in names
    assert "surrogate meta front" in (out / "summary.txt").read_text()


def test_init_and_module_entry(tmp_path):
    assert hse("init", "yaw", "--out", tmp_path) == 0
    assert json.loads((tmp_path / "project.json").read_text())["space"] == "space.json"
    proc = subprocess.run([sys.executable, "-m", "hse", "space", "validate",
                           str(tmp_path / "space.json")], capture_output=True, text=True)
    assert proc.returncode == 0


@pytest.mark.parametrize("sub", ["plan", "run", "fit", "pareto", "potential", "refine",
                                 "meta-opt", "report", "init", "space"])
def test_help_available(sub, capsys):
    assert main([sub, "--help"]) == 0
    assert "usage" in capsys.readouterr().out
