"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import csv
import io
import json
import math
import time
from importlib import resources

import numpy as np
import pytest

from hse.analysis import dominates, nondominated, nondominated_bruteforce
from hse.cli import main
from hse.dove import plan_lhs, plan_maximin_lhs
from hse.exemplars import branin, branin_space
from hse.exemplars.yaw import (ADVERSARIAL_GAIN, ADVERSARIAL_USE_CASE, BASELINE_USE_CASE,
                               TUNED_GAINS, stability_gain, yaw_simulate)
from hse.hyperspace import HyperSpace, TargetIndicator, Variable
from hse.meta import optimize_surrogate
from hse.runner import FunctionSimulator, ResultStore, load_store, run_plan
from hse.surrogate import fit_kriging, fit_polynomial
from hse.surrogate.features import monomial_exponents


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def cli(*args):
    code = main([str(a) for a in args])
    assert code == 0, f"hse {' '.join(map(str, args))} exited {code}"


# 1 -------------------------------------------------------------------------------------

def test_c01_pareto_oracle_equivalence(report):
    rng = np.random.default_rng(20241)
    t0 = time.perf_counter()
    mismatches = 0
    sizes = []
    for inst in range(200):
        k = int(rng.choice([2, 3, 4]))
        n = 10**4 if inst % 50 == 0 else int(rng.integers(1, 10**4 + 1))
        if inst % 3 == 0:
            y = rng.integers(0, 12, size=(n, k)).astype(float)    # many ties
        else:
            y = rng.normal(size=(n, k))
            if inst % 3 == 2:
                y[:, -1] = -y[:, 0] + 0.05 * y[:, -1]               # anti-correlated, big fronts
        signs = rng.choice([-1.0, 1.0], size=k)
        keep_ties = bool(inst % 2)
        fast = nondominated(y, signs, keep_ties)
        slow = nondominated_bruteforce(y, signs, keep_ties)
        mismatches += int(not np.array_equal(fast, slow))
        sizes.append(n)
    dt = time.perf_counter() - t0
    report(1, mismatches == 0 and dt < 30.0,
           f"200 instances (max n={max(sizes)}), {mismatches} mismatches, {dt:.1f}s < 30s")


# 2 -------------------------------------------------------------------------------------

def test_c02_dominance_algebra(report):
    rng = np.random.default_rng(20242)
    bad = {"irreflexive": 0, "antisymmetric": 0, "transitive": 0}
    chains = 0
    for _ in range(10**5):
        k = int(rng.integers(1, 5))
        targets = tuple(TargetIndicator(f"t{j}", o) for j, o in
                        enumerate(rng.choice(["minimize", "maximize"], size=k)))
        a, b, c = rng.integers(0, 4, size=(3, k)).tolist()
        if dominates(a, a, targets):
            bad["irreflexive"] += 1
        ab, bc = dominates(a, b, targets), dominates(b, c, targets)
        if ab and dominates(b, a, targets):
            bad["antisymmetric"] += 1
        if ab and bc:
            chains += 1
            if not dominates(a, c, targets):
                bad["transitive"] += 1
    ok = sum(bad.values()) == 0 and chains > 0
    report(2, ok, f"1e5 triples, violations {bad}, {chains} transitive chains exercised")


# 3 -------------------------------------------------------------------------------------

def test_c03_lhs_stratification(report):
    rng = np.random.default_rng(20243)
    failures = 0
    for trial in range(100):
        nc = int(rng.integers(1, 7))
        variables = []
        for j in range(nc):
            lo = float(rng.uniform(-1e3, 1e3))
            variables.append(Variable.continuous(f"c{j}", lo, lo + float(rng.uniform(1e-3, 1e3))))
        if rng.random() < 0.5:
            variables.append(Variable.categorical("cat", ["a", "b", "c"]))
        if rng.random() < 0.5:
            variables.append(Variable.discrete("disc", [1.0, 2.0, 5.0]))
        split = int(rng.integers(0, len(variables) + 1))
        space = HyperSpace(tuple(variables[:split]) or tuple(variables), tuple(variables[split:])
                           if split else (), (TargetIndicator("t", "minimize"),))
        n = int(rng.integers(1, 301))
        seed = int(rng.integers(0, 2**63))
        plan = (plan_maximin_lhs(space, n, seed, candidates=3) if trial % 4 == 0
                else plan_lhs(space, n, seed))
        for v in space.variables:
            if v.kind != "continuous":
                continue
            u = np.array([(p.values[v.name] - v.lower) / (v.upper - v.lower) for p in plan.points])
            if sorted(np.floor(u * n).astype(int).tolist()) != list(range(n)):
                failures += 1
    report(3, failures == 0, f"100 (space, n, seed) triples, {failures} dimensions off-stratum")


# 4 -------------------------------------------------------------------------------------

def _pipeline(out, jobs):
    out.mkdir()
    cli("plan", "--space", "builtin:fev", "--n", 64, "--seed", 17, "--out", out / "plan.csv")
    cli("run", "--plan", out / "plan.csv", "--sim", "fev", "--jobs", jobs, "--out",
        out / "results.csv")
    cli("fit", "--results", out / "results.csv", "--degree", 2, "--out", out / "model.json")
    cli("pareto", "--results", out / "results.csv", "--group-by", "topology",
        "--out", out / "front.csv")
    cli("pareto", "--model", out / "model.json", "--group-by", "topology", "--levels", 5,
        "--out", out / "front_model.csv")
    return {
        "plan": (out / "plan.csv").read_bytes(),
        "results": load_store(out / "results.csv").canonical_bytes(),
        "model": (out / "model.json").read_bytes(),
        "front": (out / "front.csv").read_bytes(),
        "front_model": (out / "front_model.csv").read_bytes(),
    }


def test_c04_determinism(report, tmp_path, monkeypatch):
    monkeypatch.delenv("HSE_SEED", raising=False)
    a = _pipeline(tmp_path / "a", 1)
    b = _pipeline(tmp_path / "b", 1)
    c = _pipeline(tmp_path / "c", 8)
    diff = [k for k in a if not (a[k] == b[k] == c[k])]
    report(4, not diff, "plan/run/fit/pareto byte-identical across reruns and --jobs 1 vs 8"
           if not diff else f"differences in {diff}")


# 5 -------------------------------------------------------------------------------------

def test_c05_surrogate_exactness(report):
    rng = np.random.default_rng(20245)
    space = HyperSpace((Variable.continuous("a", -2.0, 3.0), Variable.continuous("b", 0.0, 10.0),
                        Variable.continuous("c", 5.0, 6.0)), (), (TargetIndicator("y", "minimize"),))
    names = space.design_names
    worst_rel, worst_r2 = 0.0, 1.0
    for p in (1, 2, 3, 4):
        exps = monomial_exponents(3, p)
        coef = rng.normal(size=len(exps))

        def poly(d, u, exps=exps, coef=coef):
            return {"y": float(sum(c * np.prod([d[n] ** e for n, e in zip(names, ex)])
                                   for c, ex in zip(coef, exps)))}

        store = ResultStore(space)
        run_plan(plan_lhs(space, 3 * len(exps), 100 + p), FunctionSimulator(poly), store)
        model = fit_polynomial(store, space, p)
        worst_r2 = min(worst_r2, model.reports["y"].r_squared)
        for q in plan_lhs(space, 50, 200 + p).points:
            truth = poly(q.design, {})["y"]
            pred = model.predict(q.design).values["y"]
            worst_rel = max(worst_rel, abs(pred - truth) / max(abs(truth), 1e-12))
    bs = branin_space()
    store = ResultStore(bs)
    run_plan(plan_lhs(bs, 40, 5), FunctionSimulator(branin), store)
    krig = fit_kriging(store, bs, nugget=1e-10)
    ys = np.array([r.targets["f"] for r in store])
    pred, _, _ = krig.predict_many([r.values for r in store])
    krig_err = float(np.max(np.abs(pred[:, 0] - ys)) / (ys.max() - ys.min()))
    ok = worst_rel <= 1e-8 and worst_r2 >= 1 - 1e-10 and krig_err <= 1e-6
    report(5, ok, f"poly max rel err {worst_rel:.2e} (<=1e-8), min r2 {worst_r2!r} "
           f"(>=1-1e-10), Kriging max train err {krig_err:.2e} x range (<=1e-6)")


# 6 -------------------------------------------------------------------------------------

def test_c06_surrogate_convergence(report):
    bs = branin_space()
    rmse = {}
    for n in (16, 64):
        store = ResultStore(bs)
        run_plan(plan_lhs(bs, n, 6), FunctionSimulator(branin), store)
        rmse[("poly-p4", n)] = fit_polynomial(store, bs, 4).reports["f"].loocv_rmse
        rmse[("kriging", n)] = fit_kriging(store, bs, nugget=1e-10).reports["f"].loocv_rmse
    ok = all(rmse[(f, 64)] < rmse[(f, 16)] for f in ("poly-p4", "kriging"))
    detail = ", ".join(f"{f}: {rmse[(f, 16)]:.4g} -> {rmse[(f, 64)]:.4g}"
                       for f in ("poly-p4", "kriging"))
    report(6, ok, f"Branin LOOCV-RMSE n=16 -> n=64: {detail}")


# 7 -------------------------------------------------------------------------------------

def test_c07_yaw_contract(report):
    zero = [yaw_simulate({"K": 0.0, "topology": t}, {"r": r, "a_x": ax})["gain_stab"]
            for t in ("2WD", "4WD") for r in (40.0, 100.0, 200.0) for ax in (0.25, 1.0, 3.0)]
    zero += [yaw_simulate({"K": k, "topology": "4WD", "M_max": 0.0}, {"r": 80.0, "a_x": 2.0})
             ["gain_stab"] for k in (1e3, 5e4, 2e5)]
    tuned = {t: stability_gain(k, t, **BASELINE_USE_CASE) for t, k in TUNED_GAINS.items()}
    adv = {t: stability_gain(ADVERSARIAL_GAIN, t, **ADVERSARIAL_USE_CASE) for t in ("2WD", "4WD")}
    ok = (all(z == 0.0 for z in zero) and tuned["4WD"] > tuned["2WD"] > 0
          and adv["4WD"] < 0 and abs(adv["2WD"]) < abs(adv["4WD"]))
    report(7, ok, f"K=0/M_max=0 gains all exactly 0 ({len(zero)} cases); tuned 4WD "
           f"{tuned['4WD']:.4f} > 2WD {tuned['2WD']:.4f} > 0; adversarial 4WD {adv['4WD']:.4f} "
           f"< 0, |2WD| {abs(adv['2WD']):.4f} smaller")


# 8 -------------------------------------------------------------------------------------

def test_c08_fev_front_shape(report, tmp_path):
    cli("report", "--project", "builtin:fev", "--out", tmp_path, "--seed", 1)
    plan_rows = list(csv.DictReader(io.StringIO((tmp_path / "plan.csv").read_text())))
    per_topology = {t: sum(r["topology"] == t for r in plan_rows) for t in ("A1", "A2")}
    rows = list(csv.DictReader(io.StringIO((tmp_path / "front_observed.csv").read_text())))
    fronts = {}
    for t in ("A1", "A2"):
        pts = sorted((float(r["t_a50"]), float(r["E_c"])) for r in rows if r["group"] == t)
        fronts[t] = pts
    monotone = all(all(b[0] > a[0] and b[1] < a[1] for a, b in zip(p, p[1:]))
                   for p in fronts.values())
    ok = (per_topology == {"A1": 64, "A2": 64} and all(fronts.values())
          and fronts["A1"] != fronts["A2"] and monotone)
    report(8, ok, f"plan {per_topology}; front sizes A1={len(fronts['A1'])}, "
           f"A2={len(fronts['A2'])}; distinct={fronts['A1'] != fronts['A2']}; "
           f"strictly monotone={monotone}")


# 9 -------------------------------------------------------------------------------------

def test_c09_self_recursion(report):
    space = HyperSpace((Variable.continuous("a", 0.0, 1.0), Variable.continuous("b", -1.0, 1.0)),
                       (), (TargetIndicator("y", "minimize"),))
    store = ResultStore(space)
    run_plan(plan_lhs(space, 40, 9), FunctionSimulator(lambda d, u: {"y": 2 + 3 * d["a"] - d["b"]}),
             store)
    res = optimize_surrogate(store, space)
    members = [m.point["config"] for m in res.front.members]
    report(9, members == ["poly-p1"], f"meta front {members}")


# 10 ------------------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["fev", "yaw", "branin"])
def test_c10_end_to_end_time(report, tmp_path, name):
    doc = json.loads(resources.files("hse.exemplars").joinpath("data", f"{name}_project.json")
                     .read_text())
    doc["plan"]["n"] = 64
    project = tmp_path / "project.json"
    project.write_text(json.dumps(doc))
    t0 = time.perf_counter()
    cli("report", "--project", project, "--out", tmp_path / "report")
    cli("refine", "--config", project, "--out", tmp_path / "refine")
    dt = time.perf_counter() - t0
    report(10, dt < 60.0, f"{name}: report + refine at n=64 in {dt:.1f}s < 60s")
    assert math.isfinite(dt)
