import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import rankdata

from conftest import branin_unit
from hse.analysis import (AnalysisError, EmptySelectionError, GridTooLargeError, design_grid,
                          dominates, envelope_to_csv, front_to_csv, nondominated,
                          nondominated_bruteforce, pareto_front_observed, pareto_front_surrogate,
                          parse_grid, potential_envelope, tradeoff_table)
from hse.dove import plan_lhs
from hse.hyperspace import HyperSpace, TargetIndicator, Variable
from hse.runner import ExperimentRecord, FunctionSimulator, ResultStore, run_plan
from hse.surrogate import fit_polynomial

MIN2 = (TargetIndicator("a", "minimize"), TargetIndicator("b", "minimize"))


def pairwise_oracle(values, targets, keep_ties=False):
    """Quadratic reference written directly from the dominance definition."""
    out = []
    for i, row in enumerate(values):
        beaten = any(dominates(other, row, targets) for other in values)
        twin = any(np.array_equal(values[j], row) for j in range(i))
        if not beaten and (keep_ties or not twin):
            out.append(i)
    return out


def test_dominance_examples():
    assert dominates([1, 1], [2, 2], MIN2)
    assert dominates([1, 2], [2, 2], MIN2)
    assert not dominates([2, 2], [2, 2], MIN2)
    assert not dominates([1, 3], [2, 2], MIN2)
    mixed = (TargetIndicator("a", "minimize"), TargetIndicator("b", "maximize"))
    assert dominates([1, 3], [2, 2], mixed)
    with pytest.raises(AnalysisError, match="arity"):
        dominates([1], [1, 2], MIN2)


def test_small_front():
    y = np.array([[1, 3], [2, 2], [3, 1], [2, 3]], dtype=float)
    assert nondominated(y).tolist() == [0, 1, 2]


def test_duplicate_tie_rule():
    y = np.array([[2, 2], [1, 3], [2, 2], [5, 5]], dtype=float)
    assert nondominated(y).tolist() == [0, 1]
    assert nondominated(y, keep_ties=True).tolist() == [0, 1, 2]


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def target_sets(draw):
    k = draw(st.integers(1, 4))
    n = draw(st.integers(0, 40))
    vals = draw(arrays(float, (n, k), elements=st.sampled_from([0.0, 1.0, 2.0, 3.0]) | finite))
    signs = np.array(draw(st.lists(st.sampled_from([-1.0, 1.0]), min_size=k, max_size=k)))
    return vals, signs


@given(target_sets(), st.booleans())
def test_fast_filter_matches_oracles(data, keep_ties):
    y, signs = data
    targets = tuple(TargetIndicator(f"t{j}", "minimize" if s > 0 else "maximize")
                    for j, s in enumerate(signs))
    fast = nondominated(y, signs, keep_ties).tolist()
    assert fast == nondominated_bruteforce(y, signs, keep_ties).tolist()
    assert fast == pairwise_oracle(y, targets, keep_ties)


@given(target_sets())
def test_front_witnesses(data):
    y, signs = data
    targets = tuple(TargetIndicator(f"t{j}", "minimize" if s > 0 else "maximize")
                    for j, s in enumerate(signs))
    front = set(nondominated(y, signs).tolist())
    for i in range(len(y)):
        if i not in front:
            # every excluded row is dominated by or equal to a member
            assert any(dominates(y[m], y[i], targets) or np.array_equal(y[m], y[i]) for m in front)


@given(target_sets())
def test_monotone_transform_invariance(data):
    y, signs = data
    base = nondominated(y, signs).tolist()
    # dense ranks are an exact strictly increasing map of every column
    ranks = np.column_stack([rankdata(y[:, j], method="dense") for j in range(y.shape[1])])
    assert nondominated(ranks.reshape(y.shape) if len(y) else y, signs).tolist() == base
    assert nondominated(4.0 * y, signs).tolist() == base
    assert nondominated(-y, -signs).tolist() == base


def test_observed_front_and_filters(mixed_space):
    store = ResultStore(mixed_space)
    recs = [("one", 0.0, 1.0, 1.0), ("one", 0.0, 2.0, 2.0), ("two", 0.0, 0.5, 0.5),
            ("one", 0.5, 0.0, 0.0)]
    for i, (g, load, c, p) in enumerate(recs):
        design = {"x": 1.0, "n": 1.0, "gear": g, "ratio": 1.5}
        store.add(ExperimentRecord(i, design, {"load": load}, {"cost": c, "perf": p}, "ok"))
    store.add(ExperimentRecord(4, {"x": 1.0, "n": 1.0, "gear": "one", "ratio": 1.5},
                               {"load": 0.0}, None, "failed", reason="x"))
    front = pareto_front_observed(store, {"load": 0.0})
    # cost min, perf max: (1,1) (2,2) (0.5,0.5) are mutually non-dominated
    assert [m.run_id for m in front.members] == [0, 1, 2]
    one = pareto_front_observed(store, {"load": 0.0}, where={"gear": "one"})
    assert [m.run_id for m in one.members] == [0, 1]
    with pytest.raises(EmptySelectionError):
        pareto_front_observed(store, {"load": 0.9})
    text = front_to_csv(front, mixed_space)
    assert text.splitlines()[0] == "run_id,x,n,gear,ratio,load,cost,perf"


@pytest.fixture
def branin_model(branin_space):
    store = ResultStore(branin_space)
    run_plan(plan_lhs(branin_space, 30, 2), FunctionSimulator(branin_unit), store)
    return fit_polynomial(store, branin_space, 3)


def test_surrogate_front_matches_grid_oracle(branin_model):
    two = HyperSpace(branin_model.space.design, (), (TargetIndicator("f", "minimize"),))
    assert two == branin_model.space
    grid = {"levels": 32, "domain": "space"}
    front = pareto_front_surrogate(branin_model, {}, grid, exclude_extrapolation=False)
    rows = design_grid(branin_model.space, grid)
    assert len(rows) == 1024
    vals, _, _ = branin_model.predict_many(rows)
    best = vals[:, 0].min()
    oracle = sorted(i for i in range(len(rows)) if vals[i, 0] == best)
    assert len(front) == len(oracle) >= 1
    assert [m.point for m in front.members] == [rows[i] for i in oracle]


def test_grid_cap(branin_space):
    with pytest.raises(GridTooLargeError, match="10000 > 5000"):
        design_grid(branin_space, {"levels": 100, "cap": 5000})


def test_inactive_coordinates_collapse(mixed_space):
    rows = design_grid(mixed_space, {"levels": 3})
    # gear=one: 3 x 3 rows, ratio pinned; gear=two: 3 x 3 x 3 rows
    assert len(rows) == 9 + 27
    assert {r["ratio"] for r in rows if r["gear"] == "one"} == {1.0}


def test_envelope_examples(branin_space):
    space = HyperSpace((Variable.continuous("s", 0.0, 1.0), Variable.continuous("u2", 0.0, 1.0),
                        Variable.categorical("g", ["p", "q"])), (),
                       (TargetIndicator("f", "minimize"),))

    def fn(d, u):
        return {"f": 5.0 + (1.0 if d["g"] == "q" else 0.0)}

    store = ResultStore(space)
    run_plan(plan_lhs(space, 40, 1), FunctionSimulator(fn), store)
    model = fit_polynomial(store, space, 1)
    env = potential_envelope(model, "s", [0.0, 0.5, 1.0], "f", group_by="g", n_samples=20)
    assert all(math.isclose(v, 5.0, abs_tol=1e-9) for v in env.lower["p"] + env.upper["p"])
    assert all(math.isclose(v, 6.0, abs_tol=1e-9) for v in env.best("q"))
    assert envelope_to_csv(env).startswith("group,s,lower,upper,best,worst\n")


def test_envelope_factorial_matches_enumeration(branin_model):
    env = potential_envelope(branin_model, "u1", parse_grid("0:1:5"), "f", sample="factorial",
                             levels=9)
    for gi, x in enumerate(env.grid):
        vals = [branin_model.predict({"u1": x, "u2": k / 8}).values["f"] for k in range(9)]
        assert math.isclose(env.lower["all"][gi], min(vals), rel_tol=1e-12)
        assert math.isclose(env.upper["all"][gi], max(vals), rel_tol=1e-12)
    assert env.best("all") == env.lower["all"]


def test_envelope_argument_errors(branin_model):
    with pytest.raises(AnalysisError):
        potential_envelope(branin_model, "nope", [0.0], "f")
    with pytest.raises(AnalysisError, match="not categorical"):
        potential_envelope(branin_model, "u1", [0.0], "f", group_by="u2")


def test_tradeoff_rates():
    store = ResultStore(HyperSpace((Variable.continuous("x", 0, 1),), (), MIN2))
    for i, (a, b) in enumerate([(1, 3), (2, 2), (3, 1)]):
        store.add(ExperimentRecord(i, {"x": i / 2}, {}, {"a": a, "b": b}, "ok"))
    rows = tradeoff_table(pareto_front_observed(store))
    assert [r["db/da"] for r in rows] == [None, -1.0, -1.0]
    single = ResultStore(store.space)
    single.add(ExperimentRecord(0, {"x": 0.0}, {}, {"a": 1.0, "b": 1.0}, "ok"))
    assert tradeoff_table(pareto_front_observed(single))[0]["db/da"] is None


def test_parse_grid():
    assert parse_grid("0:1:5") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_grid("80:240:9")[-1] == 240.0
    for bad in ("1:2", "a:b:c", "0:1:0"):
        with pytest.raises(AnalysisError):
            parse_grid(bad)


def test_surrogate_ties_all_kept():
    space = HyperSpace((Variable.continuous("x", 0.0, 1.0),), (), (TargetIndicator("f", "minimize"),))
    store = ResultStore(space)
    # |x - 0.5| is not polynomial, but a quadratic through symmetric data is symmetric
    for i, x in enumerate([0.0, 0.25, 0.5, 0.75, 1.0]):
        store.add(ExperimentRecord(i, {"x": x}, {}, {"f": (x - 0.5) ** 2}, "ok"))
    model = fit_polynomial(store, space, 2)
    front = pareto_front_surrogate(model, {}, {"levels": 5})
    vals, _, _ = model.predict_many([{"x": k / 4} for k in range(5)])
    best = vals[:, 0].min()
    assert len(front) == int(np.sum(vals[:, 0] == best)) >= 1
