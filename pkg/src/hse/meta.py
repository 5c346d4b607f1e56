"""Accuracy-gated refinement loop and self-recursive surrogate optimization."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .analysis import ParetoFront, pareto_front_observed, rows_to_csv
from .dove import ExperimentPlan, _lhs_rows, _make_plan, greedy_maximin
from .hyperspace import CONTINUOUS, HyperSpace, TargetIndicator, Variable
from .rng import Xoshiro256
from .runner import OK, ExperimentRecord, ResultStore, Simulator, run_plan
from .surrogate import KRIGING, POLYNOMIAL, FitError, SurrogateConfig, SurrogateModel, fit
from .surrogate.features import group_key
from .surrogate.kriging import KrigingPredictor

log = logging.getLogger(__name__)

RESAMPLE, RESPACE, NONE = "resample", "respace", "none"


@dataclass(frozen=True)
class RefinementPolicy:
    accuracy_threshold: float = 0.05
    max_iterations: int = 5
    pad_fraction: float = 0.10
    resample_fraction: float = 0.5
    pool_size: int = 512
    seed: int = 0
    parallelism: int = 1
    max_failures: float = 0.5

    def __post_init__(self):
        if not self.accuracy_threshold > 0:
            raise ValueError("accuracy_threshold must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    n_samples: int
    loocv_rmse: Mapping[str, float]
    accuracy: float
    action: str
    space_hash: str


@dataclass
class RefinementResult:
    trace: list[TraceEntry]
    model: SurrogateModel
    space: HyperSpace
    plan: ExperimentPlan
    store: ResultStore
    converged: bool
    error: str | None = None


def accuracy(model: SurrogateModel, store: ResultStore) -> tuple[float, dict[str, float]]:
    """Worst per-target LOOCV-RMSE as a fraction of the observed target range."""
    ok = store.ok_records()
    rmse = {t: model.reports[t].loocv_rmse for t in model.space.target_names}
    worst = 0.0
    for t, e in rmse.items():
        vals = [r.targets[t] for r in ok]
        span = max(vals) - min(vals) if vals else 0.0
        frac = e / span if span > 0 else (0.0 if e == 0 else math.inf)
        worst = max(worst, frac)
    return worst, rmse


def shrink_bounds(space: HyperSpace, front: ParetoFront, pad: float) -> dict[str, tuple[float, float]]:
    """Bounding box of front members padded by ``pad`` of each variable's
    current range, clipped to the current bounds (never widens)."""
    out = {}
    for v in space.design:
        if v.kind != CONTINUOUS:
            continue
        vals = [float(m.point[v.name]) for m in front.members if v.is_active(m.point)]
        if not vals:
            continue
        span = v.upper - v.lower
        lo = max(v.lower, min(vals) - pad * span)
        hi = min(v.upper, max(vals) + pad * span)
        if lo < hi:
            out[v.name] = (lo, hi)
    return out


def _fit_into(space: HyperSpace, record: ExperimentRecord) -> ExperimentRecord | None:
    """``record`` if it lies in ``space``; inactive coordinates are clipped
    into the new bounds since no model reads them."""
    values = record.values
    design = dict(record.design)
    for v in space.variables:
        try:
            v.check_value(values[v.name])
        except ValueError:
            if v.kind == CONTINUOUS and not v.is_active(values) and v.name in design:
                design[v.name] = min(max(float(values[v.name]), v.lower), v.upper)
            else:
                return None
    return replace(record, design=design)


def _renumber(space: HyperSpace, records: Sequence[ExperimentRecord], method: str, seed, params):
    rows = [r.values for r in records]
    plan = _make_plan(space, rows, method, seed, params)
    store = ResultStore(space, plan.content_hash())
    for i, r in enumerate(records):
        store.add(replace(r, run_id=i))
    return plan, store


def _infill_rows(model: SurrogateModel, plan: ExperimentPlan, n_new: int, seed: int,
                 pool_size: int) -> list[dict]:
    space = plan.space
    pool = _lhs_rows(space, pool_size, Xoshiro256(seed))
    existing = [p.values for p in plan.points]
    if model.family != KRIGING:
        return [pool[i] for i in greedy_maximin(space, existing, pool, n_new)]
    # sequential max-variance: the variance depends on inputs only, so each
    # pick is appended to the training inputs before choosing the next one
    chosen: list[dict] = []
    for _ in range(n_new):
        best_i, best_v = -1, -math.inf
        for key, g in model.groups.items():
            feats = g["features"]
            members = [i for i, r in enumerate(pool) if _group_of(model, r) == key]
            if not members:
                continue
            xp = feats.matrix(space, [pool[i] for i in members])
            picked = [r for r in chosen if _group_of(model, r) == key]
            for pred in g["predictors"].values():
                x = pred.x
                if picked:
                    x = np.vstack([x, feats.matrix(space, picked)])
                    pred = KrigingPredictor(x, np.zeros(len(x)), pred.theta, pred.nugget)
                v = pred.normalized_variance(xp)
                j = int(np.argmax(v))
                if v[j] > best_v and pool[members[j]] not in chosen:
                    best_i, best_v = members[j], float(v[j])
        if best_i < 0:
            break
        chosen.append(pool[best_i])
    return chosen


def _group_of(model, row):
    return group_key(model.space, row, model.config.joint)


def refine(space: HyperSpace, plan: ExperimentPlan, store: ResultStore, model: SurrogateModel,
           policy: RefinementPolicy, simulator: Simulator) -> RefinementResult:
    """Refine until LOOCV accuracy meets the threshold or iterations run out.

    Each iteration first resamples (infill of ``resample_fraction`` x n
    points: greedy maximin, or max Kriging variance for Kriging models). If
    a resample fails to improve accuracy, the next iteration respaces:
    continuous design bounds shrink to the padded bounding box of the
    observed front, out-of-bounds records are dropped, and an LHS fills
    the new segment back up to the previous sample size.
    """
    config = replace(model.config)
    trace: list[TraceEntry] = []
    acc, rmse = accuracy(model, store)
    trace.append(TraceEntry(1, len(store.ok_records()), rmse, acc, NONE, space.content_hash()))
    last_action = NONE
    acc_before_last = math.inf
    it = 1
    while acc > policy.accuracy_threshold and it < policy.max_iterations:
        it += 1
        seed = policy.seed + it
        action = RESPACE if last_action == RESAMPLE and not acc < acc_before_last else RESAMPLE
        acc_before_last = acc
        try:
            if action == RESAMPLE:
                n_new = max(1, int(round(policy.resample_fraction * len(plan))))
                new_rows = _infill_rows(model, plan, n_new, seed, policy.pool_size)
                records = list(store)
                new_plan = _make_plan(space, [p.values for p in plan.points] + new_rows,
                                      plan.method, plan.seed,
                                      {**plan.params, "refine_iteration": it})
                new_store = ResultStore(space, new_plan.content_hash())
                for r in records:
                    new_store.add(r)
            else:
                front = pareto_front_observed(store)
                bounds = shrink_bounds(space, front, policy.pad_fraction)
                new_space = space.with_design_bounds(bounds)
                kept = [k for k in (_fit_into(new_space, r) for r in store) if k is not None]
                n_fill = max(1, len(plan) - len(kept))
                fill = _lhs_rows(new_space, n_fill, Xoshiro256(seed))
                base_plan, base_store = _renumber(new_space, kept, plan.method, plan.seed,
                                                  {**plan.params, "refine_iteration": it})
                new_plan = _make_plan(new_space, [p.values for p in base_plan.points] + fill,
                                      plan.method, plan.seed, dict(base_plan.params))
                new_store = ResultStore(new_space, new_plan.content_hash())
                for r in base_store:
                    new_store.add(r)
                space = new_space
            run_plan(new_plan, simulator, new_store, policy.parallelism, policy.max_failures)
            plan, store = new_plan, new_store
            model = fit(store, space, config)
        except Exception as exc:
            log.warning("refinement stopped at iteration %d: %s", it, exc)
            return RefinementResult(trace, model, space, plan, store, False, str(exc))
        last_action = action
        acc, rmse = accuracy(model, store)
        trace.append(TraceEntry(it, len(store.ok_records()), rmse, acc, action,
                                space.content_hash()))
    return RefinementResult(trace, model, space, plan, store, acc <= policy.accuracy_threshold)


def trace_to_csv(trace: Sequence[TraceEntry]) -> str:
    rows = []
    for e in trace:
        row: dict[str, Any] = {"iteration": e.iteration, "n_samples": e.n_samples}
        for t, v in e.loocv_rmse.items():
            row[f"loocv_rmse_{t}"] = v
        row.update({"accuracy": e.accuracy, "action": e.action})
        rows.append(row)
    return rows_to_csv(rows)


# -- self-recursive optimization -----------------------------------------------------------

DEFAULT_CANDIDATES = tuple(
    [SurrogateConfig(POLYNOMIAL, degree=p) for p in (1, 2, 3, 4)]
    + [SurrogateConfig(KRIGING, nugget=nu) for nu in (1e-10, 1e-8, 1e-6)])


@dataclass(frozen=True)
class MetaResult:
    front: ParetoFront
    space: HyperSpace
    metrics: Mapping[str, Mapping[str, float]]
    failed: Mapping[str, str] = field(default_factory=dict)


def meta_space(configs: Sequence[SurrogateConfig], targets: Sequence[str]) -> HyperSpace:
    """Surrogate configurations as the design space, accuracy and size as targets."""
    labels = [c.label for c in configs]
    if len(labels) == 1:
        labels = labels + ["(none)"]
    design = (Variable.categorical("config", labels),)
    meta_targets = tuple(TargetIndicator(f"loocv_rmse_{t}", "minimize") for t in targets)
    return HyperSpace(design, (), meta_targets + (TargetIndicator("n_params", "minimize"),))


def optimize_surrogate(store: ResultStore, space: HyperSpace,
                       candidates: Sequence[SurrogateConfig] = DEFAULT_CANDIDATES,
                       rmse_atol: float = 1e-9) -> MetaResult:
    """Pareto front of surrogate configurations over (LOOCV-RMSE per target, #params).

    Each configuration is fitted on the same store. LOOCV-RMSE values below
    ``rmse_atol`` times the target's observed range count as exactly zero,
    so round-off does not separate models that are all exact.
    """
    if not candidates:
        raise ValueError("need at least one candidate configuration")
    labels = [c.label for c in candidates]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate candidate configurations: {labels}")
    mspace = meta_space(candidates, space.target_names)
    ok = store.ok_records()
    scales = {}
    for t in space.target_names:
        vals = [r.targets[t] for r in ok]
        scales[t] = max(max(vals) - min(vals), max(abs(v) for v in vals)) if vals else 1.0
    meta_store = ResultStore(mspace)
    metrics: dict[str, dict[str, float]] = {}
    failed: dict[str, str] = {}
    for i, c in enumerate(candidates):
        try:
            model = fit(store, space, c)
        except (FitError, ValueError, np.linalg.LinAlgError) as exc:
            failed[c.label] = str(exc)
            meta_store.add(ExperimentRecord(i, {"config": c.label}, {}, None, "failed", 0.0, str(exc)))
            continue
        t_vals = {}
        for t in space.target_names:
            e = model.reports[t].loocv_rmse
            if e <= rmse_atol * scales[t]:
                e = 0.0
            t_vals[f"loocv_rmse_{t}"] = e if math.isfinite(e) else 1e300
        t_vals["n_params"] = float(model.n_params)
        metrics[c.label] = t_vals
        meta_store.add(ExperimentRecord(i, {"config": c.label}, {}, t_vals, OK))
    if not metrics:
        raise FitError(f"every candidate failed: {failed}")
    front = pareto_front_observed(meta_store)
    return MetaResult(front, mspace, metrics, failed)


def meta_front_configs(result: MetaResult, candidates: Sequence[SurrogateConfig]) -> list[SurrogateConfig]:
    by_label = {c.label: c for c in candidates}
    return [by_label[m.point["config"]] for m in result.front.members]

