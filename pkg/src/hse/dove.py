"""Design of virtual experiments: space-filling plans over design x use case."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .hyperspace import (CATEGORICAL, CONTINUOUS, DISCRETE, EncodingError, HyperSpace,
                         check_point, space_from_dict)
from .io import atomic_write_text, read_sidecar, write_sidecar
from .rng import Xoshiro256, substream

METHODS = ("lhs", "maximin_lhs", "full_factorial", "monte_carlo")
DEFAULT_FACTORIAL_CAP = 10**6

# keeps LHS samples off the stratum edges so float round-off cannot move them
_CELL_MARGIN = 1e-6


class PlanError(ValueError):
    pass


class PlanTooLargeError(PlanError):
    pass


@dataclass(frozen=True)
class PlanPoint:
    run_id: int
    design: Mapping[str, Any]
    use_case: Mapping[str, Any]

    @property
    def values(self) -> dict:
        return {**self.design, **self.use_case}


@dataclass(frozen=True)
class ExperimentPlan:
    space: HyperSpace
    points: tuple[PlanPoint, ...]
    method: str
    seed: int | None = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def space_hash(self) -> str:
        return self.space.content_hash()

    def content_hash(self) -> str:
        return hashlib.sha256(plan_to_csv(self).encode("utf-8")).hexdigest()

    def metadata(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "parameters": dict(self.params),
            "space_hash": self.space_hash,
            "plan_hash": self.content_hash(),
            "n_points": len(self.points),
        }


def _make_plan(space, rows: Sequence[Mapping[str, Any]], method, seed, params) -> ExperimentPlan:
    dn, un = space.design_names, space.use_case_names
    points = tuple(
        PlanPoint(i, {k: row[k] for k in dn}, {k: row[k] for k in un}) for i, row in enumerate(rows)
    )
    return ExperimentPlan(space, points, method, seed, dict(params))


def _lhs_rows(space: HyperSpace, n: int, rng: Xoshiro256) -> list[dict]:
    rows: list[dict] = [{} for _ in range(n)]
    for v in space.variables:
        if v.kind == CONTINUOUS:
            perm = rng.permutation(n)
            for i in range(n):
                frac = _CELL_MARGIN + (1 - 2 * _CELL_MARGIN) * rng.random()
                x = (perm[i] + frac) / n
                rows[i][v.name] = v.lower + x * (v.upper - v.lower)
        else:
            choices = list(v.levels if v.kind == DISCRETE else v.labels)
            rng.shuffle(choices)
            column = [choices[i % len(choices)] for i in range(n)]
            rng.shuffle(column)
            for i in range(n):
                rows[i][v.name] = column[i]
    return rows


def plan_lhs(space: HyperSpace, n: int, seed: int) -> ExperimentPlan:
    """Latin hypercube plan with balanced levels for discrete/categorical variables."""
    if n < 1:
        raise PlanError(f"n must be >= 1, got {n}")
    rows = _lhs_rows(space, n, Xoshiro256(seed))
    return _make_plan(space, rows, "lhs", seed, {"n": n})


def plan_monte_carlo(space: HyperSpace, n: int, seed: int) -> ExperimentPlan:
    if n < 1:
        raise PlanError(f"n must be >= 1, got {n}")
    rng = Xoshiro256(seed)
    rows = []
    for _ in range(n):
        row = {}
        for v in space.variables:
            if v.kind == CONTINUOUS:
                row[v.name] = v.lower + rng.random() * (v.upper - v.lower)
            elif v.kind == DISCRETE:
                row[v.name] = v.levels[rng.below(len(v.levels))]
            else:
                row[v.name] = v.labels[rng.below(len(v.labels))]
        rows.append(row)
    return _make_plan(space, rows, "monte_carlo", seed, {"n": n})


def distance_features(space: HyperSpace, rows: Sequence[Mapping[str, Any]]) -> np.ndarray:
    """Encoded coordinates with one-hot blocks scaled so a category flip has distance 1."""
    cols = []
    for v in space.variables:
        if v.kind == CATEGORICAL:
            idx = np.array([v.labels.index(r[v.name]) for r in rows])
            block = np.zeros((len(rows), len(v.labels)))
            block[np.arange(len(rows)), idx] = 1 / math.sqrt(2)
            cols.append(block)
        elif v.kind == CONTINUOUS:
            x = np.array([float(r[v.name]) for r in rows])
            cols.append(((x - v.lower) / (v.upper - v.lower))[:, None])
        else:
            x = np.array([v.levels.index(float(r[v.name])) for r in rows], dtype=float)
            cols.append((x / (len(v.levels) - 1))[:, None])
    if not cols:
        return np.zeros((len(rows), 0))
    return np.hstack(cols)


def min_pairwise_distance(space: HyperSpace, rows: Sequence[Mapping[str, Any]]) -> float:
    x = distance_features(space, rows)
    if len(x) < 2:
        return math.inf
    diff = x[:, None, :] - x[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    return float(np.sqrt(d2.min()))


def plan_maximin_lhs(space: HyperSpace, n: int, seed: int, candidates: int = 50) -> ExperimentPlan:
    """Best of ``candidates`` independent LHS plans by minimum pairwise distance.

    Candidate ``c`` draws from substream ``c`` of ``seed`` (``c`` jumps of the
    generator), so candidate 0 is exactly :func:`plan_lhs` with ``seed``.
    """
    if n < 2:
        raise PlanError(f"maximin LHS needs n >= 2, got {n}")
    if candidates < 1:
        raise PlanError(f"candidates must be >= 1, got {candidates}")
    best_rows, best_d = None, -1.0
    for c in range(candidates):
        rows = _lhs_rows(space, n, substream(seed, c))
        d = min_pairwise_distance(space, rows)
        if d > best_d:
            best_rows, best_d = rows, d
    return _make_plan(space, best_rows, "maximin_lhs", seed, {"n": n, "candidates": candidates})


def plan_full_factorial(space: HyperSpace, levels_per_continuous: int = 3,
                        cap: int = DEFAULT_FACTORIAL_CAP) -> ExperimentPlan:
    """Row-major grid; the first variable varies slowest."""
    if levels_per_continuous < 1:
        raise PlanError("levels_per_continuous must be >= 1")
    axes = []
    for v in space.variables:
        if v.kind == CONTINUOUS:
            if levels_per_continuous == 1:
                axes.append([0.5 * (v.lower + v.upper)])
            else:
                m = levels_per_continuous - 1
                axes.append([v.lower + (v.upper - v.lower) * i / m if i < m else v.upper
                             for i in range(levels_per_continuous)])
        elif v.kind == DISCRETE:
            axes.append(list(v.levels))
        else:
            axes.append(list(v.labels))
    size = math.prod(len(a) for a in axes)
    if size > cap:
        raise PlanTooLargeError(f"full factorial plan too large: {size} > {cap}")
    names = [v.name for v in space.variables]
    rows = [dict(zip(names, combo)) for combo in itertools.product(*axes)]
    return _make_plan(space, rows, "full_factorial", None,
                      {"levels_per_continuous": levels_per_continuous})


def augment_plan(existing: ExperimentPlan, n_new: int, seed: int, strategy: str = "maximin_fill",
                 pool: Sequence[Mapping[str, Any]] | None = None,
                 pool_size: int | None = None) -> ExperimentPlan:
    """Greedy maximin infill from a seeded candidate pool.

    Each new point maximizes its distance to all existing and already-added
    points. ``pool`` overrides the default LHS pool of ``pool_size`` points.
    """
    if not existing.points:
        raise PlanError("cannot augment an empty plan")
    if strategy != "maximin_fill":
        raise PlanError(f"unknown augmentation strategy {strategy!r}")
    if n_new < 0:
        raise PlanError("n_new must be >= 0")
    if n_new == 0:
        return existing
    space = existing.space
    if pool is None:
        size = pool_size or max(100, 20 * n_new)
        pool = _lhs_rows(space, size, Xoshiro256(seed))
    for row in pool:
        check_point(row, space.variables)
    chosen = greedy_maximin(space, [p.values for p in existing.points], pool, n_new)
    rows = [p.values for p in existing.points] + [pool[i] for i in chosen]
    params = dict(existing.params)
    params.setdefault("augmentations", [])
    params["augmentations"] = list(params["augmentations"]) + [
        {"strategy": strategy, "n_new": n_new, "seed": seed}]
    return _make_plan(space, rows, existing.method, existing.seed, params)


def greedy_maximin(space: HyperSpace, fixed: Sequence[Mapping[str, Any]],
                   pool: Sequence[Mapping[str, Any]], n_new: int) -> list[int]:
    """Indices into ``pool`` picked greedily by max-min distance to ``fixed`` + picks."""
    xf = distance_features(space, fixed)
    xp = distance_features(space, pool)
    dmin = np.full(len(pool), np.inf)
    for row in xf:
        dmin = np.minimum(dmin, np.sqrt(np.sum((xp - row) ** 2, axis=1)))
    chosen: list[int] = []
    for _ in range(n_new):
        i = int(np.argmax(dmin))
        if not dmin[i] > 0:
            raise PlanError("candidate pool exhausted: no point left at positive distance")
        chosen.append(i)
        dmin = np.minimum(dmin, np.sqrt(np.sum((xp - xp[i]) ** 2, axis=1)))
        dmin[i] = -np.inf
    return chosen


def default_sample_size(space: HyperSpace) -> int:
    """Convention: ten runs per design and use-case variable."""
    return 10 * (len(space.design) + len(space.use_case))


# -- CSV ---------------------------------------------------------------------

def format_value(value) -> str:
    if isinstance(value, str):
        return '"' + value.replace('"', '""') + '"'
    return repr(float(value))


def parse_value(text: str, var) -> Any:
    if var.kind == CATEGORICAL:
        return text
    return float(text)


def plan_to_csv(plan: ExperimentPlan) -> str:
    names = plan.space.design_names + plan.space.use_case_names
    lines = [",".join(["run_id"] + names)]
    for p in plan.points:
        vals = p.values
        lines.append(",".join([str(p.run_id)] + [format_value(vals[n]) for n in names]))
    return "\n".join(lines) + "\n"


def plan_from_csv(text: str, space: HyperSpace, method: str = "lhs", seed: int | None = None,
                  params: Mapping[str, Any] | None = None) -> ExperimentPlan:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise PlanError("empty plan file") from None
    expected = ["run_id"] + space.design_names + space.use_case_names
    if header != expected:
        raise PlanError(f"plan header {header} does not match space columns {expected}")
    rows = []
    for k, rec in enumerate(reader):
        if not rec:
            continue
        if int(rec[0]) != k:
            raise PlanError(f"run_ids must be contiguous from 0; row {k} has {rec[0]}")
        row = {}
        for name, cell in zip(expected[1:], rec[1:]):
            row[name] = parse_value(cell, space.variable(name))
        try:
            check_point(row, space.variables)
        except EncodingError as exc:
            raise PlanError(f"run {k}: {exc}") from None
        rows.append(row)
    return _make_plan(space, rows, method, seed, params or {})


def save_plan(plan: ExperimentPlan, path: str | Path, extra: Mapping[str, Any] | None = None) -> None:
    """Write the plan CSV and a sidecar holding its metadata and space."""
    atomic_write_text(path, plan_to_csv(plan))
    write_sidecar(path, {**plan.metadata(), "space": plan.space.to_dict(), **(extra or {})})


def load_plan(path: str | Path, space: HyperSpace | None = None) -> ExperimentPlan:
    """Load a plan CSV; ``space`` defaults to the copy kept in the sidecar."""
    meta = read_sidecar(path) or {}
    if space is None:
        if "space" not in meta:
            raise PlanError(f"{path}: no space given and no sidecar space found")
        space = space_from_dict(meta["space"])
    elif meta.get("space_hash") not in (None, space.content_hash()):
        raise PlanError(f"{path}: plan was generated for a different space")
    return plan_from_csv(Path(path).read_text(encoding="utf-8"), space,
                         meta.get("method", "lhs"), meta.get("seed"), meta.get("parameters"))

