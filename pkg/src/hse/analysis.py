"""Trade-off quantification: dominance, Pareto fronts and potential envelopes."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .dove import _lhs_rows, format_value, plan_full_factorial
from .hyperspace import (CATEGORICAL, CONTINUOUS, HyperSpace, TargetIndicator, Variable,
                         check_point)
from .rng import Xoshiro256
from .runner import OK, ResultStore

DEFAULT_GRID_CAP = 10**6


class AnalysisError(ValueError):
    pass


class EmptySelectionError(AnalysisError):
    pass


class GridTooLargeError(AnalysisError):
    pass


def _signs(targets: Sequence[TargetIndicator]) -> np.ndarray:
    return np.array([t.sign for t in targets])


def dominates(a: Sequence[float], b: Sequence[float], targets: Sequence[TargetIndicator]) -> bool:
    """True iff ``a`` is no worse than ``b`` in every target and better in one."""
    if len(a) != len(targets) or len(b) != len(targets):
        raise AnalysisError(f"arity mismatch: {len(a)} / {len(b)} values for {len(targets)} targets")
    worse = better = False
    for x, y, t in zip(a, b, targets):
        x, y = t.sign * x, t.sign * y
        if x > y:
            worse = True
            break
        if x < y:
            better = True
    return better and not worse


def nondominated(values: np.ndarray, signs: np.ndarray | None = None,
                 keep_ties: bool = False) -> np.ndarray:
    """Indices of the Pareto-optimal rows of ``values`` (ascending).

    Identical optimal rows keep only the lowest index unless ``keep_ties``.
    Rows are visited in lexicographic order of their minimization form, in
    which a dominating row always precedes the rows it dominates. Two
    targets use a prefix-minimum sweep; more targets let each surviving
    row eliminate everything after it that it dominates.
    """
    y = np.asarray(values, dtype=float)
    if y.ndim != 2:
        raise AnalysisError("values must be a 2-D array")
    n, k = y.shape
    if n == 0:
        return np.zeros(0, dtype=int)
    if signs is not None:
        y = y * np.asarray(signs, dtype=float)
    order = np.lexsort(tuple(y[:, j] for j in range(k - 1, -1, -1)))
    ys = y[order]
    twin = np.zeros(n, dtype=bool)          # identical to the previous sorted row
    twin[1:] = np.all(ys[1:] == ys[:-1], axis=1)
    if k <= 2:
        # a row survives iff its last value beats every row before its run of twins
        run_start = np.maximum.accumulate(np.where(twin, 0, np.arange(n)))
        if k == 2:
            last = ys[:, 1]
            prev_min = np.empty(n)
            prev_min[0] = np.inf
            prev_min[1:] = np.minimum.accumulate(last)[:-1]
            keep = last < prev_min[run_start]
        else:
            keep = run_start == 0
        if not keep_ties:
            keep &= ~twin
        return np.sort(order[keep])
    alive = np.ones(n, dtype=bool)
    for i in range(n):
        if not alive[i]:
            continue
        rest = ys[i + 1:]
        hit = np.all(rest >= ys[i], axis=1)
        if keep_ties:
            hit &= np.any(rest > ys[i], axis=1)
        alive[i + 1:] &= ~hit
    return np.sort(order[alive])


def nondominated_bruteforce(values: np.ndarray, signs: np.ndarray | None = None,
                            keep_ties: bool = False, chunk: int = 512) -> np.ndarray:
    """O(n^2) reference filter built on pair counts.

    For every row it counts the rows that are no worse in any target. Row
    ``i`` is strictly dominated iff that count exceeds the number of rows
    identical to it; without ``keep_ties`` an identical row with a lower
    index also removes it. Only rows at or below ``i`` in the first target
    can qualify, so each row is compared with that sorted prefix.
    """
    y = np.asarray(values, dtype=float)
    if signs is not None:
        y = y * np.asarray(signs, dtype=float)
    n, k = y.shape
    if n == 0:
        return np.zeros(0, dtype=int)
    _, first, inverse, twins = np.unique(y, axis=0, return_index=True, return_inverse=True,
                                         return_counts=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(y[:, 0], kind="stable")
    ys = np.ascontiguousarray(y[order].T)
    ends = np.searchsorted(ys[0], ys[0], side="right")
    n_le = np.empty(n, dtype=np.int64)
    for s in range(0, n, chunk):
        b = ys[:, s:s + chunk, None]
        e = int(ends[s:s + chunk].max())
        # rows before s are no worse than any chunk row in the first target
        if k > 1:
            head = ys[1, None, :s] <= b[1]
            for j in range(2, k):
                head &= ys[j, None, :s] <= b[j]
            n_head = np.count_nonzero(head, axis=1)
        else:
            n_head = s
        tail = ys[0, None, s:e] <= b[0]
        for j in range(1, k):
            tail &= ys[j, None, s:e] <= b[j]
        n_le[s:s + chunk] = n_head + np.count_nonzero(tail, axis=1)
    count = np.empty(n, dtype=np.int64)
    count[order] = n_le
    keep = count == twins[inverse]
    if not keep_ties:
        keep &= first[inverse] == np.arange(n)
    return np.flatnonzero(keep)


@dataclass(frozen=True)
class FrontMember:
    point: Mapping[str, Any]
    targets: Mapping[str, float]
    run_id: int | None = None


@dataclass(frozen=True)
class ParetoFront:
    targets: tuple[TargetIndicator, ...]
    members: tuple[FrontMember, ...]
    use_case: Mapping[str, Any] | None       # None marks observed data without filter
    source: Mapping[str, Any]
    n_evaluated: int = 0
    n_excluded: int = 0

    def values(self) -> np.ndarray:
        return np.array([[m.targets[t.name] for t in self.targets] for m in self.members])

    def __len__(self) -> int:
        return len(self.members)


def _matches(space: HyperSpace, point: Mapping[str, Any], where: Mapping[str, Any],
             tol: float) -> bool:
    for name, want in where.items():
        var = space.variable(name)
        have = point[name]
        if var.kind == CONTINUOUS:
            span = var.upper - var.lower
            if abs((float(have) - float(want)) / span) > tol:
                return False
        elif var.kind == CATEGORICAL:
            if have != want:
                return False
        elif float(have) != float(want):
            return False
    return True


def pareto_front_observed(store: ResultStore, use_case: Mapping[str, Any] | None = None,
                          targets: Sequence[str] | None = None,
                          where: Mapping[str, Any] | None = None,
                          tol: float = 1e-9) -> ParetoFront:
    """Non-dominated ok-records, optionally restricted to a use case.

    ``use_case`` and ``where`` (any design or use-case variable) select
    records by equality; continuous variables match within ``tol`` on their
    encoded [0, 1] scale. Ties between identical target vectors keep the
    lowest run_id.
    """
    space = store.space
    tsel = [space.target(n) for n in targets] if targets else list(space.targets)
    cond = {**(use_case or {}), **(where or {})}
    for name in cond:
        space.variable(name)
    recs = [r for r in store if r.status == OK and _matches(space, r.values, cond, tol)]
    if not recs:
        raise EmptySelectionError(f"no ok records match {cond or 'the store'}")
    y = np.array([[r.targets[t.name] for t in tsel] for r in recs])
    keep = nondominated(y, _signs(tsel))
    members = tuple(FrontMember(recs[i].values, {t.name: recs[i].targets[t.name] for t in tsel},
                                recs[i].run_id) for i in keep)
    return ParetoFront(tuple(tsel), members, dict(use_case) if use_case else None,
                       {"kind": "store", "plan_hash": store.plan_hash,
                        "filter": {k: v for k, v in cond.items()}}, len(recs), 0)


def design_grid(space: HyperSpace, spec: Mapping[str, Any], model=None) -> list[dict]:
    """Finite design sample for surrogate evaluation.

    ``spec`` keys: ``levels`` (per continuous variable, full factorial, the
    default with 11) or ``lhs`` (sample size) plus ``seed``; ``domain`` is
    ``"validation_area"`` (default when a model is given) or ``"space"``;
    ``fixed`` pins design variables to values.
    """
    domain = spec.get("domain", "validation_area" if model is not None else "space")
    fixed = dict(spec.get("fixed", {}))
    cap = int(spec.get("cap", DEFAULT_GRID_CAP))
    axes, names = [], []
    bounds = {}
    for v in space.design:
        lo, hi = (v.lower, v.upper) if v.kind == CONTINUOUS else (None, None)
        if model is not None and domain == "validation_area" and v.kind == CONTINUOUS:
            lo, hi = model.validation_area[v.name]
        bounds[v.name] = (lo, hi)
    if "lhs" in spec:
        n = int(spec["lhs"])
        if n > cap:
            raise GridTooLargeError(f"design grid too large: {n} > {cap}")
        sub = HyperSpace(tuple(_bounded(v, bounds[v.name]) for v in space.design
                               if v.name not in fixed), (), space.targets)
        rows = _lhs_rows(sub, n, Xoshiro256(int(spec.get("seed", 0))))
        return [{**r, **fixed} for r in rows]
    levels = int(spec.get("levels", 11))
    for v in space.design:
        names.append(v.name)
        if v.name in fixed:
            axes.append([fixed[v.name]])
        elif v.kind == CONTINUOUS:
            lo, hi = bounds[v.name]
            axes.append(_linspace(lo, hi, levels))
        elif v.kind == CATEGORICAL:
            labels = v.labels
            if model is not None:
                labels = [lab for lab in labels if lab in model.validation_area[v.name]]
            axes.append(list(labels))
        else:
            axes.append(list(v.levels))
    size = math.prod(len(a) for a in axes)
    if size > cap:
        raise GridTooLargeError(f"design grid too large: {size} > {cap}")
    conditional = [(k, v) for k, v in enumerate(space.design) if v.active_when]
    if not conditional:
        return [dict(zip(names, combo)) for combo in itertools.product(*axes)]
    # inactive coordinates do not change a prediction: pin them to their
    # first grid value and drop the resulting duplicates
    rows, seen = [], set()
    for combo in itertools.product(*axes):
        row = dict(zip(names, combo))
        for k, v in conditional:
            if not v.is_active(row):
                row[v.name] = axes[k][0]
        key = tuple(row[n] for n in names)
        if key not in seen:
            seen.add(key)
            rows.append(row)
    return rows


def _bounded(v, bounds):
    if v.kind != CONTINUOUS or bounds[0] is None:
        return v
    lo, hi = bounds
    if not lo < hi:
        hi = lo + 1e-12 * max(1.0, abs(lo))
    return Variable(v.name, v.kind, lower=lo, upper=hi, unit=v.unit, active_when=v.active_when)


def _linspace(lo, hi, n):
    if n == 1 or lo == hi:
        return [0.5 * (lo + hi)]
    return [lo + (hi - lo) * i / (n - 1) if i < n - 1 else hi for i in range(n)]


def pareto_front_surrogate(model, use_case: Mapping[str, Any] | None,
                           grid: Mapping[str, Any] | None = None,
                           targets: Sequence[str] | None = None,
                           exclude_extrapolation: bool = True) -> ParetoFront:
    """Front of surrogate predictions over a design grid at a fixed use case."""
    space = model.space
    grid = dict(grid or {})
    u = dict(use_case or {})
    check_point(u, space.use_case)
    tsel = [space.target(n) for n in targets] if targets else list(space.targets)
    designs = design_grid(space, grid, model)
    rows = [{**d, **u} for d in designs]
    values, _, extrap = model.predict_many(rows)
    cols = [space.target_names.index(t.name) for t in tsel]
    values = values[:, cols]
    usable = ~extrap if exclude_extrapolation else np.ones(len(rows), dtype=bool)
    idx = np.flatnonzero(usable)
    keep = idx[nondominated(values[idx], _signs(tsel), keep_ties=True)] if len(idx) else idx
    members = tuple(FrontMember(designs[i], {t.name: float(values[i, j]) for j, t in enumerate(tsel)})
                    for i in keep)
    return ParetoFront(tuple(tsel), members, u,
                       {"kind": "surrogate", "model_hash": model.content_hash(),
                        "grid": {k: v for k, v in grid.items()}},
                       len(rows), int(np.count_nonzero(~usable)))


# -- potential envelopes -------------------------------------------------------------------

@dataclass(frozen=True)
class Envelope:
    sweep: str
    grid: tuple
    target: TargetIndicator
    group_by: str | None
    groups: tuple[str, ...]
    lower: Mapping[str, tuple[float, ...]]     # group -> min per grid value
    upper: Mapping[str, tuple[float, ...]]     # group -> max per grid value
    n_samples: int
    n_extrapolated: int = 0
    source: Mapping[str, Any] = field(default_factory=dict)

    def best(self, group: str) -> tuple[float, ...]:
        return self.lower[group] if self.target.orientation == "minimize" else self.upper[group]

    def worst(self, group: str) -> tuple[float, ...]:
        return self.upper[group] if self.target.orientation == "minimize" else self.lower[group]


def potential_envelope(source, sweep: str, grid: Sequence, target: str,
                       group_by: str | None = None, n_samples: int = 256, seed: int = 0,
                       sample: str = "lhs", levels: int = 5, tol: float = 1e-9) -> Envelope:
    """Best/worst band of ``target`` against ``sweep``, per ``group_by`` label.

    ``source`` is a fitted model (the remaining dimensions are sampled by a
    seeded LHS of ``n_samples`` points, or a full factorial with ``levels``
    per continuous variable when ``sample="factorial"``) or a result store
    (ok-records whose sweep value matches a grid value within ``tol``).
    """
    space = source.space
    try:
        space.variable(sweep)
        tgt = space.target(target)
    except KeyError as exc:
        raise AnalysisError(str(exc)) from None
    gvar = None
    if group_by is not None:
        try:
            gvar = space.variable(group_by)
        except KeyError as exc:
            raise AnalysisError(str(exc)) from None
        if gvar.kind != CATEGORICAL:
            raise AnalysisError(f"group_by variable {group_by!r} is not categorical")
        if group_by == sweep:
            raise AnalysisError("sweep and group_by must differ")
    labels = tuple(gvar.labels) if gvar else ("all",)
    grid = tuple(grid)
    lower = {g: [math.nan] * len(grid) for g in labels}
    upper = {g: [math.nan] * len(grid) for g in labels}
    n_extrap = 0

    if isinstance(source, ResultStore):
        for gi, gval in enumerate(grid):
            for g in labels:
                cond = {sweep: gval}
                if gvar:
                    cond[group_by] = g
                vals = [r.targets[target] for r in source
                        if r.status == OK and _matches(space, r.values, cond, tol)]
                if vals:
                    lower[g][gi], upper[g][gi] = min(vals), max(vals)
        n = 0
        src = {"kind": "store", "plan_hash": source.plan_hash}
    else:
        rest = [v for v in space.variables if v.name not in (sweep, group_by)]
        sub = HyperSpace(tuple(rest) or (), (), space.targets)
        if not rest:
            base = [{}]
        elif sample == "factorial":
            base = [p.values for p in plan_full_factorial(sub, levels).points]
        else:
            base = _lhs_rows(sub, n_samples, Xoshiro256(seed))
        n = len(base)
        j = space.target_names.index(target)
        for g in labels:
            rows = []
            for gval in grid:
                for b in base:
                    r = {**b, sweep: gval}
                    if gvar:
                        r[group_by] = g
                    rows.append(r)
            values, _, extrap = source.predict_many(rows)
            n_extrap += int(np.count_nonzero(extrap))
            vals = values[:, j].reshape(len(grid), n)
            lower[g] = vals.min(axis=1).tolist()
            upper[g] = vals.max(axis=1).tolist()
        src = {"kind": "surrogate", "model_hash": source.content_hash(), "sample": sample,
               "seed": seed}
    return Envelope(sweep, grid, tgt, group_by, labels,
                    {g: tuple(v) for g, v in lower.items()},
                    {g: tuple(v) for g, v in upper.items()}, n, n_extrap, src)


def parse_grid(text: str) -> list[float]:
    """``"a:b:steps"`` -> ``steps`` equi-spaced values from a to b inclusive."""
    try:
        a, b, steps = text.split(":")
        a, b, steps = float(a), float(b), int(steps)
    except ValueError:
        raise AnalysisError(f"grid must look like a:b:steps, got {text!r}") from None
    if steps < 1:
        raise AnalysisError("grid needs at least one step")
    return _linspace(a, b, steps)


# -- tables ----------------------------------------------------------------------------------

def tradeoff_table(front: ParetoFront) -> list[dict]:
    """Front members sorted best-first on the first target, with exchange rates.

    For every further target ``t`` the row carries ``d<t>/d<first>``, the
    change of ``t`` per unit change of the first target from the previous
    member (empty on the first row).
    """
    if not front.members:
        raise AnalysisError("empty front")
    first = front.targets[0]
    members = sorted(front.members, key=lambda m: (first.sign * m.targets[first.name],
                                                   m.run_id if m.run_id is not None else 0))
    rows = []
    prev = None
    for m in members:
        row = {**m.point, **m.targets}
        if m.run_id is not None:
            row = {"run_id": m.run_id, **row}
        for t in front.targets[1:]:
            key = f"d{t.name}/d{first.name}"
            if prev is None:
                row[key] = None
            else:
                da = m.targets[first.name] - prev.targets[first.name]
                row[key] = (m.targets[t.name] - prev.targets[t.name]) / da if da else math.inf
        rows.append(row)
        prev = m
    return rows


def rows_to_csv(rows: Sequence[Mapping[str, Any]], columns: Sequence[str] | None = None) -> str:
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    lines = [",".join(columns)]
    for r in rows:
        cells = []
        for c in columns:
            v = r.get(c)
            if v is None:
                cells.append("")
            elif isinstance(v, (int, np.integer)) and not isinstance(v, bool):
                cells.append(str(int(v)))
            else:
                cells.append(format_value(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def front_rows(front: ParetoFront, space: HyperSpace) -> tuple[list[dict], list[str]]:
    """Front members as flat rows plus the column order used for CSV output."""
    names = [v.name for v in space.design] + [v.name for v in space.use_case]
    rows = []
    for m in front.members:
        row = {"run_id": m.run_id} if m.run_id is not None else {}
        row.update({n: m.point[n] for n in names if n in m.point})
        row.update(m.targets)
        rows.append(row)
    cols = (["run_id"] if any(m.run_id is not None for m in front.members) else [])
    cols += [n for n in names if any(n in m.point for m in front.members)]
    cols += [t.name for t in front.targets]
    return rows, cols


def front_to_csv(front: ParetoFront, space: HyperSpace) -> str:
    rows, cols = front_rows(front, space)
    return rows_to_csv(rows, cols)


def envelope_to_csv(env: Envelope) -> str:
    rows = []
    for g in env.groups:
        for i, x in enumerate(env.grid):
            rows.append({"group": g, env.sweep: x, "lower": env.lower[g][i],
                         "upper": env.upper[g][i], "best": env.best(g)[i],
                         "worst": env.worst(g)[i]})
    return rows_to_csv(rows, ["group", env.sweep, "lower", "upper", "best", "worst"])
