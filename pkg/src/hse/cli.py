"""Command-line frontend chaining space definition, sampling, simulation,
fitting, trade-off analysis and reporting.

Exit codes: 0 success, 1 runtime failure, 2 validation or usage error.
Errors are reported on stderr as one JSON object with an ``error``
category and a ``message``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import __version__
from .analysis import (AnalysisError, EmptySelectionError, ParetoFront, envelope_to_csv,
                       front_rows, parse_grid, pareto_front_observed, pareto_front_surrogate,
                       potential_envelope, rows_to_csv)
from .dove import (PlanError, default_sample_size, load_plan, plan_full_factorial, plan_lhs,
                   plan_maximin_lhs, save_plan)
from .exemplars import BUILTINS, builtin
from .hyperspace import (CATEGORICAL, DISCRETE, EncodingError, HyperSpace, SpaceError,
                         dump_space, load_space, validate_space)
from .io import atomic_write_text, file_hash, read_sidecar, sidecar_path, write_sidecar
from .meta import (DEFAULT_CANDIDATES, RefinementPolicy, optimize_surrogate, refine,
                   trace_to_csv)
from .runner import (CampaignAborted, ExternalProcessSimulator, ResultStore, StoreError,
                     load_store, run_plan)
from .surrogate import (KRIGING, POLYNOMIAL, FitError, SurrogateConfig, SurrogateModel, fit,
                        load_model, save_model)

log = logging.getLogger("hse")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
SEED_ENV = "HSE_SEED"


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int = EXIT_FAILURE):
        super().__init__(message)
        self.category = category
        self.code = code


def _usage(message: str) -> CliError:
    return CliError("usage", message, EXIT_USAGE)


def _classify(exc: Exception) -> CliError:
    if isinstance(exc, CliError):
        return exc
    table = [
        ((SpaceError, EncodingError), "validation", EXIT_USAGE),
        ((PlanError,), "plan", EXIT_USAGE),
        ((StoreError,), "integrity", EXIT_FAILURE),
        ((CampaignAborted,), "simulation", EXIT_FAILURE),
        ((FitError,), "fit", EXIT_FAILURE),
        ((AnalysisError,), "analysis", EXIT_FAILURE),
        ((FileNotFoundError, IsADirectoryError, PermissionError), "io", EXIT_FAILURE),
    ]
    for types, category, code in table:
        if isinstance(exc, types):
            return CliError(category, str(exc), code)
    return CliError("internal", f"{type(exc).__name__}: {exc}", EXIT_FAILURE)


def _report_error(err: CliError) -> None:
    print(json.dumps({"error": err.category, "message": str(err)}), file=sys.stderr)


# -- shared helpers ----------------------------------------------------------------------------

def resolve_seed(flag: int | None, config: int | None = None, default: int = 0) -> int:
    """Seed precedence: command-line flag, then ``HSE_SEED``, then config."""
    if flag is not None:
        return int(flag)
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise _usage(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if config is not None:
        return int(config)
    return default


def resolve_space(text: str) -> HyperSpace:
    """``builtin:<name>`` or a path to a space JSON document; must validate."""
    if text.startswith("builtin:"):
        try:
            space = builtin(text.split(":", 1)[1]).space()
        except ValueError as exc:
            raise _usage(str(exc)) from None
    else:
        space = load_space(text)
    violations = validate_space(space)
    if violations:
        raise CliError("validation", "; ".join(violations), EXIT_USAGE)
    return space


def make_simulator(spec: str, space: HyperSpace, timeout: float = 300.0):
    """``builtin:<name>`` (or just ``<name>``) or ``exec:<command>``."""
    if spec.startswith("exec:"):
        command = spec[5:].strip()
        if not command:
            raise _usage("exec: simulator needs a command")
        return ExternalProcessSimulator(command, space.target_names, timeout)
    name = spec.split(":", 1)[1] if spec.startswith("builtin:") else spec
    if name not in BUILTINS:
        raise _usage(f"unknown simulator {spec!r}; use exec:<command> or one of "
                     f"{sorted(BUILTINS)}")
    expected = BUILTINS[name].space()
    if expected.target_names != space.target_names:
        raise CliError("validation", f"builtin {name!r} produces targets {expected.target_names}, "
                       f"space expects {space.target_names}", EXIT_USAGE)
    return BUILTINS[name].simulator()


def parse_assignments(text: str | None, space: HyperSpace) -> dict[str, Any]:
    """``"name=value,..."`` typed by the space (labels stay strings)."""
    out: dict[str, Any] = {}
    if not text:
        return out
    for part in text.split(","):
        if not part.strip():
            continue
        if "=" not in part:
            raise _usage(f"expected name=value, got {part!r}")
        name, value = (s.strip() for s in part.split("=", 1))
        try:
            var = space.variable(name)
        except KeyError:
            raise _usage(f"unknown variable {name!r}") from None
        if var.kind == CATEGORICAL:
            out[name] = value
        else:
            try:
                out[name] = float(value)
            except ValueError:
                raise _usage(f"{name} needs a number, got {value!r}") from None
    return out


def _input_record(path: str | Path) -> dict:
    return {"file": Path(path).name, "sha256": file_hash(path)}


def write_output(path: str | Path, text: str, meta: Mapping[str, Any]) -> None:
    atomic_write_text(path, text)
    write_sidecar(path, meta)


def annotate_sidecar(path: str | Path, extra: Mapping[str, Any]) -> None:
    write_sidecar(path, {**(read_sidecar(path) or {}), **extra})


def _family(name: str) -> str:
    name = name.lower()
    if name in ("poly", "polynomial"):
        return POLYNOMIAL
    if name == KRIGING:
        return KRIGING
    raise _usage(f"unknown surrogate family {name!r}; use poly or kriging")


# -- pipeline steps (shared by subcommands, refine and report) ---------------------------------

def step_plan(space: HyperSpace, method: str, n: int | None, seed: int, out: Path,
              levels: int = 3, extra: Mapping[str, Any] | None = None):
    if method in ("lhs", "maximin", "maximin_lhs"):
        n = n if n is not None else default_sample_size(space)
        plan = plan_lhs(space, n, seed) if method == "lhs" else plan_maximin_lhs(space, n, seed)
    elif method in ("factorial", "full_factorial"):
        plan = plan_full_factorial(space, levels)
    else:
        raise _usage(f"unknown plan method {method!r}")
    save_plan(plan, out, {"seeds": {"plan": seed}, **(extra or {})})
    return plan


def step_run(plan_path: Path, sim_spec: str, out: Path, jobs: int = 1, max_failures: float = 0.5,
             resume: bool = False, timeout: float = 300.0, space: HyperSpace | None = None):
    plan = load_plan(plan_path, space)
    partial = out.with_name(out.name + ".partial")
    if resume and (partial.exists() or out.exists()):
        src = partial if partial.exists() else out
        store = load_store(src, plan.space)
        if src == out:
            store.save(partial)
        store.path = partial
    else:
        for p in (partial, sidecar_path(partial)):
            if p.exists():
                p.unlink()
        store = ResultStore(plan.space, path=partial)
    sim = make_simulator(sim_spec, plan.space, timeout)
    try:
        summary = run_plan(plan, sim, store, jobs, max_failures)
    except CampaignAborted as exc:
        raise CliError("simulation", f"{exc}; partial results kept in {partial.name}, "
                       "rerun with --resume") from None
    finally:
        if isinstance(sim, ExternalProcessSimulator):
            sim.close()
    store.save(out)
    plan_meta = read_sidecar(plan_path) or {}
    annotate_sidecar(out, {"inputs": {"plan": _input_record(plan_path)},
                           "simulator": sim_spec, "seeds": plan_meta.get("seeds", {}),
                           "summary": {"ok": summary.ok, "failed": summary.failed}})
    for p in (partial, sidecar_path(partial)):
        if p.exists():
            p.unlink()
    return store, summary


def step_fit(results: Path, config: SurrogateConfig, out: Path) -> SurrogateModel:
    store = load_store(results)
    model = fit(store, store.space, config)
    save_model(model, out)
    write_sidecar(out, {"inputs": {"results": _input_record(results)},
                        "config": config.to_dict(), "model_hash": model.content_hash()})
    return model


def _fronts(source, group_by: str | None, use_case: Mapping[str, Any], where: Mapping[str, Any],
            targets: Sequence[str] | None, grid: Mapping[str, Any]) -> dict[str, ParetoFront]:
    space = source.space
    labels: list[Any] = [None]
    if group_by:
        var = space.variable(group_by)
        if var.kind == CATEGORICAL:
            labels = list(var.labels)
        elif var.kind == DISCRETE:
            labels = list(var.levels)
        else:
            raise _usage(f"group-by variable {group_by!r} must be categorical or discrete")
    fronts: dict[str, ParetoFront] = {}
    for lab in labels:
        cond = dict(where)
        if lab is not None:
            cond[group_by] = lab
        name = "all" if lab is None else str(lab)
        try:
            if isinstance(source, ResultStore):
                fronts[name] = pareto_front_observed(source, use_case or None, targets, cond)
            else:
                pinned = {k: v for k, v in cond.items() if k in space.design_names}
                uc = {**use_case, **{k: v for k, v in cond.items() if k in space.use_case_names}}
                fronts[name] = pareto_front_surrogate(source, uc, {**grid, "fixed": pinned},
                                                      targets)
        except EmptySelectionError:
            if lab is None:
                raise
            log.warning("no records for %s=%s", group_by, lab)
    if not fronts:
        raise EmptySelectionError("no front could be formed for any group")
    return fronts


def fronts_to_csv(fronts: Mapping[str, ParetoFront], space: HyperSpace,
                  group_by: str | None) -> str:
    rows, cols = [], []
    for name, front in fronts.items():
        r, c = front_rows(front, space)
        if group_by:
            r = [{"group": name, **row} for row in r]
            c = ["group"] + c
        rows.extend(r)
        cols.extend(x for x in c if x not in cols)
    return rows_to_csv(rows, cols)


def step_pareto(source_path: Path, kind: str, out: Path | None, plot: Path | None,
                use_case: Mapping[str, Any], where: Mapping[str, Any], group_by: str | None,
                targets: Sequence[str] | None, grid: Mapping[str, Any]):
    # matplotlib is imported only by commands that draw
    from .plotting import plot_fronts
    source = load_store(source_path) if kind == "results" else load_model(source_path)
    fronts = _fronts(source, group_by, use_case, where, targets, grid)
    space = source.space
    text = fronts_to_csv(fronts, space, group_by)
    meta = {"inputs": {kind: _input_record(source_path)}, "use_case": dict(use_case),
            "where": dict(where), "group_by": group_by, "grid": dict(grid),
            "sizes": {k: len(f) for k, f in fronts.items()}}
    if out is not None:
        write_output(out, text, meta)
    if plot is not None:
        cloud = None
        if isinstance(source, ResultStore):
            first = next(iter(fronts.values()))
            cloud = np.array([[r.targets[t.name] for t in first.targets]
                              for r in source.ok_records()])
        plot_fronts(fronts, plot, cloud=cloud)
        write_sidecar(plot, meta)
    return fronts, text


def step_potential(source_path: Path, kind: str, sweep: str, grid: str, target: str,
                   group_by: str | None, samples: int, seed: int, out: Path | None,
                   plot: Path | None, sample: str = "lhs", levels: int = 5):
    from .plotting import plot_envelope
    source = load_store(source_path) if kind == "results" else load_model(source_path)
    env = potential_envelope(source, sweep, parse_grid(grid), target, group_by, samples, seed,
                             sample, levels)
    text = envelope_to_csv(env)
    meta = {"inputs": {kind: _input_record(source_path)}, "sweep": sweep, "grid": grid,
            "target": target, "group_by": group_by, "seeds": {"potential": seed},
            "n_samples": env.n_samples, "n_extrapolated": env.n_extrapolated}
    if out is not None:
        write_output(out, text, meta)
    if plot is not None:
        plot_envelope(env, plot)
        write_sidecar(plot, meta)
    return env, text


def meta_table(result, candidates) -> str:
    on_front = {m.point["config"] for m in result.front.members}
    rows = []
    for c in candidates:
        row: dict[str, Any] = {"config": c.label}
        if c.label in result.metrics:
            row.update(result.metrics[c.label])
            row["on_front"] = int(c.label in on_front)
        else:
            row["on_front"] = 0
            row["error"] = result.failed.get(c.label, "")
        rows.append(row)
    return rows_to_csv(rows)


# -- project configuration ---------------------------------------------------------------------

_PROJECT_KEYS = {"space", "simulator", "seed", "plan", "run", "fit", "pareto", "potential",
                 "refine", "meta", "paths"}


@dataclass
class ProjectConfig:
    """Paths, simulator and per-step parameters of one study."""

    root: Path
    space: str
    simulator: str
    seed: int | None = None
    plan: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    pareto: dict = field(default_factory=dict)
    potential: list = field(default_factory=list)
    refine: dict = field(default_factory=dict)
    meta: bool = False
    paths: dict = field(default_factory=dict)

    def path(self, key: str, default: str) -> Path:
        p = Path(self.paths.get(key, default))
        return p if p.is_absolute() else self.root / p

    def space_ref(self) -> str:
        if self.space.startswith("builtin:") or Path(self.space).is_absolute():
            return self.space
        return str(self.root / self.space)

    def surrogate_config(self) -> SurrogateConfig:
        f = dict(self.fit)
        family = _family(f.pop("family", "poly"))
        allowed = {"degree", "nugget", "theta_bounds", "grid_points", "joint"}
        bad = set(f) - allowed
        if bad:
            raise CliError("validation", f"fit: unknown keys {sorted(bad)}", EXIT_USAGE)
        return SurrogateConfig.from_dict({"family": family, **f})


def load_project(ref: str) -> ProjectConfig:
    """Load ``builtin:<name>`` (a bundled study) or a project JSON file."""
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        res = resources.files("hse.exemplars").joinpath("data", f"{name}_project.json")
        if not res.is_file():
            raise _usage(f"no bundled project {name!r}")
        doc, root = json.loads(res.read_text()), Path.cwd()
    else:
        p = Path(ref)
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CliError("validation", f"{p}: not valid JSON ({exc})", EXIT_USAGE) from None
        root = p.resolve().parent
    if not isinstance(doc, dict):
        raise CliError("validation", "project document must be an object", EXIT_USAGE)
    unknown = set(doc) - _PROJECT_KEYS
    if unknown:
        raise CliError("validation", f"project: unknown keys {sorted(unknown)}", EXIT_USAGE)
    for key in ("space", "simulator"):
        if key not in doc:
            raise CliError("validation", f"project: missing key {key!r}", EXIT_USAGE)
    pot = doc.get("potential", [])
    if isinstance(pot, dict):
        pot = [pot]
    return ProjectConfig(root, doc["space"], doc["simulator"], doc.get("seed"),
                         dict(doc.get("plan", {})), dict(doc.get("run", {})),
                         dict(doc.get("fit", {})), dict(doc.get("pareto", {})), list(pot),
                         dict(doc.get("refine", {})), bool(doc.get("meta", False)),
                         dict(doc.get("paths", {})))


# -- subcommands -------------------------------------------------------------------------------

def cmd_space_validate(args) -> int:
    try:
        space = load_space(args.file)
    except (SpaceError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        raise CliError("validation", f"{args.file}: unreadable space document",
                       EXIT_USAGE) from None
    violations = validate_space(space)
    if violations:
        for v in violations:
            print(v, file=sys.stderr)
        raise CliError("validation", f"{len(violations)} violation(s) in {args.file}", EXIT_USAGE)
    print(f"ok: {len(space.design)} design, {len(space.use_case)} use-case variables, "
          f"{len(space.targets)} targets; hash {space.content_hash()[:12]}")
    return EXIT_OK


def cmd_space_dump(args) -> int:
    space = resolve_space(args.space)
    text = dump_space(space)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_plan(args) -> int:
    space = resolve_space(args.space)
    seed = resolve_seed(args.seed)
    plan = step_plan(space, args.method, args.n, seed, Path(args.out), args.levels)
    print(f"{len(plan)} points -> {args.out} (plan {plan.content_hash()[:12]})")
    return EXIT_OK


def cmd_run(args) -> int:
    space = resolve_space(args.space) if args.space else None
    store, summary = step_run(Path(args.plan), args.sim, Path(args.out), args.jobs,
                              args.max_failures, args.resume, args.timeout, space)
    print(f"ok={summary.ok} failed={summary.failed} skipped={summary.skipped} "
          f"wall={summary.wall_time:.2f}s -> {args.out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    config = SurrogateConfig(_family(args.family), degree=args.degree, nugget=args.nugget,
                             joint=args.joint)
    model = step_fit(Path(args.results), config, Path(args.out))
    for t, rep in model.reports.items():
        print(f"{t}: r2={rep.r_squared:.6g} loocv_rmse={rep.loocv_rmse:.6g} n={rep.n_train}")
    return EXIT_OK


def _grid_spec(args) -> dict:
    if args.lhs:
        return {"lhs": args.lhs, "seed": resolve_seed(args.seed)}
    return {"levels": args.levels}


def cmd_pareto(args) -> int:
    if bool(args.results) == bool(args.model):
        raise _usage("give exactly one of --results or --model")
    kind, path = ("results", args.results) if args.results else ("model", args.model)
    space = (load_store(path) if kind == "results" else load_model(path)).space
    use_case = parse_assignments(args.use_case, space)
    where = parse_assignments(args.where, space)
    targets = args.targets.split(",") if args.targets else None
    fronts, text = step_pareto(Path(path), kind, Path(args.out) if args.out else None,
                               Path(args.plot) if args.plot else None, use_case, where,
                               args.group_by, targets, _grid_spec(args))
    if not args.out:
        sys.stdout.write(text)
    else:
        print(", ".join(f"{k}: {len(f)} members" for k, f in fronts.items()))
    return EXIT_OK


def cmd_potential(args) -> int:
    if bool(args.results) == bool(args.model):
        raise _usage("give exactly one of --results or --model")
    kind, path = ("results", args.results) if args.results else ("model", args.model)
    _, text = step_potential(Path(path), kind, args.sweep, args.grid, args.target, args.group_by,
                             args.samples, resolve_seed(args.seed),
                             Path(args.out) if args.out else None,
                             Path(args.plot) if args.plot else None, args.sample, args.levels)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_meta_opt(args) -> int:
    store = load_store(args.results)
    result = optimize_surrogate(store, store.space, DEFAULT_CANDIDATES)
    text = meta_table(result, DEFAULT_CANDIDATES)
    if args.out:
        write_output(args.out, text, {"inputs": {"results": _input_record(args.results)},
                                      "candidates": [c.to_dict() for c in DEFAULT_CANDIDATES]})
    sys.stdout.write(text)
    return EXIT_OK


def _policy(cfg: ProjectConfig, seed: int) -> RefinementPolicy:
    params = dict(cfg.refine)
    params.pop("out", None)
    params.setdefault("parallelism", int(cfg.run.get("jobs", 1)))
    params.setdefault("max_failures", float(cfg.run.get("max_failures", 0.5)))
    params["seed"] = seed
    try:
        return RefinementPolicy(**params)
    except TypeError as exc:
        raise CliError("validation", f"refine: {exc}", EXIT_USAGE) from None


def _ensure_results(cfg: ProjectConfig, seed: int, outdir: Path | None = None):
    """Plan and run the project unless its result file already exists."""
    space = resolve_space(cfg.space_ref())
    plan_path = outdir / "plan.csv" if outdir else cfg.path("plan", "plan.csv")
    res_path = outdir / "results.csv" if outdir else cfg.path("results", "results.csv")
    if not res_path.exists() or outdir is not None:
        step_plan(space, cfg.plan.get("method", "lhs"), cfg.plan.get("n"), seed, plan_path,
                  int(cfg.plan.get("levels", 3)))
        step_run(plan_path, cfg.simulator, res_path, int(cfg.run.get("jobs", 1)),
                 float(cfg.run.get("max_failures", 0.5)), False,
                 float(cfg.run.get("timeout", 300.0)), space)
    return space, plan_path, res_path


def cmd_refine(args) -> int:
    cfg = load_project(args.config)
    seed = resolve_seed(args.seed, cfg.seed)
    outdir = Path(args.out) if args.out else cfg.root / cfg.refine.get("out", "refine")
    space, plan_path, res_path = _ensure_results(cfg, seed)
    store = load_store(res_path, space)
    plan = load_plan(plan_path, space)
    config = cfg.surrogate_config()
    model = fit(store, space, config)
    policy = _policy(cfg, seed)
    sim = make_simulator(cfg.simulator, space, float(cfg.run.get("timeout", 300.0)))
    try:
        result = refine(space, plan, store, model, policy, sim)
    finally:
        if isinstance(sim, ExternalProcessSimulator):
            sim.close()
    common = {"seeds": {"refine": seed}, "policy": policy.__dict__,
              "inputs": {"results": _input_record(res_path)}}
    write_output(outdir / "trace.csv", trace_to_csv(result.trace),
                 {**common, "converged": result.converged, "error": result.error})
    atomic_write_text(outdir / "space.json", dump_space(result.space))
    save_plan(result.plan, outdir / "plan.csv", {"seeds": {"refine": seed}})
    result.store.save(outdir / "results.csv")
    annotate_sidecar(outdir / "results.csv", common)
    save_model(result.model, outdir / "model.json")
    write_sidecar(outdir / "model.json", {**common, "config": config.to_dict()})
    from .plotting import plot_trace
    plot_trace([e.iteration for e in result.trace], [e.accuracy for e in result.trace],
               policy.accuracy_threshold, outdir / "trace.svg")
    sys.stdout.write(trace_to_csv(result.trace))
    if result.error:
        raise CliError("refine", f"refinement stopped early: {result.error}")
    print(f"converged={result.converged} -> {outdir}")
    return EXIT_OK


def run_report(cfg: ProjectConfig, outdir: Path, seed: int) -> dict:
    """Full pipeline into ``outdir``; returns the summary data."""
    t0 = time.perf_counter()
    outdir.mkdir(parents=True, exist_ok=True)
    space, plan_path, res_path = _ensure_results(cfg, seed, outdir)
    atomic_write_text(outdir / "space.json", dump_space(space))
    store = load_store(res_path, space)
    summary: dict[str, Any] = {"n_runs": len(store), "n_ok": len(store.ok_records()),
                               "seed": seed, "fronts": {}, "models": {}, "envelopes": []}
    pc = cfg.pareto
    group_by = pc.get("group_by")
    targets = pc.get("targets")
    where = dict(pc.get("where", {}))
    fronts, _ = step_pareto(res_path, "results", outdir / "front_observed.csv",
                            outdir / "front_observed.svg", {}, where, group_by, targets, {})
    summary["fronts"]["observed"] = fronts
    model_path = outdir / "model.json"
    model = None
    try:
        model = step_fit(res_path, cfg.surrogate_config(), model_path)
        summary["models"] = model.reports
    except FitError as exc:
        log.warning("surrogate fit failed: %s", exc)
        summary["fit_error"] = str(exc)
    if model is not None:
        grid = dict(pc.get("grid", {"levels": 7}))
        sfronts, _ = step_pareto(model_path, "model", outdir / "front_surrogate.csv",
                                 outdir / "front_surrogate.svg", dict(pc.get("use_case", {})),
                                 where, group_by, targets, grid)
        summary["fronts"]["surrogate"] = sfronts
        for i, pot in enumerate(cfg.potential):
            name = f"envelope_{pot['sweep']}" if len(cfg.potential) > 1 else "envelope"
            env, _ = step_potential(model_path, "model", pot["sweep"], pot["grid"], pot["target"],
                                    pot.get("group_by"), int(pot.get("samples", 256)),
                                    int(pot.get("seed", seed)), outdir / f"{name}.csv",
                                    outdir / f"{name}.svg")
            summary["envelopes"].append(env)
    if cfg.meta:
        result = optimize_surrogate(store, space, DEFAULT_CANDIDATES)
        write_output(outdir / "meta.csv", meta_table(result, DEFAULT_CANDIDATES),
                     {"inputs": {"results": _input_record(res_path)}})
        summary["meta_front"] = [m.point["config"] for m in result.front.members]
    summary["wall_time"] = time.perf_counter() - t0
    atomic_write_text(outdir / "summary.txt", summary_text(summary))
    return summary


def summary_text(s: Mapping[str, Any]) -> str:
    lines = [f"runs: {s['n_runs']} (ok {s['n_ok']}), seed {s['seed']}"]
    for kind, fronts in s["fronts"].items():
        for name, f in fronts.items():
            lines.append(f"{kind} front [{name}]: {len(f)} members of {f.n_evaluated}")
    for t, rep in s.get("models", {}).items():
        lines.append(f"model {t}: r2={rep.r_squared:.6g} loocv_rmse={rep.loocv_rmse:.6g} "
                     f"n={rep.n_train}")
    if "fit_error" in s:
        lines.append(f"model fit failed: {s['fit_error']}")
    for env in s.get("envelopes", []):
        for g in env.groups:
            best = env.best(g)
            lines.append(f"envelope {env.target.name} vs {env.sweep} [{g}]: best "
                         f"{min(best):.6g}..{max(best):.6g}")
    if "meta_front" in s:
        lines.append("surrogate meta front: " + ", ".join(s["meta_front"]))
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    cfg = load_project(args.project)
    seed = resolve_seed(args.seed, cfg.seed)
    summary = run_report(cfg, Path(args.out), seed)
    sys.stdout.write(summary_text(summary))
    print(f"report -> {args.out} ({summary['wall_time']:.1f}s)")
    return EXIT_OK


def cmd_init(args) -> int:
    name = args.study
    res = resources.files("hse.exemplars").joinpath("data", f"{name}_project.json")
    if not res.is_file():
        raise _usage(f"no bundled project {name!r}; choose from {sorted(BUILTINS)}")
    out = Path(args.out)
    doc = json.loads(res.read_text())
    doc["space"] = "space.json"
    atomic_write_text(out / "space.json", dump_space(builtin(name).space()))
    atomic_write_text(out / "project.json", json.dumps(doc, indent=2) + "\n")
    if name == "fev":
        for cyc in ("urban", "suburban"):
            src = resources.files("hse.exemplars").joinpath("data", f"{cyc}_cycle.csv")
            with resources.as_file(src) as p:
                shutil.copyfile(p, out / f"{cyc}_cycle.csv")
    print(f"project files written to {out}")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hse", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hse {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("space", help="space documents")
    ssub = sp.add_subparsers(dest="space_command", required=True)
    v = ssub.add_parser("validate", help="check a space document")
    v.add_argument("file")
    v.set_defaults(func=cmd_space_validate)
    d = ssub.add_parser("dump", help="print a space (e.g. builtin:fev) as JSON")
    d.add_argument("space")
    d.add_argument("--out")
    d.set_defaults(func=cmd_space_dump)

    pl = sub.add_parser("plan", help="generate an experiment plan")
    pl.add_argument("--space", required=True, help="space JSON or builtin:<name>")
    pl.add_argument("--method", default="lhs", choices=["lhs", "maximin", "factorial"])
    pl.add_argument("--n", type=int, help="sample size (default 10 per variable)")
    pl.add_argument("--levels", type=int, default=3, help="factorial levels per continuous")
    pl.add_argument("--seed", type=int)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plan)

    r = sub.add_parser("run", help="evaluate a plan")
    r.add_argument("--plan", required=True)
    r.add_argument("--space", help="space (default: the one recorded with the plan)")
    r.add_argument("--sim", required=True, help="builtin name or exec:<command>")
    r.add_argument("--out", required=True)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--max-failures", type=float, default=0.5)
    r.add_argument("--timeout", type=float, default=300.0)
    r.add_argument("--resume", action="store_true")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("fit", help="fit a surrogate model")
    f.add_argument("--results", required=True)
    f.add_argument("--family", default="poly")
    f.add_argument("--degree", type=int, default=2)
    f.add_argument("--nugget", type=float, default=1e-8)
    f.add_argument("--joint", action="store_true", help="one model across categorical labels")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    pa = sub.add_parser("pareto", help="Pareto front of results or a model")
    pa.add_argument("--results")
    pa.add_argument("--model")
    pa.add_argument("--use-case", help="name=value,...")
    pa.add_argument("--where", help="name=value,... filter or pin")
    pa.add_argument("--group-by")
    pa.add_argument("--targets", help="comma-separated subset")
    pa.add_argument("--levels", type=int, default=7, help="model grid levels per variable")
    pa.add_argument("--lhs", type=int, help="model grid as LHS of this size instead")
    pa.add_argument("--seed", type=int)
    pa.add_argument("--out")
    pa.add_argument("--plot")
    pa.set_defaults(func=cmd_pareto)

    po = sub.add_parser("potential", help="best/worst envelope against one variable")
    po.add_argument("--model")
    po.add_argument("--results")
    po.add_argument("--sweep", required=True)
    po.add_argument("--grid", required=True, help="a:b:steps")
    po.add_argument("--target", required=True)
    po.add_argument("--group-by")
    po.add_argument("--samples", type=int, default=256)
    po.add_argument("--sample", default="lhs", choices=["lhs", "factorial"])
    po.add_argument("--levels", type=int, default=5)
    po.add_argument("--seed", type=int)
    po.add_argument("--out")
    po.add_argument("--plot")
    po.set_defaults(func=cmd_potential)

    rf = sub.add_parser("refine", help="accuracy-gated refinement loop")
    rf.add_argument("--config", required=True)
    rf.add_argument("--seed", type=int)
    rf.add_argument("--out")
    rf.set_defaults(func=cmd_refine)

    mo = sub.add_parser("meta-opt", help="Pareto-optimal surrogate configurations")
    mo.add_argument("--results", required=True)
    mo.add_argument("--out")
    mo.set_defaults(func=cmd_meta_opt)

    rp = sub.add_parser("report", help="run the whole pipeline and bundle outputs")
    rp.add_argument("--project", required=True, help="project JSON or builtin:<name>")
    rp.add_argument("--out", required=True)
    rp.add_argument("--seed", type=int)
    rp.set_defaults(func=cmd_report)

    it = sub.add_parser("init", help="write a bundled study's project files")
    it.add_argument("study", choices=sorted(BUILTINS))
    it.add_argument("--out", default=".")
    it.set_defaults(func=cmd_init)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_USAGE
        if code not in (EXIT_OK,):
            _report_error(CliError("usage", "invalid command line", EXIT_USAGE))
            return EXIT_USAGE
        return EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except KeyboardInterrupt:
        _report_error(CliError("interrupted", "interrupted"))
        return EXIT_FAILURE
    except Exception as exc:  # noqa: BLE001 - every failure maps to an exit code
        err = _classify(exc)
        if err.category == "internal":
            log.debug("internal error", exc_info=True)
        _report_error(err)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
