"""Running virtual experiments and storing their results.

A simulator is any object with ``evaluate(design, use_case, *, run_id)``
returning a mapping of target values, or raising :class:`SimulationFailure`.
:func:`run_plan` drives a plan through a simulator into a
:class:`ResultStore`, which persists as an append-only CSV file plus a
metadata sidecar.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import shlex
import subprocess
import threading
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping, Protocol

from .dove import ExperimentPlan, format_value, parse_value
from .hyperspace import HyperSpace, space_from_dict
from .io import atomic_write_text, read_sidecar, write_sidecar

log = logging.getLogger(__name__)

OK, FAILED, SKIPPED = "ok", "failed", "skipped"
STATUSES = (OK, FAILED, SKIPPED)


class SimulationFailure(Exception):
    """Raised by a simulator for a failed evaluation; ``reason`` is recorded."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class StoreError(ValueError):
    pass


class IntegrityError(StoreError):
    pass


class SchemaError(StoreError):
    pass


class HashMismatchError(StoreError):
    pass


class CampaignAborted(RuntimeError):
    def __init__(self, message: str, summary: RunSummary):
        super().__init__(message)
        self.summary = summary


class Simulator(Protocol):
    parallel_safe: bool

    def evaluate(self, design: Mapping[str, Any], use_case: Mapping[str, Any], *,
                 run_id: int | None = None) -> Mapping[str, float]: ...


class FunctionSimulator:
    """Adapts ``fn(design, use_case) -> {target: value}`` to the simulator protocol."""

    def __init__(self, fn: Callable[[Mapping, Mapping], Mapping[str, float]],
                 parallel_safe: bool = True):
        self.fn = fn
        self.parallel_safe = parallel_safe

    def evaluate(self, design, use_case, *, run_id=None):
        return self.fn(design, use_case)


@dataclass(frozen=True)
class ExperimentRecord:
    run_id: int
    design: Mapping[str, Any]
    use_case: Mapping[str, Any]
    targets: Mapping[str, float] | None
    status: str
    duration: float = 0.0
    reason: str = ""

    @property
    def values(self) -> dict:
        return {**self.design, **self.use_case}


class ResultStore:
    """Records keyed by run_id; iteration is always in ascending run_id.

    With a ``path`` every added record is appended to the CSV file at once,
    so an interrupted campaign leaves a resumable store behind.
    """

    def __init__(self, space: HyperSpace, plan_hash: str | None = None,
                 path: str | Path | None = None):
        self.space = space
        self.plan_hash = plan_hash
        self.path = Path(path) if path is not None else None
        self._records: dict[int, ExperimentRecord] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[ExperimentRecord]:
        return iter([self._records[k] for k in sorted(self._records)])

    def __contains__(self, run_id: int) -> bool:
        return run_id in self._records

    def __getitem__(self, run_id: int) -> ExperimentRecord:
        return self._records[run_id]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ResultStore):
            return NotImplemented
        return (self.space == other.space and self.plan_hash == other.plan_hash
                and list(self) == list(other))

    @property
    def space_hash(self) -> str:
        return self.space.content_hash()

    def ok_records(self) -> list[ExperimentRecord]:
        return [r for r in self if r.status == OK]

    def add(self, record: ExperimentRecord) -> None:
        _check_record(record, self.space)
        with self._lock:
            if record.run_id in self._records:
                raise IntegrityError(f"duplicate run_id {record.run_id}")
            self._records[record.run_id] = record
            if self.path is not None:
                self._append(record)

    def _append(self, record: ExperimentRecord) -> None:
        new = not self.path.exists() or self.path.stat().st_size == 0
        if new:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._write_meta()
        with open(self.path, "a", encoding="utf-8", newline="") as fh:
            if new:
                fh.write(_header_line(self.space) + "\n")
            fh.write(_record_line(record, self.space) + "\n")
            fh.flush()

    def _write_meta(self, path: Path | None = None) -> None:
        write_sidecar(path or self.path, {"space_hash": self.space_hash,
                                          "plan_hash": self.plan_hash,
                                          "space": self.space.to_dict()})

    def to_csv(self, include_duration: bool = True) -> str:
        lines = [_header_line(self.space)]
        lines.extend(_record_line(r, self.space, include_duration) for r in self)
        return "\n".join(lines) + "\n"

    def canonical_bytes(self) -> bytes:
        """Records in run_id order with wall-clock durations blanked."""
        return self.to_csv(include_duration=False).encode("utf-8")

    def save(self, path: str | Path | None = None) -> None:
        """Rewrite the file in canonical order (atomic)."""
        path = Path(path) if path is not None else self.path
        if path is None:
            raise StoreError("no path to save to")
        atomic_write_text(path, self.to_csv())
        self._write_meta(path)


def _check_record(r: ExperimentRecord, space: HyperSpace) -> None:
    if r.status not in STATUSES:
        raise IntegrityError(f"run {r.run_id}: unknown status {r.status!r}")
    if r.status == OK:
        t = r.targets or {}
        if set(t) != set(space.target_names) or not all(math.isfinite(float(v)) for v in t.values()):
            raise IntegrityError(f"run {r.run_id}: status ok requires finite values for all targets")


def _header_line(space: HyperSpace) -> str:
    cols = (["run_id", "status", "duration_s"] + space.design_names + space.use_case_names
            + space.target_names + ["reason"])
    return ",".join(cols)


def _record_line(r: ExperimentRecord, space: HyperSpace, include_duration: bool = True) -> str:
    vals = r.values
    cells = [str(r.run_id), r.status, repr(float(r.duration)) if include_duration else ""]
    cells += [format_value(vals[n]) for n in space.design_names + space.use_case_names]
    if r.status == OK:
        cells += [repr(float(r.targets[n])) for n in space.target_names]
    else:
        cells += [""] * len(space.targets)
    cells.append(format_value(r.reason) if r.reason else "")
    return ",".join(cells)


def store_from_csv(text: str, space: HyperSpace, plan_hash: str | None = None) -> ResultStore:
    if text and not text.endswith("\n"):
        # drop a line torn by an interrupted append
        text = text[: text.rfind("\n") + 1]
    reader = csv.reader(io.StringIO(text))
    store = ResultStore(space, plan_hash)
    try:
        header = next(reader)
    except StopIteration:
        return store
    expected = _header_line(space).split(",")
    if header != expected:
        raise SchemaError(f"result columns {header} do not match space columns {expected}")
    nd, nu = len(space.design), len(space.use_case)
    for rec in reader:
        if not rec:
            continue
        if len(rec) != len(expected):
            raise SchemaError(f"row {rec[:1]} has {len(rec)} cells, expected {len(expected)}")
        run_id = int(rec[0])
        if run_id in store:
            raise IntegrityError(f"duplicate run_id {run_id}")
        pos = 3
        design = {v.name: parse_value(rec[pos + i], v) for i, v in enumerate(space.design)}
        pos += nd
        use_case = {v.name: parse_value(rec[pos + i], v) for i, v in enumerate(space.use_case)}
        pos += nu
        status = rec[1]
        targets = None
        if status == OK:
            targets = {t.name: float(rec[pos + i]) for i, t in enumerate(space.targets)}
        duration = float(rec[2]) if rec[2] else 0.0
        store.add(ExperimentRecord(run_id, design, use_case, targets, status, duration, rec[-1]))
    return store


def load_store(path: str | Path, space: HyperSpace | None = None) -> ResultStore:
    """Load a result CSV; ``space`` defaults to the copy kept in the sidecar."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"result file not found: {path}")
    meta = read_sidecar(path) or {}
    if space is None:
        if "space" not in meta:
            raise SchemaError(f"{path}: no space given and no sidecar space found")
        space = space_from_dict(meta["space"])
    elif meta.get("space_hash") not in (None, space.content_hash()):
        raise SchemaError(f"{path}: results were produced for a different space")
    store = store_from_csv(path.read_text(encoding="utf-8"), space, meta.get("plan_hash"))
    store.path = path
    return store


@dataclass
class RunSummary:
    ok: int = 0
    failed: int = 0
    skipped: int = 0
    wall_time: float = 0.0
    evaluations: int = 0

    def as_dict(self) -> dict:
        return {"ok": self.ok, "failed": self.failed, "skipped": self.skipped,
                "wall_time_s": self.wall_time}


def run_plan(plan: ExperimentPlan, simulator: Simulator, store: ResultStore,
             parallelism: int = 1, max_failures: float = 0.5) -> RunSummary:
    """Evaluate every plan point not yet in ``store``.

    Failed evaluations are recorded and the campaign continues, unless more
    than ``max_failures`` (a fraction of the plan size) have failed, in which
    case :class:`CampaignAborted` is raised with the store left resumable.
    ``summary.skipped`` counts points already present from an earlier run.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if store.space != plan.space:
        raise HashMismatchError("store and plan refer to different spaces")
    plan_hash = plan.content_hash()
    if store.plan_hash is None:
        if len(store):
            raise HashMismatchError("store has records but no plan hash")
        store.plan_hash = plan_hash
    elif store.plan_hash != plan_hash:
        raise HashMismatchError(
            f"store belongs to plan {store.plan_hash[:12]}, not {plan_hash[:12]}; refusing to run")
    if not getattr(simulator, "parallel_safe", True) and parallelism > 1:
        log.warning("simulator is not parallel-safe; running with parallelism=1")
        parallelism = 1

    summary = RunSummary()
    todo = []
    for p in plan.points:
        if p.run_id in store and store[p.run_id].status != SKIPPED:
            summary.skipped += 1
            if store[p.run_id].status == FAILED:
                summary.failed += 1
        else:
            todo.append(p)
    limit = max_failures * len(plan)
    names = plan.space.target_names
    t0 = time.perf_counter()

    def job(p):
        start = time.perf_counter()
        try:
            raw = simulator.evaluate(dict(p.design), dict(p.use_case), run_id=p.run_id)
            targets = _clean_targets(raw, names)
            status, reason = OK, ""
        except SimulationFailure as exc:
            targets, status, reason = None, FAILED, exc.reason
        except Exception as exc:  # noqa: BLE001 - a crashing model is a failed run
            targets, status, reason = None, FAILED, f"exception: {type(exc).__name__}: {exc}"
        dt = round(time.perf_counter() - start, 6)
        return ExperimentRecord(p.run_id, dict(p.design), dict(p.use_case), targets, status, dt,
                                reason)

    def account(rec):
        store.add(rec)
        summary.evaluations += 1
        if rec.status == OK:
            summary.ok += 1
        else:
            summary.failed += 1
        return summary.failed > limit

    aborted = False
    if parallelism == 1:
        for p in todo:
            if account(job(p)):
                aborted = True
                break
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            pending = set()
            queue = iter(todo)
            for p in queue:
                pending.add(pool.submit(job, p))
                if len(pending) >= 2 * parallelism:
                    break
            while pending:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                for fut in sorted(done, key=lambda f: f.result().run_id):
                    aborted = account(fut.result()) or aborted
                if aborted:
                    for fut in pending:
                        fut.cancel()
                    for fut in pending:
                        if not fut.cancelled():
                            account(fut.result())
                    break
                for p in queue:
                    pending.add(pool.submit(job, p))
                    if len(pending) >= 2 * parallelism:
                        break
    summary.wall_time = time.perf_counter() - t0
    if store.path is not None:
        store.save()
    if aborted:
        raise CampaignAborted(
            f"{summary.failed} failures exceed max_failures={max_failures} of {len(plan)} runs",
            summary)
    return summary


def _clean_targets(raw: Mapping[str, Any], names: list[str]) -> dict[str, float]:
    if raw is None or set(raw) != set(names):
        got = sorted(raw) if raw is not None else None
        raise SimulationFailure(f"protocol: expected targets {names}, got {got}")
    out = {}
    for n in names:
        v = float(raw[n])
        if not math.isfinite(v):
            raise SimulationFailure(f"non-finite target {n}")
        out[n] = v
    return out


# -- external processes ----------------------------------------------------------

@dataclass
class _Pending:
    event: threading.Event = field(default_factory=threading.Event)
    response: Any = None


class ExternalProcessSimulator:
    """Simulator backed by a child process speaking one-JSON-object-per-line.

    Requests ``{"run_id", "design", "use_case"}`` go to the child's stdin;
    responses ``{"run_id", "status": "ok", "targets"}`` or ``{"run_id",
    "status": "failed", "reason"}`` come back on stdout in any order.
    """

    parallel_safe = True

    def __init__(self, command: str | list[str], target_names: list[str],
                 timeout: float = 300.0):
        args = shlex.split(command) if isinstance(command, str) else list(command)
        self.target_names = list(target_names)
        self.timeout = timeout
        self._proc = subprocess.Popen(args, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                      text=True, encoding="utf-8", bufsize=1)
        self._lock = threading.Lock()
        self._pending: dict[int, _Pending] = {}
        self._dead = False
        self._next_id = 0
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        for line in self._proc.stdout:
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
                run_id = int(msg["run_id"])
            except (ValueError, KeyError, TypeError):
                log.warning("unparseable simulator response: %r", line[:200])
                continue
            with self._lock:
                slot = self._pending.get(run_id)
            if slot is not None:
                slot.response = msg
                slot.event.set()
        with self._lock:
            self._dead = True
            for slot in self._pending.values():
                slot.event.set()

    def evaluate(self, design, use_case, *, run_id=None):
        with self._lock:
            if run_id is None:
                run_id = self._next_id
                self._next_id += 1
            if self._dead:
                raise SimulationFailure("process-exit")
            slot = _Pending()
            self._pending[run_id] = slot
            request = json.dumps({"run_id": run_id, "design": dict(design),
                                  "use_case": dict(use_case)})
            try:
                self._proc.stdin.write(request + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError, ValueError):
                del self._pending[run_id]
                raise SimulationFailure("process-exit") from None
        try:
            if not slot.event.wait(self.timeout):
                raise SimulationFailure("timeout")
        finally:
            with self._lock:
                self._pending.pop(run_id, None)
        msg = slot.response
        if msg is None:
            raise SimulationFailure("process-exit")
        return self._interpret(msg)

    def _interpret(self, msg) -> dict[str, float]:
        status = msg.get("status")
        if status == "failed":
            raise SimulationFailure(str(msg.get("reason", "failed")))
        targets = msg.get("targets")
        if status != "ok" or not isinstance(targets, dict) or set(targets) != set(self.target_names):
            raise SimulationFailure("protocol")
        try:
            return {k: float(targets[k]) for k in self.target_names}
        except (TypeError, ValueError):
            raise SimulationFailure("protocol") from None

    def close(self) -> None:
        try:
            if self._proc.stdin and not self._proc.stdin.closed:
                self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def external_process_simulator(command: str | list[str], target_names: list[str],
                               timeout: float = 300.0) -> ExternalProcessSimulator:
    return ExternalProcessSimulator(command, target_names, timeout)
