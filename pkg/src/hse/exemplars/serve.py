"""Serve a builtin simulator over the line protocol on stdin/stdout.

Usage: ``python -m hse.exemplars.serve fev|yaw|branin``
"""

from __future__ import annotations

import json
import sys
from typing import IO

from ..runner import SimulationFailure
from . import builtin


def serve(name: str, stdin: IO[str] = sys.stdin, stdout: IO[str] = sys.stdout) -> int:
    fn = builtin(name).fn
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            run_id = int(req["run_id"])
        except (ValueError, KeyError, TypeError):
            print(f"malformed request: {line[:200]!r}", file=sys.stderr)
            continue
        try:
            targets = fn(req.get("design", {}), req.get("use_case", {}))
            resp = {"run_id": run_id, "status": "ok", "targets": targets}
        except SimulationFailure as exc:
            resp = {"run_id": run_id, "status": "failed", "reason": exc.reason}
        except (KeyError, TypeError, ValueError) as exc:
            resp = {"run_id": run_id, "status": "failed", "reason": f"invalid-input: {exc}"}
        stdout.write(json.dumps(resp) + "\n")
        stdout.flush()
    return 0


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if len(args) != 1:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    try:
        return serve(args[0])
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 2


def main_fev() -> int:
    return serve("fev")


def main_yaw() -> int:
    return serve("yaw")


if __name__ == "__main__":
    sys.exit(main())
