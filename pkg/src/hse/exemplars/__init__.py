"""Desk-scale reference simulators.

Each builtin pairs a design space with a pure evaluation function
``fn(design, use_case) -> {target: value}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from ..hyperspace import HyperSpace, TargetIndicator, Variable
from ..runner import FunctionSimulator
from .fev import fev_simulate, fev_space
from .yaw import yaw_simulate, yaw_space


def branin(design: Mapping[str, Any], use_case: Mapping[str, Any] | None = None) -> dict[str, float]:
    """Branin test function on ``x1 in [-5, 10]``, ``x2 in [0, 15]``."""
    x1, x2 = float(design["x1"]), float(design["x2"])
    b = 5.1 / (4 * math.pi ** 2)
    c = 5 / math.pi
    t = 1 / (8 * math.pi)
    f = (x2 - b * x1 ** 2 + c * x1 - 6) ** 2 + 10 * (1 - t) * math.cos(x1) + 10
    return {"f": f}


def branin_space() -> HyperSpace:
    return HyperSpace((Variable.continuous("x1", -5.0, 10.0), Variable.continuous("x2", 0.0, 15.0)),
                      (), (TargetIndicator("f", "minimize"),))


@dataclass(frozen=True)
class Builtin:
    name: str
    space: Callable[[], HyperSpace]
    fn: Callable[[Mapping, Mapping], Mapping[str, float]]

    def simulator(self) -> FunctionSimulator:
        return FunctionSimulator(self.fn)


BUILTINS = {
    "fev": Builtin("fev", fev_space, fev_simulate),
    "yaw": Builtin("yaw", yaw_space, yaw_simulate),
    "branin": Builtin("branin", branin_space, branin),
}


def builtin(name: str) -> Builtin:
    try:
        return BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown builtin simulator {name!r}; choose from {sorted(BUILTINS)}") from None


__all__ = ["BUILTINS", "Builtin", "builtin", "branin", "branin_space", "fev_simulate", "fev_space",
           "yaw_simulate", "yaw_space"]
