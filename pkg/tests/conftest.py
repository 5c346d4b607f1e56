import math

import pytest
from hypothesis import HealthCheck, settings

from hse.hyperspace import HyperSpace, TargetIndicator, Variable

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def branin_unit(design, use_case=None):
    """Branin function with both inputs rescaled to [0, 1]."""
    x1 = -5.0 + 15.0 * float(design["u1"])
    x2 = 15.0 * float(design["u2"])
    b, c, t = 5.1 / (4 * math.pi ** 2), 5 / math.pi, 1 / (8 * math.pi)
    return {"f": (x2 - b * x1 ** 2 + c * x1 - 6) ** 2 + 10 * (1 - t) * math.cos(x1) + 10}


@pytest.fixture
def branin_space():
    return HyperSpace((Variable.continuous("u1", 0.0, 1.0), Variable.continuous("u2", 0.0, 1.0)),
                      (), (TargetIndicator("f", "minimize"),))


@pytest.fixture
def mixed_space():
    a2 = {"gear": ("two",)}
    return HyperSpace(
        (Variable.continuous("x", 0.0, 10.0, "m"),
         Variable.discrete("n", [1.0, 3.0, 9.0]),
         Variable.categorical("gear", ["one", "two"]),
         Variable.continuous("ratio", 1.0, 2.0, active_when=a2)),
        (Variable.continuous("load", -1.0, 1.0),),
        (TargetIndicator("cost", "minimize", "EUR"), TargetIndicator("perf", "maximize")))
