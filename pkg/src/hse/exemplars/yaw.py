"""Lateral stability gain of active yaw control on a constant-radius circle.

A quasi-static single-track model is swept in lateral acceleration ``a_y``
while the vehicle follows a circle of radius ``r`` and accelerates
longitudinally at ``a_x``. At each ``a_y`` the steady steering angle is

    delta = L/r + F_yf/C_f - F_yr/C_r
    F_yf = (m a_y l_r - M)/L,   F_yr = (m a_y l_f + M)/L

with a rear cornering stiffness that degrades with ``a_y`` and ``a_x``
(load transfer), so the steering curve bends away from its linear
tangent ``delta_lin = L/r + K_us(a_x) a_y``. The vehicle counts as stable
while ``|delta - delta_lin|`` stays inside a band of constant width; the
first exit is ``a_y,max``.

The controller adds a yaw moment ``M = clamp(K (r_ref - v/r), +-M_max)``
where ``r_ref`` comes from a reference model that knows only the nominal
(``a_x = 0``) understeer gradient. Modest gains straighten the curve; large
gains drag it toward the mismatched reference line, which can shrink the
stable range. The drive topology sets the moment authority ``M_max``.

The gain is ``a_y,max,ayc / a_y,max,ref - 1`` against ``K = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from ..hyperspace import HyperSpace, TargetIndicator, Variable

TOPOLOGIES = ("2WD", "4WD")


@dataclass(frozen=True)
class YawConstants:
    """Vehicle, tyre and criterion constants.

    Attributes
    ----------
    mass : float
        [kg].
    l_f, l_r : float
        Distances of the front and rear axle from the centre of gravity [m].
    c_f, c_r : float
        Front and rear cornering stiffness per axle [N/rad].
    kappa_y : float
        Fractional rear stiffness loss at the grip cap [-].
    kappa_x : float
        Fractional rear stiffness loss per g of longitudinal acceleration [-].
    mu : float
        Friction coefficient; the combined grip cap is ``mu g`` [-].
    gravity : float
        [m/s^2].
    band : float
        Half-width of the stability band around the linear curve [rad].
    m_max_2wd, m_max_4wd : float
        Yaw-moment authority per drive topology [N*m].
    ay_step : float
        Scan step of the ``a_y`` sweep before bisection [m/s^2].
    """

    mass: float = 1500.0
    l_f: float = 1.2
    l_r: float = 1.5
    c_f: float = 80000.0
    c_r: float = 110000.0
    kappa_y: float = 0.7
    kappa_x: float = 1.5
    mu: float = 0.95
    gravity: float = 9.81
    band: float = math.radians(0.5)
    m_max_2wd: float = 250.0
    m_max_4wd: float = 2000.0
    ay_step: float = 0.02

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r


DEFAULTS = YawConstants()

#: documented use case for the 2WD versus 4WD comparison
BASELINE_USE_CASE = {"r": 100.0, "a_x": 1.0}
#: best gain per topology on a 41-point K grid over [0, 2e5] at the baseline
TUNED_GAINS = {"2WD": 5000.0, "4WD": 30000.0}
#: badly tuned setting: large K under strong acceleration
ADVERSARIAL_USE_CASE = {"r": 100.0, "a_x": 2.0}
ADVERSARIAL_GAIN = 200000.0


def grip_cap(a_x: float, c: YawConstants = DEFAULTS) -> float:
    """Largest lateral acceleration the tyres can carry alongside ``a_x``."""
    total = c.mu * c.gravity
    return math.sqrt(max(total * total - a_x * a_x, 0.0))


def rear_stiffness(a_y: float, a_x: float, c: YawConstants = DEFAULTS) -> float:
    cap = grip_cap(a_x, c)
    lat = (a_y / cap) ** 2 if cap > 0 else 1.0
    return c.c_r * (1.0 - c.kappa_x * a_x / c.gravity) * (1.0 - c.kappa_y * lat)


def understeer_gradient(a_x: float, c: YawConstants = DEFAULTS) -> float:
    """Linear-range understeer gradient at longitudinal acceleration ``a_x`` [rad/(m/s^2)]."""
    return c.mass / c.wheelbase * (c.l_r / c.c_f - c.l_f / rear_stiffness(0.0, a_x, c))


def steering_angle(a_y: float, r: float, a_x: float, gain: float, m_max: float,
                   c: YawConstants = DEFAULTS) -> tuple[float, float]:
    """Steady steering angle and applied yaw moment at one ``a_y``.

    The closed loop is piecewise linear in ``delta``, so the unsaturated
    solution is tried first and the clamped one used if it exceeds the
    authority limit.
    """
    big_l = c.wheelbase
    c_r = rear_stiffness(a_y, a_x, c)
    a = big_l / r + c.mass * a_y * (c.l_r / c.c_f - c.l_f / c_r) / big_l
    b = 1.0 / (big_l * c.c_f) + 1.0 / (big_l * c_r)
    if gain == 0.0 or m_max == 0.0:
        return a, 0.0
    v = math.sqrt(a_y * r)
    denom = big_l + understeer_gradient(0.0, c) * v * v
    delta = (a + b * gain * v / r) / (1.0 + b * gain * v / denom)
    moment = gain * (v * delta / denom - v / r)
    if abs(moment) > m_max:
        moment = math.copysign(m_max, moment)
        delta = a - b * moment
    return delta, moment


def linear_steering(a_y: float, r: float, a_x: float, c: YawConstants = DEFAULTS) -> float:
    return c.wheelbase / r + understeer_gradient(a_x, c) * a_y


def max_lateral_acceleration(r: float, a_x: float, gain: float, m_max: float,
                             c: YawConstants = DEFAULTS) -> float:
    """First ``a_y`` at which the steering curve leaves the stability band.

    The sweep scans in ``ay_step`` increments, then bisects the bracketing
    step. Without an exit the grip cap is returned.
    """
    cap = grip_cap(a_x, c)

    def excess(a_y: float) -> float:
        delta, _ = steering_angle(a_y, r, a_x, gain, m_max, c)
        return abs(delta - linear_steering(a_y, r, a_x, c)) - c.band

    n = int(math.ceil(cap / c.ay_step))
    grid = np.linspace(0.0, cap, n + 1)
    prev = 0.0
    for a_y in grid[1:]:
        if excess(a_y) > 0:
            lo, hi = prev, float(a_y)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if excess(mid) > 0:
                    hi = mid
                else:
                    lo = mid
            return hi
        prev = float(a_y)
    return cap


def authority(topology: str, c: YawConstants = DEFAULTS) -> float:
    if topology == "2WD":
        return c.m_max_2wd
    if topology == "4WD":
        return c.m_max_4wd
    raise ValueError(f"unknown topology {topology!r}; expected one of {TOPOLOGIES}")


def stability_gain(gain: float, topology: str, r: float, a_x: float, m_max: float | None = None,
                   c: YawConstants = DEFAULTS) -> float:
    if not r > 0:
        raise ValueError(f"r must be > 0, got {r}")
    if not a_x > 0:
        raise ValueError(f"a_x must be > 0, got {a_x}")
    if not gain >= 0:
        raise ValueError(f"controller gain must be >= 0, got {gain}")
    limit = authority(topology, c) if m_max is None else float(m_max)
    ref = max_lateral_acceleration(r, a_x, 0.0, limit, c)
    ayc = max_lateral_acceleration(r, a_x, gain, limit, c)
    return ayc / ref - 1.0


def yaw_simulate(design: Mapping[str, Any], use_case: Mapping[str, Any],
                 constants: YawConstants = DEFAULTS) -> dict[str, float]:
    """Evaluate one controller layout; returns ``{"gain_stab"}``.

    ``design`` holds ``K`` and ``topology`` and may override ``M_max``;
    ``use_case`` holds ``r`` and ``a_x``.
    """
    m_max = design.get("M_max")
    g = stability_gain(float(design["K"]), str(design["topology"]), float(use_case["r"]),
                       float(use_case["a_x"]), None if m_max is None else float(m_max), constants)
    return {"gain_stab": g}


def yaw_space() -> HyperSpace:
    design = (Variable.continuous("K", 0.0, 200000.0, "N*m*s/rad"),
              Variable.categorical("topology", TOPOLOGIES))
    use_case = (Variable.continuous("r", 40.0, 200.0, "m"),
                Variable.continuous("a_x", 0.25, 3.0, "m/s^2"))
    return HyperSpace(design, use_case, (TargetIndicator("gain_stab", "maximize"),))
