"""Fully electric vehicle drivetrain layout study.

A point-mass longitudinal model gives two targets for one drivetrain layout:

* ``t_a50``: time from standstill to 50 km/h at full motor torque [s]
* ``E_c``: electrical energy over a driving cycle, scaled to 100 km [kWh/100km]

The motor delivers constant torque up to its base speed and constant power
above it, up to a hard speed limit. Topology ``A1`` has a single fixed
ratio ``g1``; ``A2`` is a two-speed box that uses ``g1`` below the shift
speed and ``g2`` above it. Larger motors and wider gear spreads add mass,
which is what makes acceleration and consumption pull against each other.

All constants are desk-scale stand-ins, collected in :class:`FevConstants`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping

import numpy as np

from ..hyperspace import HyperSpace, TargetIndicator, Variable
from ..runner import SimulationFailure

KMH = 1.0 / 3.6
TOPOLOGIES = ("A1", "A2")
CYCLES = ("urban", "suburban")
DEFAULT_CYCLE = "urban"


@dataclass(frozen=True)
class FevConstants:
    """Vehicle and drivetrain constants.

    Attributes
    ----------
    base_mass : float
        Vehicle mass without motor and gear set [kg].
    motor_specific_power : float
        Peak motor power per kg of motor mass [W/kg].
    spread_mass : float
        Gear-set mass per unit of ratio spread ``g1/g2 - 1`` [kg].
    rotating_factor : float
        Equivalent-mass factor for rotating inertia [-].
    wheel_radius : float
        Dynamic tyre radius [m].
    drag_area : float
        Drag coefficient times frontal area [m^2].
    air_density : float
        [kg/m^3].
    rolling_coeff : float
        Rolling resistance coefficient [-].
    gravity : float
        [m/s^2].
    efficiency : float
        Constant battery-to-wheel efficiency [-].
    max_motor_speed : float
        Motor speed limit [rad/s].
    dt : float
        RK4 step for the acceleration run [s].
    t_limit : float
        Acceleration runs that have not reached the target speed by this
        time count as unreachable [s].
    """

    base_mass: float = 1250.0
    motor_specific_power: float = 1500.0
    spread_mass: float = 40.0
    rotating_factor: float = 1.05
    wheel_radius: float = 0.30
    drag_area: float = 0.65
    air_density: float = 1.20
    rolling_coeff: float = 0.010
    gravity: float = 9.81
    efficiency: float = 0.85
    max_motor_speed: float = 700.0
    dt: float = 0.01
    t_limit: float = 60.0


DEFAULTS = FevConstants()

#: documented baseline layout used for the golden-value test
BASELINE = {"T_max": 160.0, "omega_base": 450.0, "g1": 8.0, "topology": "A1"}


@dataclass(frozen=True)
class Layout:
    t_max: float
    omega_base: float
    g1: float
    g2: float
    v_shift: float

    def ratio(self, v: float) -> float:
        return self.g1 if v < self.v_shift else self.g2


def layout_from_design(design: Mapping[str, Any]) -> Layout:
    """Validate a design point and map it to a :class:`Layout`.

    ``A1`` is represented as ``A2`` with ``g2 = g1``, which is the same
    drivetrain. ``g2 > g1`` is rejected; ``g2 = g1`` is accepted.
    """
    topology = design.get("topology", "A1")
    if topology not in TOPOLOGIES:
        raise ValueError(f"unknown topology {topology!r}; expected one of {TOPOLOGIES}")
    t_max = float(design["T_max"])
    omega_base = float(design["omega_base"])
    g1 = float(design["g1"])
    if not t_max > 0:
        raise ValueError(f"T_max must be > 0, got {t_max}")
    if not omega_base > 0:
        raise ValueError(f"omega_base must be > 0, got {omega_base}")
    if not g1 > 0:
        raise ValueError(f"g1 must be > 0, got {g1}")
    if topology == "A1":
        return Layout(t_max, omega_base, g1, g1, math.inf)
    g2 = float(design["g2"])
    v_shift = float(design["shift_speed"])
    if not 0 < g2 <= g1:
        raise ValueError(f"A2 needs 0 < g2 <= g1, got g1={g1}, g2={g2}")
    if not v_shift > 0:
        raise ValueError(f"shift_speed must be > 0, got {v_shift}")
    return Layout(t_max, omega_base, g1, g2, v_shift)


def vehicle_mass(layout: Layout, c: FevConstants = DEFAULTS) -> float:
    """Base mass plus motor mass (scales with peak power) plus gear-set mass."""
    peak_power = layout.t_max * layout.omega_base
    spread = layout.g1 / layout.g2 - 1.0
    return c.base_mass + peak_power / c.motor_specific_power + c.spread_mass * spread


def motor_torque(omega: float, layout: Layout, c: FevConstants = DEFAULTS) -> float:
    if omega <= layout.omega_base:
        return layout.t_max
    if omega <= c.max_motor_speed:
        return layout.t_max * layout.omega_base / omega
    return 0.0


def resistance(v: float, mass: float, c: FevConstants = DEFAULTS) -> float:
    return mass * c.gravity * c.rolling_coeff + 0.5 * c.air_density * c.drag_area * v * v


def tractive_force(v: float, layout: Layout, c: FevConstants = DEFAULTS) -> float:
    g = layout.ratio(v)
    return motor_torque(v * g / c.wheel_radius, layout, c) * g / c.wheel_radius


def acceleration(v: float, layout: Layout, mass: float, c: FevConstants = DEFAULTS) -> float:
    return (tractive_force(v, layout, c) - resistance(v, mass, c)) / (c.rotating_factor * mass)


def accel_time(layout: Layout, v_target: float = 50 * KMH, c: FevConstants = DEFAULTS) -> float:
    """Full-torque time from rest to ``v_target`` by fixed-step RK4.

    The crossing time is interpolated linearly inside the final step.
    """
    mass = vehicle_mass(layout, c)
    h = c.dt
    t, v = 0.0, 0.0
    if acceleration(0.0, layout, mass, c) <= 0:
        raise SimulationFailure("unreachable-target-speed")
    n_steps = int(math.ceil(c.t_limit / h))
    for _ in range(n_steps):
        k1 = acceleration(v, layout, mass, c)
        k2 = acceleration(v + 0.5 * h * k1, layout, mass, c)
        k3 = acceleration(v + 0.5 * h * k2, layout, mass, c)
        k4 = acceleration(v + h * k3, layout, mass, c)
        v_next = v + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if v_next >= v_target:
            return t + h * (v_target - v) / (v_next - v)
        if v_next <= v:
            break
        t, v = t + h, v_next
    raise SimulationFailure("unreachable-target-speed")


@lru_cache(maxsize=None)
def _bundled_cycle(name: str) -> tuple[np.ndarray, np.ndarray]:
    text = resources.files(__package__).joinpath("data", f"{name}_cycle.csv").read_text()
    return parse_cycle(text)


def parse_cycle(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Parse a ``time_s,velocity_mps`` profile; times strictly increasing."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].replace(" ", "") != "time_s,velocity_mps":
        raise ValueError("cycle file must start with header 'time_s,velocity_mps'")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]], dtype=float)
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != 2:
        raise ValueError("cycle needs at least two rows of two columns")
    t, v = data[:, 0], data[:, 1]
    if np.any(np.diff(t) <= 0):
        raise ValueError("cycle times must be strictly increasing")
    if np.any(v < 0):
        raise ValueError("cycle velocities must be >= 0")
    return t, v


def load_cycle(name_or_path: str) -> tuple[np.ndarray, np.ndarray]:
    if name_or_path in CYCLES:
        return _bundled_cycle(name_or_path)
    with open(name_or_path, encoding="utf-8") as fh:
        return parse_cycle(fh.read())


def cycle_energy(layout: Layout, cycle: tuple[np.ndarray, np.ndarray],
                 c: FevConstants = DEFAULTS) -> float:
    """Backward-facing consumption over a cycle in kWh/100km.

    Each interval uses its mean speed and constant acceleration; only
    positive wheel power is drawn (no recuperation). A cycle speed the
    active gear cannot reach within the motor speed limit is a failure.
    """
    t, v = cycle
    dt = np.diff(t)
    v_mid = 0.5 * (v[1:] + v[:-1])
    acc = np.diff(v) / dt
    mass = vehicle_mass(layout, c)
    for speed in v:
        if speed * layout.ratio(speed) / c.wheel_radius > c.max_motor_speed * (1 + 1e-12):
            raise SimulationFailure("cycle-overspeed")
    rolling = np.where(v_mid > 0, mass * c.gravity * c.rolling_coeff, 0.0)
    force = c.rotating_factor * mass * acc + rolling + 0.5 * c.air_density * c.drag_area * v_mid ** 2
    power = np.maximum(force * v_mid, 0.0) / c.efficiency
    energy_j = float(np.sum(power * dt))
    distance_km = float(np.sum(v_mid * dt)) / 1000.0
    if not distance_km > 0:
        raise ValueError("cycle covers no distance")
    return energy_j / 3.6e6 * 100.0 / distance_km


def fev_simulate(design: Mapping[str, Any], use_case: Mapping[str, Any] | None = None,
                 constants: FevConstants = DEFAULTS) -> dict[str, float]:
    """Evaluate one drivetrain layout; returns ``{"t_a50", "E_c"}``.

    ``use_case`` may name a bundled cycle or a cycle CSV path under
    ``"cycle"``; the urban cycle is used otherwise.
    """
    layout = layout_from_design(design)
    cycle = load_cycle(str((use_case or {}).get("cycle", DEFAULT_CYCLE)))
    return {"t_a50": accel_time(layout, c=constants), "E_c": cycle_energy(layout, cycle, constants)}


def fev_space(cycles: tuple[str, ...] | None = None) -> HyperSpace:
    """Layout space for the study; with two or more cycles the cycle becomes a use case."""
    a2 = {"topology": ("A2",)}
    design = (
        Variable.continuous("T_max", 80.0, 240.0, "N*m"),
        Variable.continuous("omega_base", 300.0, 700.0, "rad/s"),
        Variable.continuous("g1", 5.0, 12.0),
        Variable.categorical("topology", TOPOLOGIES),
        Variable.continuous("g2", 2.5, 5.0, active_when=a2),
        Variable.continuous("shift_speed", 5.0, 15.0, "m/s", active_when=a2),
    )
    use_case = (Variable.categorical("cycle", cycles),) if cycles and len(cycles) > 1 else ()
    targets = (TargetIndicator("t_a50", "minimize", "s"),
               TargetIndicator("E_c", "minimize", "kWh/100km"))
    return HyperSpace(design, use_case, targets)
