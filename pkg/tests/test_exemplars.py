import io
import json
import math
import time

import numpy as np
import pytest

from hse.exemplars import builtin
from hse.exemplars.fev import (BASELINE, accel_time, DEFAULTS as FEV, KMH, cycle_energy, fev_simulate,
                               fev_space, layout_from_design, load_cycle, parse_cycle)
from hse.exemplars.serve import serve
from hse.exemplars.yaw import (ADVERSARIAL_GAIN, ADVERSARIAL_USE_CASE, BASELINE_USE_CASE,
                               DEFAULTS as YAW, TUNED_GAINS, authority, stability_gain,
                               steering_angle, yaw_simulate, yaw_space)
from hse.runner import SimulationFailure

BASELINE_T_A50 = 4.6010099413877
BASELINE_E_C = 14.459178739298196
TUNED = {"2WD": 0.07223315662546748, "4WD": 0.3950464046496731}
ADVERSARIAL = {"2WD": 0.08027302483853371, "4WD": -0.16896589840101173}


# -- FEV -----------------------------------------------------------------------------

def euler_accel_time(t_max, omega_base, g, dt=1e-3):
    """Oracle: forward Euler of the longitudinal model, written from scratch."""
    c = FEV
    mass = c.base_mass + t_max * omega_base / c.motor_specific_power
    v, t = 0.0, 0.0
    while v < 50 / 3.6:
        omega = v * g / c.wheel_radius
        torque = t_max if omega <= omega_base else t_max * omega_base / omega
        drive = torque * g / c.wheel_radius
        drag = mass * c.gravity * c.rolling_coeff + 0.5 * c.air_density * c.drag_area * v * v
        v_next = v + dt * (drive - drag) / (c.rotating_factor * mass)
        if v_next >= 50 / 3.6:
            return t + dt * (50 / 3.6 - v) / (v_next - v)
        v, t = v_next, t + dt
    return t


def test_fev_baseline_golden_and_oracle():
    out = fev_simulate(BASELINE)
    assert math.isclose(out["t_a50"], BASELINE_T_A50, rel_tol=1e-12)
    assert math.isclose(out["E_c"], BASELINE_E_C, rel_tol=1e-12)
    oracle = euler_accel_time(BASELINE["T_max"], BASELINE["omega_base"], BASELINE["g1"])
    assert abs(out["t_a50"] - oracle) / oracle < 0.005


@pytest.mark.parametrize("t_max,omega_base,g", [(100.0, 350.0, 6.0), (220.0, 600.0, 10.0),
                                                (80.0, 700.0, 12.0), (240.0, 300.0, 5.0)])
def test_fev_accel_matches_oracle(t_max, omega_base, g):
    layout = layout_from_design({"T_max": t_max, "omega_base": omega_base, "g1": g,
                                 "topology": "A1"})
    got = accel_time(layout)
    assert abs(got - euler_accel_time(t_max, omega_base, g)) / got < 0.005


def test_tall_single_ratio_overspeeds_on_cycle():
    with pytest.raises(SimulationFailure, match="cycle-overspeed"):
        fev_simulate({**BASELINE, "g1": 12.0})


def test_more_torque_is_faster():
    slow = fev_simulate({**BASELINE, "T_max": 100.0})["t_a50"]
    fast = fev_simulate({**BASELINE, "T_max": 200.0})["t_a50"]
    assert fast < slow


def test_a2_with_equal_ratios_is_a1():
    a1 = fev_simulate(BASELINE)
    a2 = fev_simulate({**BASELINE, "topology": "A2", "g2": BASELINE["g1"], "shift_speed": 10.0})
    for k in a1:
        assert abs(a1[k] - a2[k]) <= 1e-9


def test_a2_rejects_overdrive_ratio():
    with pytest.raises(ValueError, match="g2 <= g1"):
        layout_from_design({**BASELINE, "topology": "A2", "g2": 9.0, "shift_speed": 10.0})


def test_heavier_vehicle_uses_more_energy():
    layout = layout_from_design(BASELINE)
    cyc = load_cycle("urban")
    light = cycle_energy(layout, cyc)
    heavy = cycle_energy(layout, cyc, FEV.__class__(base_mass=FEV.base_mass + 200))
    assert 0 < light < heavy


def test_fev_is_fast():
    fev_simulate(BASELINE)
    t0 = time.perf_counter()
    for _ in range(10):
        fev_simulate(BASELINE)
    assert (time.perf_counter() - t0) / 10 < 0.05


def test_cycle_parsing():
    t, v = parse_cycle("time_s,velocity_mps\n0,0\n1,2\n2,0\n")
    assert t.tolist() == [0, 1, 2] and v.tolist() == [0, 2, 0]
    for bad in ("t,v\n0,0\n1,1\n", "time_s,velocity_mps\n0,0\n", "time_s,velocity_mps\n0,0\n0,1\n",
                "time_s,velocity_mps\n0,0\n1,-1\n"):
        with pytest.raises(ValueError):
            parse_cycle(bad)
    urban = load_cycle("urban")
    assert urban[1].max() == pytest.approx(70 * KMH, rel=1e-3)


def test_fev_space_shape():
    s = fev_space()
    assert s.design_names == ["T_max", "omega_base", "g1", "topology", "g2", "shift_speed"]
    assert s.use_case_names == []
    assert fev_space(("urban", "suburban")).use_case_names == ["cycle"]


# -- yaw -----------------------------------------------------------------------------

def oracle_delta(a_y, r, a_x, gain, m_max):
    """Oracle: solve force balance, moment balance, kinematics and control law jointly."""
    c = YAW
    big_l = c.l_f + c.l_r
    cap2 = (c.mu * c.gravity) ** 2 - a_x ** 2
    c_r = c.c_r * (1 - c.kappa_x * a_x / c.gravity) * (1 - c.kappa_y * a_y ** 2 / cap2)
    k_us0 = c.mass / big_l * (c.l_r / c.c_f - c.l_f / c.c_r)
    v = math.sqrt(a_y * r)
    # unknowns: delta, F_yf, F_yr, M
    a = np.array([[0.0, 1.0, 1.0, 0.0],
                  [0.0, c.l_f, -c.l_r, 1.0],
                  [1.0, -1.0 / c.c_f, 1.0 / c_r, 0.0],
                  [-gain * v / (big_l + k_us0 * v * v), 0.0, 0.0, 1.0]])
    b = np.array([c.mass * a_y, 0.0, big_l / r, -gain * v / r])
    x = np.linalg.solve(a, b)
    if abs(x[3]) > m_max:
        a[3] = [0.0, 0.0, 0.0, 1.0]
        b[3] = math.copysign(m_max, x[3])
        x = np.linalg.solve(a, b)
    return x[0], x[3]


@pytest.mark.parametrize("a_y,r,a_x,gain,m_max", [
    (2.0, 100.0, 1.0, 3e4, 2000.0), (6.0, 60.0, 0.5, 1e5, 2000.0), (4.0, 150.0, 2.5, 5e3, 250.0),
    (8.0, 100.0, 1.0, 2e5, 250.0), (1.0, 40.0, 3.0, 0.0, 2000.0)])
def test_steering_matches_linear_solve(a_y, r, a_x, gain, m_max):
    delta, moment = steering_angle(a_y, r, a_x, gain, m_max)
    d_ref, m_ref = oracle_delta(a_y, r, a_x, gain, m_max)
    assert math.isclose(delta, d_ref, rel_tol=1e-9, abs_tol=1e-12)
    assert math.isclose(moment, m_ref, rel_tol=1e-9, abs_tol=1e-6)


def test_no_control_no_gain():
    assert stability_gain(0.0, "4WD", 100.0, 1.0) == 0.0
    assert stability_gain(5e4, "4WD", 100.0, 1.0, m_max=0.0) == 0.0
    assert yaw_simulate({"K": 3e4, "topology": "2WD", "M_max": 0.0}, BASELINE_USE_CASE) == \
        {"gain_stab": 0.0}


def test_tuned_controllers_golden():
    for topo, k in TUNED_GAINS.items():
        g = stability_gain(k, topo, **BASELINE_USE_CASE)
        assert math.isclose(g, TUNED[topo], rel_tol=1e-9)
    assert TUNED["4WD"] > TUNED["2WD"] > 0


def test_adversarial_setting_golden():
    for topo in ("2WD", "4WD"):
        g = stability_gain(ADVERSARIAL_GAIN, topo, **ADVERSARIAL_USE_CASE)
        assert math.isclose(g, ADVERSARIAL[topo], rel_tol=1e-9)
    assert ADVERSARIAL["4WD"] < 0 < ADVERSARIAL["2WD"]


def test_yaw_validation():
    for kw in ({"r": 0.0, "a_x": 1.0}, {"r": 100.0, "a_x": 0.0}):
        with pytest.raises(ValueError):
            stability_gain(1e4, "4WD", **kw)
    with pytest.raises(ValueError):
        stability_gain(-1.0, "4WD", 100.0, 1.0)
    with pytest.raises(ValueError, match="topology"):
        authority("AWD")
    s = yaw_space()
    assert s.use_case_names == ["r", "a_x"] and s.targets[0].orientation == "maximize"


# -- protocol ------------------------------------------------------------------------

def test_serve_protocol():
    reqs = [{"run_id": 4, "design": BASELINE, "use_case": {}},
            {"run_id": 5, "design": {**BASELINE, "g1": 12.0}, "use_case": {}},
            {"run_id": 6, "design": {"T_max": 1.0}, "use_case": {}}]
    out = io.StringIO()
    serve("fev", io.StringIO("\n".join(json.dumps(r) for r in reqs) + "\nnot json\n"), out)
    resp = [json.loads(x) for x in out.getvalue().splitlines()]
    assert [r["run_id"] for r in resp] == [4, 5, 6]
    assert resp[0]["status"] == "ok" and resp[0]["targets"]["t_a50"] == fev_simulate(BASELINE)["t_a50"]
    assert resp[1] == {"run_id": 5, "status": "failed", "reason": "cycle-overspeed"}
    assert resp[2]["reason"].startswith("invalid-input")


def test_unknown_builtin():
    with pytest.raises(ValueError, match="unknown builtin"):
        builtin("nope")
