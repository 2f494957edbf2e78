import math

import numpy as np
import pytest

from mixtwin.dynamics import (
    MINIATURE_DEFAULTS,
    VIRTUAL_DEFAULTS,
    InvalidTimestep,
    VehicleParams,
    VehicleState,
    command_to_accel,
    step_bicycle,
    step_emulated_physical,
    step_vehicle,
    step_virtual,
)
from mixtwin.geometry import Pose2D


def mini(**overrides) -> VehicleParams:
    from dataclasses import replace

    return replace(MINIATURE_DEFAULTS, **overrides)


def state(x=0.0, y=0.0, theta=0.0, v=0.0, phi=0.0, v_cmd=0.0, phi_cmd=0.0):
    return VehicleState(pose=Pose2D(x, y, theta), v=v, phi=phi, v_cmd=v_cmd, phi_cmd=phi_cmd)


def test_straight_line_step():
    s = state(v=1.0)
    out = step_bicycle(s, mini(), accel=0.0, phi=0.0, dt=0.1)
    assert out.pose.x == pytest.approx(0.1, abs=1e-12)
    assert out.pose.y == 0.0
    assert out.pose.theta == 0.0
    assert out.v == 1.0


def test_constant_acceleration_matches_closed_form():
    # x(t) = 0.5*a*t^2 is a cubic-free polynomial: RK4 integrates it exactly.
    s = state(v=0.0)
    out = step_bicycle(s, mini(), accel=0.5, phi=0.0, dt=0.1)
    assert out.v == pytest.approx(0.05, abs=1e-15)
    assert out.pose.x == pytest.approx(0.0025, abs=1e-15)


def test_circle_radius_oracle():
    """One revolution at constant v, phi traces a circle of radius L/tan(phi)."""
    params = mini(process_noise_sigma_v=0.0)
    phi = 0.3
    radius = params.wheelbase / math.tan(phi)
    v = 0.8
    period = 2.0 * math.pi * radius / v
    dt = 0.01
    s = state(v=v)
    # Circle center sits at distance R to the left of the start heading.
    cx, cy = 0.0, radius
    max_dev = 0.0
    for _ in range(round(period / dt)):
        s = step_bicycle(s, params, accel=0.0, phi=phi, dt=dt)
        r = math.hypot(s.pose.x - cx, s.pose.y - cy)
        max_dev = max(max_dev, abs(r - radius) / radius)
    assert max_dev < 1e-3
    # Back near the start up to the sub-step quantization of the period.
    assert math.hypot(s.pose.x, s.pose.y) < v * dt + 1e-3 * radius


def test_speed_conserved_exactly_without_accel():
    rng = np.random.default_rng(2)
    params = mini()
    s = state(v=0.43)
    for _ in range(500):
        s = step_bicycle(s, params, accel=0.0, phi=float(rng.uniform(-0.5, 0.5)), dt=0.01)
        assert s.v == 0.43


def test_heading_rate_matches_kinematics():
    params = mini()
    v, phi, dt = 0.6, 0.25, 0.01
    s = state(v=v)
    out = step_bicycle(s, params, accel=0.0, phi=phi, dt=dt)
    expected_rate = v / params.wheelbase * math.tan(phi)
    assert (out.pose.theta - 0.0) / dt == pytest.approx(expected_rate, rel=1e-6)


def test_rk4_order_against_halved_step():
    # With accel and steering active the local error should shrink ~16x per halving.
    params = mini()

    def integrate(dt, steps):
        s = state(v=0.2, v_cmd=0.2)
        for _ in range(steps):
            s = step_bicycle(s, params, accel=0.3, phi=0.4, dt=dt)
        return s

    ref = integrate(0.0005, 4000)
    coarse = integrate(0.02, 100)
    fine = integrate(0.01, 200)
    err_coarse = math.hypot(coarse.pose.x - ref.pose.x, coarse.pose.y - ref.pose.y)
    err_fine = math.hypot(fine.pose.x - ref.pose.x, fine.pose.y - ref.pose.y)
    assert err_coarse / max(err_fine, 1e-16) > 8.0


def test_invalid_timestep():
    s = state(v=0.1)
    with pytest.raises(InvalidTimestep):
        step_bicycle(s, mini(), 0.0, 0.0, dt=0.0)
    with pytest.raises(InvalidTimestep):
        step_bicycle(s, mini(), 0.0, 0.0, dt=0.11)
    with pytest.raises(InvalidTimestep):
        step_emulated_physical(s, mini(), dt=-0.01, rng=None)


def test_speed_clamped_to_limits():
    params = mini()
    s = state(v=0.99, v_cmd=0.99)
    out = step_bicycle(s, params, accel=5.0, phi=0.0, dt=0.1)
    assert out.v == params.v_max
    out = step_bicycle(state(v=0.01), params, accel=-5.0, phi=0.0, dt=0.1)
    assert out.v == 0.0


def test_emulated_converged_equals_ideal():
    params = mini(process_noise_sigma_v=0.0)
    s = state(v=0.4, phi=0.1, v_cmd=0.4, phi_cmd=0.1)
    lagged = step_emulated_physical(s, params, dt=0.01, rng=None)
    ideal = step_bicycle(s, params, accel=0.0, phi=0.1, dt=0.01)
    assert lagged == ideal


def test_first_order_lag_step_response():
    """v(0.25 s) after a 0 -> 0.5 m/s command step with tau = 0.25 s."""
    params = mini(actuator_tau_v=0.25, process_noise_sigma_v=0.0)
    s = state(v_cmd=0.5)
    for _ in range(25):
        s = step_emulated_physical(s, params, dt=0.01, rng=None)
    expected = 0.5 * (1.0 - math.exp(-1.0))
    assert s.v == pytest.approx(expected, rel=0.01)


def test_process_noise_is_zero_mean():
    """Sample mean of v over an OU-like run stays within 3 standard errors."""
    params = mini(process_noise_sigma_v=0.02)
    dt = 0.01
    rng = np.random.default_rng(123)
    s = state(v=0.5, v_cmd=0.5)
    vals = []
    for _ in range(10_000):
        s = step_emulated_physical(s, params, dt, rng)
        vals.append(s.v)
    rho = math.exp(-dt / params.actuator_tau_v)
    sigma_st = params.process_noise_sigma_v * math.sqrt(dt) / math.sqrt(1 - rho**2)
    se_mean = sigma_st * math.sqrt((1 + rho) / ((1 - rho) * len(vals)))
    assert abs(float(np.mean(vals)) - 0.5) < 3.0 * se_mean


def test_zero_lag_emulated_bit_identical_to_virtual():
    """With tau = sigma = 0 both kinds share the exact same arithmetic."""
    params_e = mini(actuator_tau_v=0.0, actuator_tau_phi=0.0, process_noise_sigma_v=0.0)
    params_v = VehicleParams(
        wheelbase=params_e.wheelbase,
        v_max=params_e.v_max,
        steer_max=params_e.steer_max,
        accel_max=params_e.accel_max,
        kind="Virtual",
    )
    rng = np.random.default_rng(9)
    se = sv = state(v=0.2, v_cmd=0.2)
    for k in range(6000):
        if k % 20 == 0:
            v_cmd = float(rng.uniform(0.0, 0.8))
            phi_cmd = float(rng.uniform(-0.4, 0.4))
            se = se.with_command(v_cmd, phi_cmd, params_e)
            sv = sv.with_command(v_cmd, phi_cmd, params_v)
        se = step_emulated_physical(se, params_e, 0.01, rng=None)
        sv = step_virtual(sv, params_v, 0.01)
        assert se.pose == sv.pose
        assert se.v == sv.v


def test_command_to_accel_examples():
    params = VIRTUAL_DEFAULTS
    assert command_to_accel(state(v=0.3, v_cmd=0.3), params, dt=0.05) == 0.0
    assert command_to_accel(state(v=0.3, v_cmd=0.305), params, dt=0.05) == pytest.approx(0.1)
    small = VehicleParams(wheelbase=1.0, v_max=20.0, steer_max=0.5, accel_max=2.0)
    assert command_to_accel(state(v=0.0, v_cmd=10.0), small, dt=0.05) == 2.0
    with pytest.raises(InvalidTimestep):
        command_to_accel(state(), params, dt=0.0)


def test_with_command_clamps_to_limits():
    params = mini()
    s = state().with_command(5.0, 2.0, params)
    assert s.v_cmd == params.v_max
    assert s.phi_cmd == params.steer_max
    s = state().with_command(-1.0, -2.0, params)
    assert s.v_cmd == 0.0
    assert s.phi_cmd == -params.steer_max


def test_virtual_params_reject_lag():
    with pytest.raises(ValueError):
        VehicleParams(wheelbase=1.0, v_max=1.0, steer_max=0.5, accel_max=1.0, actuator_tau_v=0.1)


def test_step_vehicle_dispatch():
    s = state(v=0.3, v_cmd=0.3)
    assert step_vehicle(s, MINIATURE_DEFAULTS, 0.01, np.random.default_rng(0)).timestamp == 0.01
    assert step_vehicle(s, VIRTUAL_DEFAULTS, 0.01).timestamp == 0.01
    with pytest.raises(ValueError):
        step_emulated_physical(s, VIRTUAL_DEFAULTS, 0.01, None)
