"""Vehicle motion models.

Two kinds of vehicle share one kinematic core: virtual vehicles integrate the
ideal rear-axle bicycle model directly, while emulated-physical vehicles add
first-order actuator tracking and a seeded velocity perturbation so their
behavior matches a real miniature car's step response instead of an ideal
integrator. All step functions are pure: they return new states and never
mutate their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Pose2D, wrap_angle

VIRTUAL = "Virtual"
EMULATED_PHYSICAL = "EmulatedPhysical"

MAX_TIMESTEP = 0.1


class InvalidTimestep(ValueError):
    """Raised when an integration step is non-positive or above 0.1 s."""


@dataclass(frozen=True)
class VehicleParams:
    """Per-vehicle physical parameters, in the vehicle's native frame.

    Actuator lags and process noise apply to the emulated-physical kind only;
    the virtual kind must carry zeros there. `accel_max` saturates how hard
    either kind may chase a velocity command.
    """

    wheelbase: float
    v_max: float
    steer_max: float
    accel_max: float
    actuator_tau_v: float = 0.0
    actuator_tau_phi: float = 0.0
    process_noise_sigma_v: float = 0.0
    kind: str = VIRTUAL

    def __post_init__(self) -> None:
        if self.wheelbase <= 0 or self.v_max <= 0 or self.accel_max <= 0:
            raise ValueError("wheelbase, v_max and accel_max must be > 0")
        if not 0 < self.steer_max <= math.pi / 2:
            raise ValueError("steer_max must lie in (0, pi/2]")
        if self.kind == VIRTUAL and (
            self.actuator_tau_v != 0.0
            or self.actuator_tau_phi != 0.0
            or self.process_noise_sigma_v != 0.0
        ):
            raise ValueError("virtual vehicles carry no actuator lag or process noise")
        if min(self.actuator_tau_v, self.actuator_tau_phi, self.process_noise_sigma_v) < 0:
            raise ValueError("lags and noise must be >= 0")


# The miniature car: 140 mm wheelbase, 1 m/s stable top speed, 40 deg steering.
# Lag constants and noise level are calibration values for the emulator, not
# measured ones; accel_max reflects the drive motors, in miniature-frame units.
# tau_v interacts with the cloud's velocity-command conversion: commands move
# the set-point by a*dt per control tick, so the effective platoon gain
# scales like min(1, dt/tau_v). At 0.05 s (one control period) the published
# gains act at face value while the motor limit still shapes a visibly
# lagged step response.
MINIATURE_DEFAULTS = VehicleParams(
    wheelbase=0.14,
    v_max=1.0,
    steer_max=math.radians(40.0),
    accel_max=2.0,
    actuator_tau_v=0.05,
    actuator_tau_phi=0.10,
    process_noise_sigma_v=0.004,
    kind=EMULATED_PHYSICAL,
)

# Full-scale virtual car scaled 14x from the miniature geometry so both kinds
# trace identical paths and share the same acceleration envelope (the
# miniature's 2 m/s^2 is 28 m/s^2 at full scale); matching envelopes keeps
# the two kinds' step responses nearly indistinguishable.
VIRTUAL_DEFAULTS = VehicleParams(
    wheelbase=1.96,
    v_max=14.0,
    steer_max=math.radians(40.0),
    accel_max=28.0,
    kind=VIRTUAL,
)


@dataclass(frozen=True)
class VehicleState:
    """Kinematic state plus the last actuation targets, stamped in sim time."""

    pose: Pose2D
    v: float = 0.0
    phi: float = 0.0
    v_cmd: float = 0.0
    phi_cmd: float = 0.0
    timestamp: float = 0.0

    def with_command(self, v_cmd: float, phi_cmd: float, params: VehicleParams) -> "VehicleState":
        """Return a copy targeting a new command, clamped to actuator limits."""
        return replace(
            self,
            v_cmd=min(max(v_cmd, 0.0), params.v_max),
            phi_cmd=min(max(phi_cmd, -params.steer_max), params.steer_max),
        )


def _check_dt(dt: float) -> None:
    if not 0.0 < dt <= MAX_TIMESTEP:
        raise InvalidTimestep(f"dt must lie in (0, {MAX_TIMESTEP}], got {dt}")


def step_bicycle(
    state: VehicleState, params: VehicleParams, accel: float, phi: float, dt: float
) -> VehicleState:
    """One RK4 step of the rear-axle bicycle model.

    xdot = v cos(theta), ydot = v sin(theta), thetadot = (v / L) tan(phi),
    vdot = accel, with accel and phi held constant over the step. Speed is
    clamped to [0, v_max] and the heading wrapped afterwards.
    """
    _check_dt(dt)
    phi = min(max(phi, -params.steer_max), params.steer_max)
    tan_phi_over_l = math.tan(phi) / params.wheelbase

    def deriv(x: float, y: float, theta: float, v: float):
        return (
            v * math.cos(theta),
            v * math.sin(theta),
            v * tan_phi_over_l,
            accel,
        )

    x0, y0, th0, v0 = state.pose.x, state.pose.y, state.pose.theta, state.v
    k1 = deriv(x0, y0, th0, v0)
    k2 = deriv(x0 + 0.5 * dt * k1[0], y0 + 0.5 * dt * k1[1], th0 + 0.5 * dt * k1[2], v0 + 0.5 * dt * k1[3])
    k3 = deriv(x0 + 0.5 * dt * k2[0], y0 + 0.5 * dt * k2[1], th0 + 0.5 * dt * k2[2], v0 + 0.5 * dt * k2[3])
    k4 = deriv(x0 + dt * k3[0], y0 + dt * k3[1], th0 + dt * k3[2], v0 + dt * k3[3])

    x = x0 + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    y = y0 + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    th = wrap_angle(th0 + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]))
    v = v0 + dt / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
    v = min(max(v, 0.0), params.v_max)

    return replace(
        state,
        pose=Pose2D(x, y, th),
        v=v,
        phi=phi,
        timestamp=state.timestamp + dt,
    )


def command_to_accel(state: VehicleState, params: VehicleParams, dt: float) -> float:
    """Acceleration that moves v toward v_cmd within one step, saturated.

    Virtual vehicles take velocity commands but the bicycle model wants an
    acceleration input; this is the bridge.
    """
    if dt <= 0:
        raise InvalidTimestep(f"dt must be > 0, got {dt}")
    a = (state.v_cmd - state.v) / dt
    return min(max(a, -params.accel_max), params.accel_max)


def step_virtual(state: VehicleState, params: VehicleParams, dt: float) -> VehicleState:
    """Advance a virtual vehicle: convert the velocity command, then integrate."""
    accel = command_to_accel(state, params, dt)
    return step_bicycle(state, params, accel, state.phi_cmd, dt)


def step_emulated_physical(
    state: VehicleState,
    params: VehicleParams,
    dt: float,
    rng: np.random.Generator | None,
) -> VehicleState:
    """Advance an emulated-physical vehicle.

    Velocity and steering track their commands through first-order lags
    (exact discrete update, so tau=0 degenerates to immediate tracking), a
    zero-mean Gaussian perturbation of std sigma_v * sqrt(dt) lands on the
    velocity, and the pose then integrates through the same RK4 core as the
    ideal model. With zero lag and noise this path is bit-identical to
    step_virtual.
    """
    _check_dt(dt)
    if params.kind != EMULATED_PHYSICAL:
        raise ValueError("step_emulated_physical requires an EmulatedPhysical vehicle")

    if params.actuator_tau_v > 0.0:
        v_target = state.v_cmd + (state.v - state.v_cmd) * math.exp(-dt / params.actuator_tau_v)
    else:
        v_target = state.v_cmd
    if params.process_noise_sigma_v > 0.0 and rng is not None:
        v_target += float(rng.normal(0.0, params.process_noise_sigma_v * math.sqrt(dt)))
    v_target = min(max(v_target, 0.0), params.v_max)
    accel = (v_target - state.v) / dt
    accel = min(max(accel, -params.accel_max), params.accel_max)

    if params.actuator_tau_phi > 0.0:
        phi = state.phi_cmd + (state.phi - state.phi_cmd) * math.exp(-dt / params.actuator_tau_phi)
    else:
        phi = state.phi_cmd

    return step_bicycle(state, params, accel, phi, dt)


def step_vehicle(
    state: VehicleState,
    params: VehicleParams,
    dt: float,
    rng: np.random.Generator | None = None,
) -> VehicleState:
    """Advance either vehicle kind by one physics step."""
    if params.kind == EMULATED_PHYSICAL:
        return step_emulated_physical(state, params, dt, rng)
    return step_virtual(state, params, dt)
