"""Cloud-side controllers.

Longitudinal platoon control is a cooperative adaptive cruise law fed by the
platoon head's velocity, the predecessor's velocity and the spacing error;
its acceleration output is converted to the velocity command the vehicles
actually execute. Lateral control is pure pursuit toward a speed-scaled
lookahead point on the track centerline. The head vehicle follows a scripted
reference: constant cruise plus a finite sinusoid fired at a track landmark.

All functions are pure; the coordinator calls them from its control loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dynamics import VehicleParams, VehicleState
from .geometry import Track, wrap_angle

# Pure-pursuit tuning, full-scale meters/seconds.
LOOKAHEAD_MIN = 1.5
LOOKAHEAD_GAIN = 0.8
OFFTRACK_LIMIT = 2.0


class OffTrack(ValueError):
    """Raised when a vehicle is too far from the centerline to steer back."""


@dataclass(frozen=True)
class CaccGains:
    """Feedback gains and desired spacing of the platoon controller.

    Defaults exist per vehicle kind; see miniature_gains / virtual_gains.
    """

    k_p: float
    k_v1: float
    k_v2: float
    d_des: float

    def __post_init__(self) -> None:
        if min(self.k_p, self.k_v1, self.k_v2, self.d_des) < 0:
            raise ValueError("gains and spacing must be >= 0")


def miniature_gains(d_des: float = 8.4) -> CaccGains:
    """Published gain set for miniature vehicles (spacing in full-scale m)."""
    return CaccGains(k_p=0.25, k_v1=0.60, k_v2=0.60, d_des=d_des)


def virtual_gains(d_des: float = 8.4) -> CaccGains:
    """Published gain set for virtual vehicles (spacing in full-scale m)."""
    return CaccGains(k_p=0.10, k_v1=0.50, k_v2=0.50, d_des=d_des)


@dataclass(frozen=True)
class ControlCommand:
    """The only actuation contract: a velocity and a front-wheel angle."""

    v_cmd: float
    phi_cmd: float


@dataclass(frozen=True)
class HeadProfile:
    """Reference velocity of the platoon head, full-scale m/s.

    Cruise at base_speed; once the head first crosses trigger_arclength, add
    a sinusoid of the given amplitude and period for perturb_cycles periods,
    then cruise again.
    """

    base_speed: float = 4.2
    perturb_amplitude: float = 1.4
    perturb_period: float = 3.5
    trigger_arclength: float = 0.0
    perturb_cycles: int = 2

    def __post_init__(self) -> None:
        if not self.base_speed > self.perturb_amplitude >= 0:
            raise ValueError("need base_speed > perturb_amplitude >= 0")
        if self.perturb_period <= 0:
            raise ValueError("perturb_period must be > 0")


def cacc_accel(
    gains: CaccGains,
    p_i: float,
    p_prev: float,
    v_i: float,
    v_prev: float,
    v_head: float,
) -> float:
    """Cooperative ACC acceleration for vehicle i.

    Positions are unwrapped longitudinal arc-lengths with the follower behind
    its predecessor (p_i < p_prev). The spacing term penalizes the deviation
    of the actual gap from d_des with the sign that makes excess gap
    accelerate the follower; the two velocity terms track the head and the
    predecessor.
    """
    gap = p_prev - p_i
    return (
        gains.k_p * (gap - gains.d_des)
        + gains.k_v1 * (v_head - v_i)
        + gains.k_v2 * (v_prev - v_i)
    )


def accel_to_vcmd(v_prev_received: float, a: float, dt: float) -> float:
    """Convert a desired acceleration into the executable velocity command.

    Integrates one control interval from the vehicle's last received
    velocity; never commands reverse.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    return max(0.0, v_prev_received + a * dt)


def lateral_preview(state: VehicleState, track: Track, params: VehicleParams) -> float:
    """Pure-pursuit front-wheel angle toward a lookahead centerline point.

    The lookahead distance grows with speed (LOOKAHEAD_GAIN seconds of
    travel, floored at LOOKAHEAD_MIN). Raises OffTrack when the vehicle is
    more than 2 m laterally off the centerline, full scale.
    """
    s, lateral, _ = track.project(state.pose)
    if abs(lateral) > OFFTRACK_LIMIT:
        raise OffTrack(f"lateral error {lateral:.2f} m exceeds {OFFTRACK_LIMIT} m")
    lookahead = max(LOOKAHEAD_MIN, LOOKAHEAD_GAIN * state.v)
    tx, ty = track.point_at(s + lookahead)
    alpha = wrap_angle(math.atan2(ty - state.pose.y, tx - state.pose.x) - state.pose.theta)
    phi = math.atan2(2.0 * params.wheelbase * math.sin(alpha), lookahead)
    return min(max(phi, -params.steer_max), params.steer_max)


def head_reference(profile: HeadProfile, s: float, t_since_trigger: float | None) -> float:
    """Head-vehicle velocity reference at arc-length s.

    `t_since_trigger` is None before the landmark crossing; during the
    perturbation window the sinusoid rides on the base speed.
    """
    if t_since_trigger is None or t_since_trigger < 0:
        return profile.base_speed
    if t_since_trigger < profile.perturb_cycles * profile.perturb_period:
        return profile.base_speed + profile.perturb_amplitude * math.sin(
            2.0 * math.pi * t_since_trigger / profile.perturb_period
        )
    return profile.base_speed
