"""The cloud coordinator: entity registry, state fusion, and the control loop.

Every vehicle source (emulated-physical, virtual, human-driven) funnels into
one registry. Emulated-physical vehicles get their position and heading from
roadside camera fixes and their velocity from on-board reports; virtual and
human-driven vehicles are taken as reported. Fusion dead-reckons each pose
forward to the control instant to compensate measurement and link latency,
after which every consumer sees one time-aligned, full-scale mixed space.

A single logical control loop owns this object. Network ingress must funnel
through one ordered queue; ingress tasks never touch the registry directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .control import (
    CaccGains,
    ControlCommand,
    HeadProfile,
    accel_to_vcmd,
    cacc_accel,
    head_reference,
    lateral_preview,
)
from .dynamics import VehicleParams, VehicleState
from .geometry import (
    FULL_SCALE,
    PHYSICAL_MINIATURE,
    Frame,
    Pose2D,
    Track,
    convert_pose,
    signed_gap,
)
from .perception import Observation

KIND_VIRTUAL = "Virtual"
KIND_PHYSICAL = "EmulatedPhysical"
KIND_HDV = "HDV"
KIND_CONSOLE = "Console"

HUMAN = "human"

OBSTACLE_LATERAL_LIMIT = 5.0


class DuplicateId(ValueError):
    pass


class UnknownVehicle(KeyError):
    pass


class StaleMessage(ValueError):
    """An incoming report not newer than the last accepted one."""


class MissingState(RuntimeError):
    """A platoon member has never reported; control cannot run yet."""


def params_to_full(params: VehicleParams, frame: Frame) -> VehicleParams:
    """Express native-frame vehicle parameters in full-scale units."""
    k = frame.scale_to_full
    if k == 1.0:
        return params
    return VehicleParams(
        wheelbase=params.wheelbase * k,
        v_max=params.v_max * k,
        steer_max=params.steer_max,
        accel_max=params.accel_max * k,
        actuator_tau_v=params.actuator_tau_v,
        actuator_tau_phi=params.actuator_tau_phi,
        process_noise_sigma_v=params.process_noise_sigma_v * k,
        kind=params.kind,
    )


@dataclass
class EntityRecord:
    """Cloud-side record of one registered entity."""

    id: str
    kind: str
    frame: Frame
    params_full: VehicleParams | None = None
    controller: HeadProfile | CaccGains | str | None = None
    # Position channel (full-scale pose) and velocity channel, fused separately.
    pose: Pose2D | None = None
    pose_time: float = -math.inf
    v: float = 0.0
    v_time: float = -math.inf
    last_update_time: float = 0.0
    stale_count: int = 0
    # Wrapped arc-length of the last fused pose and unwrapped lap progress.
    s_wrapped: float | None = None
    progress: float | None = None

    @property
    def has_position(self) -> bool:
        return self.pose is not None


@dataclass(frozen=True)
class MixedSpaceSnapshot:
    """Fused, time-aligned view of the mixed space, full-scale frame."""

    t: float
    vehicles: tuple[tuple[str, VehicleState], ...]
    obstacles: tuple[tuple[str, Pose2D, float], ...]
    facilities: tuple[tuple[str, str], ...]


@dataclass
class _Obstacle:
    id: str
    pose: Pose2D
    radius: float
    s: float


class Coordinator:
    """Registry, fusion and platoon control for one experiment."""

    def __init__(
        self,
        track: Track,
        platoon_order: list[str],
        control_dt: float,
        warmup_s: float = 5.0,
    ):
        self.track = track
        self.platoon_order = list(platoon_order)
        self.control_dt = control_dt
        self.warmup_s = warmup_s
        self.registry: dict[str, EntityRecord] = {}
        self.facilities: dict[str, str] = {}
        self.obstacles: list[_Obstacle] = []
        self._obstacle_seq = 0
        self.human_inputs: dict[str, ControlCommand] = {}
        self.pending_perturbs: dict[str, float] = {}
        self.trigger_time: float | None = None
        self._armed = False
        self._head_cross_target: float | None = None
        # Cruise reference the platoon-leader velocity term tracks. Feeding
        # followers the head's instantaneous (perturbed, noisy) velocity
        # would drive every vehicle at the perturbation frequency directly,
        # putting an amplitude floor under the whole chain; the cruise
        # set-point keeps that term a pure damper so waves only propagate
        # predecessor to follower.
        self.head_reference_speed: float | None = None
        self.events: list[dict] = []
        self.stale_count = 0

    # -- registration ------------------------------------------------------

    def register(
        self,
        entity_id: str,
        kind: str,
        frame: Frame = FULL_SCALE,
        params: VehicleParams | None = None,
        controller: HeadProfile | CaccGains | str | None = None,
    ) -> EntityRecord:
        if entity_id in self.registry:
            raise DuplicateId(entity_id)
        record = EntityRecord(
            id=entity_id,
            kind=kind,
            frame=frame,
            params_full=params_to_full(params, frame) if params else None,
            controller=controller,
        )
        if isinstance(controller, HeadProfile):
            self.head_reference_speed = controller.base_speed
        self.registry[entity_id] = record
        return record

    def vehicle(self, entity_id: str) -> EntityRecord:
        try:
            record = self.registry[entity_id]
        except KeyError:
            raise UnknownVehicle(entity_id) from None
        return record

    def platoon_ready(self) -> bool:
        return all(
            vid in self.registry and self.registry[vid].has_position
            for vid in self.platoon_order
        )

    # -- fusion ------------------------------------------------------------

    def fuse(self, record: EntityRecord, incoming, t_now: float) -> VehicleState:
        """Ingest one report or observation, then return the fused state at t_now.

        Emulated-physical vehicles take position/heading from camera
        observations and velocity from their own reports; other kinds take
        both from the report. `incoming` is either a perception.Observation
        (miniature frame) or a (t, pose_full, v) report. Messages not
        strictly newer than the last accepted on their channel raise
        StaleMessage and are counted.
        """
        if isinstance(incoming, Observation):
            pose_full = convert_pose(incoming.pose, PHYSICAL_MINIATURE, FULL_SCALE)
            self.ingest_observation(record, incoming.capture_time, pose_full)
        else:
            t_report, pose_full, v = incoming
            self.ingest_report(record, t_report, pose_full, v)
        record.last_update_time = max(record.last_update_time, t_now)
        if record.has_position:
            return self.fused_state(record, t_now)
        return VehicleState(pose=Pose2D(0.0, 0.0, 0.0), v=record.v, timestamp=t_now)

    def ingest_observation(self, record: EntityRecord, t_cap: float, pose_full: Pose2D) -> None:
        """Accept a roadside fix (already full-scale) for the position channel."""
        if t_cap <= record.pose_time:
            record.stale_count += 1
            self.stale_count += 1
            raise StaleMessage(f"{record.id}: observation at {t_cap}")
        record.pose = pose_full
        record.pose_time = t_cap
        record.last_update_time = max(record.last_update_time, t_cap)
        self._refresh_progress(record)

    def ingest_report(self, record: EntityRecord, t: float, pose_full: Pose2D, v: float) -> None:
        """Accept an on-board state report.

        Physical vehicles contribute velocity only (the roadside cameras own
        their position); the rest contribute pose and velocity.
        """
        if record.kind == KIND_PHYSICAL:
            if t <= record.v_time:
                record.stale_count += 1
                self.stale_count += 1
                raise StaleMessage(f"{record.id}: report at {t}")
            record.v = v
            record.v_time = t
        else:
            if t <= record.pose_time:
                record.stale_count += 1
                self.stale_count += 1
                raise StaleMessage(f"{record.id}: report at {t}")
            record.pose = pose_full
            record.pose_time = t
            record.v = v
            record.v_time = t
            self._refresh_progress(record)
        record.last_update_time = max(record.last_update_time, t)

    def fused_state(self, record: EntityRecord, t_now: float) -> VehicleState:
        """Dead-reckon the last accepted pose forward to t_now."""
        if record.pose is None:
            raise MissingState(record.id)
        dt = max(0.0, t_now - record.pose_time)
        pose = record.pose
        if dt > 0.0 and record.v != 0.0:
            pose = Pose2D(
                pose.x + record.v * dt * math.cos(pose.theta),
                pose.y + record.v * dt * math.sin(pose.theta),
                pose.theta,
            )
        return VehicleState(pose=pose, v=record.v, timestamp=t_now)

    def _refresh_progress(self, record: EntityRecord) -> None:
        s, _, _ = self.track.project(record.pose)
        lap = self.track.lap_length
        if record.s_wrapped is not None and record.progress is not None:
            delta = (s - record.s_wrapped + lap / 2.0) % lap - lap / 2.0
            record.progress += delta
        record.s_wrapped = s

    def _init_platoon_progress(self) -> None:
        head = self.registry[self.platoon_order[0]]
        if head.progress is None:
            head.progress = head.s_wrapped
        for prev_id, cur_id in zip(self.platoon_order, self.platoon_order[1:]):
            prev = self.registry[prev_id]
            cur = self.registry[cur_id]
            if cur.progress is None:
                gap = signed_gap(self.track, cur.s_wrapped, prev.s_wrapped)
                cur.progress = prev.progress - gap

    # -- interaction -------------------------------------------------------

    def add_obstacle(self, pose: Pose2D, radius: float) -> str:
        s, lateral, _ = self.track.project(pose)
        if abs(lateral) > OBSTACLE_LATERAL_LIMIT:
            raise ValueError(f"obstacle {lateral:.1f} m off track")
        self._obstacle_seq += 1
        obstacle = _Obstacle(f"obs-{self._obstacle_seq}", pose, radius, s)
        self.obstacles.append(obstacle)
        return obstacle.id

    def apply_perturb(self, vehicle_id: str, dv: float) -> None:
        if vehicle_id not in self.registry:
            raise UnknownVehicle(vehicle_id)
        self.pending_perturbs[vehicle_id] = self.pending_perturbs.get(vehicle_id, 0.0) + dv

    def facility_set(self, facility_id: str, state: str) -> None:
        self.facilities[facility_id] = state

    def set_human_input(self, vehicle_id: str, v_cmd: float, phi_cmd: float) -> None:
        record = self.vehicle(vehicle_id)
        params = record.params_full
        v_cmd = max(0.0, min(v_cmd, params.v_max if params else v_cmd))
        if params:
            phi_cmd = min(max(phi_cmd, -params.steer_max), params.steer_max)
        self.human_inputs[vehicle_id] = ControlCommand(v_cmd, phi_cmd)

    # -- control loop ------------------------------------------------------

    def _update_trigger(self, t_now: float, head: EntityRecord, profile: HeadProfile) -> None:
        if not self._armed:
            if t_now >= self.warmup_s:
                self._armed = True
                lap = self.track.lap_length
                ahead = (profile.trigger_arclength - head.progress) % lap
                self._head_cross_target = head.progress + ahead
            else:
                return
        if self.trigger_time is None and head.progress >= self._head_cross_target:
            self.trigger_time = t_now
            self.events.append({"event": "trigger", "t": t_now, "id": head.id})

    def control_step(self, t_now: float) -> list[tuple[str, ControlCommand]]:
        """Compute one command per platoon vehicle from the fused mixed space."""
        for vid in self.platoon_order:
            if vid not in self.registry or not self.registry[vid].has_position:
                raise MissingState(vid)
        self._init_platoon_progress()

        fused: dict[str, VehicleState] = {}
        arc: dict[str, float] = {}
        for vid in self.platoon_order:
            record = self.registry[vid]
            state = self.fused_state(record, t_now)
            fused[vid] = state
            s, _, _ = self.track.project(state.pose)
            # Progress advanced to the fused (extrapolated) position.
            lap = self.track.lap_length
            delta = (s - record.s_wrapped + lap / 2.0) % lap - lap / 2.0
            arc[vid] = record.progress + delta

        commands: list[tuple[str, ControlCommand]] = []
        for i, vid in enumerate(self.platoon_order):
            record = self.registry[vid]
            state = fused[vid]
            controller = record.controller
            if isinstance(controller, HeadProfile):
                self._update_trigger(t_now, record, controller)
                since = None if self.trigger_time is None else t_now - self.trigger_time
                v_cmd = head_reference(controller, record.s_wrapped, since)
                phi_cmd = lateral_preview(state, self.track, record.params_full)
            elif isinstance(controller, CaccGains):
                prev_id = self.platoon_order[i - 1]
                p_i = arc[vid]
                p_prev = arc[prev_id]
                v_prev = fused[prev_id].v
                v_head = self.head_reference_speed
                if v_head is None:
                    v_head = fused[self.platoon_order[0]].v
                # A virtual obstacle closer than the predecessor becomes a
                # stopped leader: gap term plus full velocity damping.
                obstacle_gap = self._nearest_forward_obstacle(record.s_wrapped)
                if obstacle_gap is not None and obstacle_gap < p_prev - p_i:
                    p_prev = p_i + obstacle_gap
                    v_prev = 0.0
                    v_head = 0.0
                a = cacc_accel(controller, p_i, p_prev, state.v, v_prev, v_head)
                v_cmd = accel_to_vcmd(state.v, a, self.control_dt)
                phi_cmd = lateral_preview(state, self.track, record.params_full)
            elif controller == HUMAN:
                latest = self.human_inputs.get(vid)
                if latest is None:
                    v_cmd = 0.0
                    phi_cmd = lateral_preview(state, self.track, record.params_full)
                else:
                    v_cmd, phi_cmd = latest.v_cmd, latest.phi_cmd
            else:
                continue
            dv = self.pending_perturbs.pop(vid, None)
            if dv is not None:
                v_cmd = v_cmd + dv
                self.events.append({"event": "perturb_applied", "t": t_now, "id": vid, "dv": dv})
            commands.append((vid, ControlCommand(max(0.0, v_cmd), phi_cmd)))
        return commands

    def _nearest_forward_obstacle(self, s_vehicle: float) -> float | None:
        if not self.obstacles:
            return None
        return min(signed_gap(self.track, s_vehicle, o.s) for o in self.obstacles)

    # -- snapshots ----------------------------------------------------------

    def snapshot(self, t_now: float) -> MixedSpaceSnapshot:
        vehicles: list[tuple[str, VehicleState]] = []
        for vid in self.platoon_order:
            record = self.registry.get(vid)
            if record is not None and record.has_position:
                vehicles.append((vid, self.fused_state(record, t_now)))
        return MixedSpaceSnapshot(
            t=t_now,
            vehicles=tuple(vehicles),
            obstacles=tuple((o.id, o.pose, o.radius) for o in self.obstacles),
            facilities=tuple(sorted(self.facilities.items())),
        )
