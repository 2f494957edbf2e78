"""Lockstep closed-loop simulation.

One loop owns the virtual clock, the delay bus, every vehicle agent, the
roadside camera emulator, the scripted human driver and the coordinator, so
a run is bit-reproducible for a given seed. Messages travel through the same
bus and message types the realtime service puts on sockets; forcing all link
delays to zero makes the loop equivalent to a direct-call simulation.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .control import lateral_preview
from .dynamics import VehicleParams, VehicleState, step_vehicle
from .geometry import FULL_SCALE, Frame, Pose2D, Track, convert_pose, signed_gap
from .mixedspace import HUMAN, Coordinator, StaleMessage, params_to_full
from .netsim import (
    CAMERA_UP,
    HMI_DOWN,
    HMI_UP,
    UNITY_DOWN,
    UNITY_UP,
    VEHICLE_DOWN,
    VEHICLE_UP,
    Command,
    DelayBus,
    Envelope,
    FacilitySet,
    Obs,
    ObstacleAdd,
    Snapshot,
    StateUpdate,
)
from .perception import Observation, observe
from .scenario import HdvScript, Scenario, VehicleSpec
from .telemetry import TelemetryRecord

CLOUD = "cloud"
CAMERA = "camera"


class VehicleAgent:
    """One simulated vehicle process, integrating in its native frame."""

    def __init__(self, spec: VehicleSpec, track: Track, rng: np.random.Generator | None):
        self.id = spec.id
        self.spec = spec
        self.frame: Frame = spec.frame
        self.params: VehicleParams = spec.params
        self.rng = rng
        x, y = track.point_at(spec.initial_s)
        heading = track.heading_at(spec.initial_s)
        pose_full = Pose2D(x, y, heading)
        scale = 1.0 / self.frame.scale_to_full
        self.state = VehicleState(
            pose=Pose2D(pose_full.x * scale, pose_full.y * scale, heading)
        )

    def step(self, dt: float) -> None:
        self.state = step_vehicle(self.state, self.params, dt, self.rng)

    def set_command(self, v_cmd_full: float, phi_cmd: float) -> None:
        v_native = v_cmd_full / self.frame.scale_to_full
        self.state = self.state.with_command(v_native, phi_cmd, self.params)

    def state_full(self) -> VehicleState:
        """Ground-truth state expressed in full-scale units."""
        k = self.frame.scale_to_full
        return replace(
            self.state,
            pose=convert_pose(self.state.pose, self.frame, FULL_SCALE),
            v=self.state.v * k,
            v_cmd=self.state.v_cmd * k,
        )

    def report(self, t: float) -> StateUpdate:
        full = self.state_full()
        return StateUpdate(
            id=self.id, t=t, x=full.pose.x, y=full.pose.y, theta=full.pose.theta, v=full.v
        )

    @property
    def up_link(self) -> str:
        return VEHICLE_UP if self.spec.kind == "physical" else UNITY_UP

    @property
    def down_link(self) -> str:
        return VEHICLE_DOWN if self.spec.kind == "physical" else UNITY_DOWN


class ScriptedHumanDriver:
    """Console stand-in for CI: a sluggish follower that amplifies the wave.

    Consumes the snapshot stream like a real console and answers with command
    messages for its vehicle: weak car-following toward the predecessor, plus
    a sinusoid (1.5x the head amplitude by default) and Gaussian jitter once
    it sees the head vehicle leave its settled base speed.
    """

    def __init__(
        self,
        hdv_id: str,
        predecessor_id: str,
        head_id: str,
        script: HdvScript,
        track: Track,
        params_full: VehicleParams,
        rng: np.random.Generator,
    ):
        self.hdv_id = hdv_id
        self.predecessor_id = predecessor_id
        self.head_id = head_id
        self.script = script
        self.track = track
        self.params_full = params_full
        self.rng = rng
        self._armed = False
        self._osc_start: float | None = None
        self._last_t: float | None = None
        # The driver's intended cruise speed, integrated by the follow law.
        # The sinusoid and jitter ride on top of it; feeding them back through
        # the vehicle's own velocity would compound the oscillation.
        self._v_follow: float | None = None

    def on_snapshot(self, t: float, snap: Snapshot) -> Command | None:
        states = {s.id: s for s in snap.vehicles}
        own = states.get(self.hdv_id)
        pred = states.get(self.predecessor_id)
        head = states.get(self.head_id)
        if own is None or pred is None or head is None:
            return None
        dt = 0.05 if self._last_t is None else max(1e-3, t - self._last_t)
        self._last_t = t
        if self._v_follow is None:
            self._v_follow = own.v

        sc = self.script
        if not self._armed and abs(head.v - sc.base_speed) < 0.25 * sc.trigger_v_dev:
            self._armed = True
        if self._armed and self._osc_start is None and abs(head.v - sc.base_speed) >= sc.trigger_v_dev:
            self._osc_start = t

        own_pose = Pose2D(own.x, own.y, own.theta)
        s_own, _, _ = self.track.project(own_pose)
        s_pred, _, _ = self.track.project(Pose2D(pred.x, pred.y, pred.theta))
        gap = signed_gap(self.track, s_own, s_pred)
        accel = sc.follow_k_p * (gap - sc.d_des) + sc.follow_k_v * (pred.v - self._v_follow)
        self._v_follow = max(0.0, self._v_follow + accel * dt)

        osc = 0.0
        if self._osc_start is not None:
            phase = t - self._osc_start
            if phase < sc.osc_cycles * sc.osc_period:
                osc = sc.osc_amplitude * math.sin(2.0 * math.pi * phase / sc.osc_period)
        jitter = float(self.rng.normal(0.0, sc.jitter_std)) if sc.jitter_std > 0 else 0.0

        v_cmd = max(0.0, self._v_follow + osc + jitter)
        own_state = VehicleState(pose=own_pose, v=own.v)
        phi_cmd = lateral_preview(own_state, self.track, self.params_full)
        return Command(id=self.hdv_id, t=t, v_cmd=v_cmd, phi_cmd=phi_cmd)


class LockstepEngine:
    """Deterministic single-loop run of a scenario."""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.track = scenario.track
        root = np.random.SeedSequence(scenario.seed)
        # Fixed spawning order keeps streams stable: bus, driver, then one
        # noise and one camera stream per vehicle in scenario order.
        children = root.spawn(2 + 2 * len(scenario.vehicles))
        self.bus_rng = np.random.default_rng(children[0])
        self.driver_rng = np.random.default_rng(children[1])
        noise_streams = children[2 : 2 + len(scenario.vehicles)]
        camera_streams = children[2 + len(scenario.vehicles) :]

        self.bus = DelayBus(links=dict(scenario.links))
        self.agents: dict[str, VehicleAgent] = {}
        self.camera_rngs: dict[str, np.random.Generator] = {}
        for spec, noise_seed, cam_seed in zip(scenario.vehicles, noise_streams, camera_streams):
            rng = np.random.default_rng(noise_seed) if spec.kind == "physical" else None
            self.agents[spec.id] = VehicleAgent(spec, self.track, rng)
            if spec.kind == "physical":
                self.camera_rngs[spec.id] = np.random.default_rng(cam_seed)

        self.coordinator = Coordinator(
            self.track,
            platoon_order=[v.id for v in scenario.vehicles],
            control_dt=scenario.control_dt,
            warmup_s=scenario.warmup_s,
        )
        for spec in scenario.vehicles:
            self.coordinator.register(
                spec.id,
                spec.entity_kind,
                frame=spec.frame,
                params=spec.params,
                controller=spec.controller,
            )

        self.driver: ScriptedHumanDriver | None = None
        self.driver_client_id: str | None = None
        for i, spec in enumerate(scenario.vehicles):
            if spec.controller == HUMAN and spec.script is not None:
                self.driver = ScriptedHumanDriver(
                    hdv_id=spec.id,
                    predecessor_id=scenario.vehicles[i - 1].id,
                    head_id=scenario.vehicles[0].id,
                    script=spec.script,
                    track=self.track,
                    params_full=params_to_full(spec.params, spec.frame),
                    rng=self.driver_rng,
                )
                self.driver_client_id = f"driver:{spec.id}"

        self._pending_obs: list[Observation] = []
        self.record = TelemetryRecord(
            header={
                "name": scenario.name,
                "seed": scenario.seed,
                "mode": scenario.mode,
                "scenario_hash": scenario.hash,
                "scenario": scenario.raw,
            }
        )
        self._events_seen = 0

    # -- message plumbing ---------------------------------------------------

    def _dispatch(self, env: Envelope, t: float) -> None:
        msg = env.payload
        if env.recipient_id == CLOUD:
            if isinstance(msg, StateUpdate):
                record = self.coordinator.registry.get(msg.id)
                if record is None:
                    return
                try:
                    self.coordinator.ingest_report(
                        record, msg.t, Pose2D(msg.x, msg.y, msg.theta), msg.v
                    )
                except StaleMessage:
                    pass
            elif isinstance(msg, Obs):
                record = self.coordinator.registry.get(msg.id)
                if record is None:
                    return
                try:
                    self.coordinator.ingest_observation(
                        record, msg.t_cap, Pose2D(msg.x, msg.y, msg.theta)
                    )
                except StaleMessage:
                    pass
            elif isinstance(msg, Command):
                record = self.coordinator.registry.get(msg.id)
                if record is not None and record.controller == HUMAN:
                    self.coordinator.set_human_input(msg.id, msg.v_cmd, msg.phi_cmd)
        elif env.recipient_id in self.agents:
            if isinstance(msg, Command):
                self.agents[env.recipient_id].set_command(msg.v_cmd, msg.phi_cmd)
        elif env.recipient_id == self.driver_client_id and self.driver is not None:
            if isinstance(msg, Snapshot):
                reply = self.driver.on_snapshot(t, msg)
                if reply is not None:
                    self.bus.send(
                        HMI_UP, reply, t, self.bus_rng,
                        sender_id=self.driver_client_id, recipient_id=CLOUD,
                    )

    def _deliver(self, t: float) -> None:
        for env in self.bus.deliver_due(t):
            self._dispatch(env, t)

    # -- camera -------------------------------------------------------------

    def _capture(self, t: float) -> None:
        model = self.sc.localization
        for vid, rng in self.camera_rngs.items():
            agent = self.agents[vid]
            obs = observe(vid, agent.state, model, t, rng, state_frame=agent.frame)
            self._pending_obs.append(obs)

    def _flush_observations(self, t: float) -> None:
        due = [o for o in self._pending_obs if o.available_time <= t]
        if not due:
            return
        self._pending_obs = [o for o in self._pending_obs if o.available_time > t]
        for obs in due:
            pose_full = convert_pose(obs.pose, self.agents[obs.vehicle_id].frame, FULL_SCALE)
            wire = Obs(
                id=obs.vehicle_id,
                t_cap=obs.capture_time,
                x=pose_full.x,
                y=pose_full.y,
                theta=pose_full.theta,
            )
            self.bus.send(CAMERA_UP, wire, t, self.bus_rng, sender_id=CAMERA, recipient_id=CLOUD)

    # -- telemetry ------------------------------------------------------------

    def _record_tick(self, t: float) -> None:
        rows = []
        order = [v.id for v in self.sc.vehicles]
        fulls = {vid: self.agents[vid].state_full() for vid in order}
        arcs = {vid: self.track.project(full.pose)[0] for vid, full in fulls.items()}
        for i, vid in enumerate(order):
            full = fulls[vid]
            gap = None
            if i > 0:
                gap = signed_gap(self.track, arcs[vid], arcs[order[i - 1]])
            rows.append(
                {
                    "t": t,
                    "id": vid,
                    "s": arcs[vid],
                    "x": full.pose.x,
                    "y": full.pose.y,
                    "theta": full.pose.theta,
                    "v": full.v,
                    "v_cmd": full.v_cmd,
                    "phi_cmd": full.phi_cmd,
                    "gap": gap,
                }
            )
        self.record.add_tick(rows)
        new_events = self.coordinator.events[self._events_seen :]
        for ev in new_events:
            self.record.add_event(ev)
        self._events_seen = len(self.coordinator.events)

    # -- main loop ------------------------------------------------------------

    @property
    def n_steps(self) -> int:
        return round(self.sc.duration_s / self.sc.physics_dt)

    def step_once(self, k: int) -> None:
        """Advance the whole testbed by one physics step (step index k >= 1)."""
        sc = self.sc
        dt = sc.physics_dt
        report_every = round(1.0 / (sc.report_rate_hz * dt))
        control_every = round(1.0 / (sc.control_rate_hz * dt))
        frame_every = round(1.0 / (sc.localization.frame_rate_hz * dt))

        t = k * dt
        for agent in self.agents.values():
            agent.step(dt)
        if k % report_every == 0:
            for agent in self.agents.values():
                self.bus.send(
                    agent.up_link, agent.report(t), t, self.bus_rng,
                    sender_id=agent.id, recipient_id=CLOUD,
                )
        if k % frame_every == 0:
            self._capture(t)
        self._flush_observations(t)
        self._deliver(t)
        if k % control_every == 0 and self.coordinator.platoon_ready():
            commands = self.coordinator.control_step(t)
            for vid, cmd in commands:
                self.bus.send(
                    self.agents[vid].down_link,
                    Command(id=vid, t=t, v_cmd=cmd.v_cmd, phi_cmd=cmd.phi_cmd),
                    t,
                    self.bus_rng,
                    sender_id=CLOUD,
                    recipient_id=vid,
                )
            if self.driver_client_id is not None:
                snap = self._wire_snapshot(t)
                self.bus.send(
                    HMI_DOWN, snap, t, self.bus_rng,
                    sender_id=CLOUD, recipient_id=self.driver_client_id,
                )
            self._record_tick(t)
            self._deliver(t)

    def run(self) -> TelemetryRecord:
        for k in range(1, self.n_steps + 1):
            self.step_once(k)
        return self.record

    def _wire_snapshot(self, t: float) -> Snapshot:
        snap = self.coordinator.snapshot(t)
        vehicles = tuple(
            StateUpdate(id=vid, t=t, x=st.pose.x, y=st.pose.y, theta=st.pose.theta, v=st.v)
            for vid, st in snap.vehicles
        )
        obstacles = tuple(ObstacleAdd(p.x, p.y, r) for _, p, r in snap.obstacles)
        facilities = tuple(FacilitySet(fid, state) for fid, state in snap.facilities)
        return Snapshot(t=t, vehicles=vehicles, obstacles=obstacles, facilities=facilities)


def run_scenario(scenario: Scenario) -> TelemetryRecord:
    """Run a scenario to completion in lockstep mode."""
    return LockstepEngine(scenario).run()
