"""Realtime coordinator: the bus front-end for live socket clients.

One asyncio loop owns the coordinator and the virtual clock (wall time over a
configurable scale factor). Connection readers never touch the registry: they
stamp incoming messages with a sampled link delay and push them onto one
ordered ingress queue the tick loop drains. Outbound traffic goes through
per-connection sender queues, so per-sender FIFO order survives the injected
delays exactly like on the lockstep bus.
"""

from __future__ import annotations

import asyncio
import heapq
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..control import ControlCommand
from ..engine import ScriptedHumanDriver
from ..geometry import FULL_SCALE, Pose2D, convert_pose, signed_gap
from ..mixedspace import HUMAN, Coordinator, StaleMessage, params_to_full
from ..metrics import compute_metrics
from ..netsim import (
    CAMERA_UP,
    HMI_DOWN,
    HMI_UP,
    UNITY_DOWN,
    UNITY_UP,
    VEHICLE_DOWN,
    VEHICLE_UP,
    Command,
    FacilitySet,
    Message,
    Obs,
    ObstacleAdd,
    Perturb,
    Register,
    Snapshot,
    StateUpdate,
    Tick,
    TickAck,
    encode,
)
from ..perception import sample_processing_delay
from ..scenario import Scenario
from ..telemetry import TelemetryRecord, WindowNotFound


@dataclass
class _Client:
    """One connected socket peer."""

    id: str
    kind: str  # virtual | physical | hdv | console
    send_queue: asyncio.Queue = field(default_factory=asyncio.Queue)


class RealtimeHub:
    """Shared state behind the service endpoints and the tick loop."""

    def __init__(self, scenario: Scenario, time_scale: float = 1.0, out_dir: str | Path = "."):
        self.sc = scenario
        self.time_scale = time_scale
        self.out_dir = Path(out_dir)
        self.phase = "waiting_agents"
        self.detail: str | None = None
        self.t = 0.0
        self.step = 0
        root = np.random.SeedSequence(scenario.seed)
        children = root.spawn(3)
        self.link_rng = np.random.default_rng(children[0])
        self.camera_rng = np.random.default_rng(children[1])
        self.driver_rng = np.random.default_rng(children[2])
        self.coordinator = Coordinator(
            scenario.track,
            platoon_order=[v.id for v in scenario.vehicles],
            control_dt=scenario.control_dt,
            warmup_s=scenario.warmup_s,
        )
        self.specs = {v.id: v for v in scenario.vehicles}
        for spec in scenario.vehicles:
            self.coordinator.register(
                spec.id, spec.entity_kind, spec.frame, spec.params, spec.controller
            )
        self.driver: ScriptedHumanDriver | None = None
        for i, spec in enumerate(scenario.vehicles):
            if spec.controller == HUMAN and spec.script is not None:
                self.driver = ScriptedHumanDriver(
                    hdv_id=spec.id,
                    predecessor_id=scenario.vehicles[i - 1].id,
                    head_id=scenario.vehicles[0].id,
                    script=spec.script,
                    track=scenario.track,
                    params_full=params_to_full(spec.params, spec.frame),
                    rng=self.driver_rng,
                )
        self.vehicle_clients: dict[str, _Client] = {}
        self.consoles: list[_Client] = []
        self._console_seq = 0
        # (deliver_sim_time, tiebreak, message) ingress heap.
        self._ingress: list[tuple[float, int, Message]] = []
        self._ingress_seq = 0
        self._ingress_floor: dict[str, float] = {}
        self._origin_wall: float | None = None
        # Latest ground-truth report per physical vehicle, for the camera.
        self._true_physical: dict[str, tuple[float, Pose2D, float]] = {}
        self._last_capture: dict[str, float] = {}
        self._pending_obs: list[tuple[float, Obs]] = []
        self.record = TelemetryRecord(
            header={
                "name": scenario.name,
                "seed": scenario.seed,
                "mode": "realtime",
                "scenario_hash": scenario.hash,
                "scenario": scenario.raw,
            }
        )
        self._events_seen = 0
        self.latest_snapshot: Snapshot | None = None
        self.metrics_report = None
        self.telemetry_path: Path | None = None
        self._last_commands: dict[str, ControlCommand] = {}
        self._done = asyncio.Event()

    # -- client management ---------------------------------------------------

    def register_client(self, reg: Register) -> _Client:
        if reg.kind == "console":
            self._console_seq += 1
            client = _Client(id=reg.id or f"console-{self._console_seq}", kind="console")
            self.consoles.append(client)
            return client
        if reg.id not in self.specs:
            raise KeyError(f"unknown vehicle id {reg.id!r}")
        client = _Client(id=reg.id, kind=reg.kind)
        self.vehicle_clients[reg.id] = client
        return client

    def drop_client(self, client: _Client) -> None:
        if client.kind == "console":
            if client in self.consoles:
                self.consoles.remove(client)
        else:
            self.vehicle_clients.pop(client.id, None)

    def agents_ready(self) -> bool:
        return all(vid in self.vehicle_clients for vid in self.specs)

    # -- ingress -------------------------------------------------------------

    def _up_link(self, kind: str) -> str:
        if kind == "physical":
            return VEHICLE_UP
        if kind == "console":
            return HMI_UP
        return UNITY_UP

    def sim_now(self) -> float:
        """Continuous simulation clock, for stamping asynchronous arrivals."""
        if self._origin_wall is None:
            return 0.0
        return (time.monotonic() - self._origin_wall) * self.time_scale

    def ingress(self, msg: Message, sender_kind: str, sender_id: str = "?") -> None:
        """Stamp an inbound message with its up-link delay and queue it.

        The modeled delay rides on the message's own send time where it
        carries one: stamping off the wall clock would multiply real socket
        latency by the time-scale factor. Delivery times are floored per
        sender so a small delay sample never reorders one peer's stream
        (ordered-transport semantics, matching the lockstep bus).
        """
        if isinstance(msg, (StateUpdate, Command)):
            base = msg.t
        elif isinstance(msg, TickAck):
            base = msg.step * self.sc.control_dt
        else:
            base = self.sim_now()
        delay = self.sc.links[self._up_link(sender_kind)].sample_delay(self.link_rng)
        deliver = base + delay
        floor = self._ingress_floor.get(sender_id)
        if floor is not None and deliver < floor:
            deliver = floor
        self._ingress_floor[sender_id] = deliver
        heapq.heappush(self._ingress, (deliver, self._ingress_seq, msg))
        self._ingress_seq += 1

    def _drain_ingress(self) -> None:
        while self._ingress and self._ingress[0][0] <= self.t:
            _, _, msg = heapq.heappop(self._ingress)
            self._apply(msg)

    def _apply(self, msg: Message) -> None:
        co = self.coordinator
        if isinstance(msg, StateUpdate):
            record = co.registry.get(msg.id)
            if record is None:
                return
            try:
                co.ingest_report(record, msg.t, Pose2D(msg.x, msg.y, msg.theta), msg.v)
            except StaleMessage:
                pass
        elif isinstance(msg, Obs):
            record = co.registry.get(msg.id)
            if record is None:
                return
            try:
                co.ingest_observation(record, msg.t_cap, Pose2D(msg.x, msg.y, msg.theta))
            except StaleMessage:
                pass
        elif isinstance(msg, Command):
            record = co.registry.get(msg.id)
            if record is not None and record.controller == HUMAN:
                co.set_human_input(msg.id, msg.v_cmd, msg.phi_cmd)
        elif isinstance(msg, ObstacleAdd):
            try:
                oid = co.add_obstacle(Pose2D(msg.x, msg.y, 0.0), msg.r)
                co.events.append({"event": "obstacle", "t": self.t, "id": oid,
                                  "x": msg.x, "y": msg.y, "r": msg.r})
            except ValueError:
                pass
        elif isinstance(msg, Perturb):
            try:
                co.apply_perturb(msg.id, msg.dv)
                co.events.append({"event": "perturb", "t": self.t, "id": msg.id, "dv": msg.dv})
            except KeyError:
                pass
        elif isinstance(msg, FacilitySet):
            co.facility_set(msg.id, msg.state)
            co.events.append({"event": "facility", "t": self.t, "id": msg.id, "state": msg.state})
        elif isinstance(msg, TickAck):
            pass

    def handle_wire_message(self, msg: Message, client: _Client) -> None:
        """Called by connection readers; no registry access."""
        if isinstance(msg, StateUpdate) and client.kind == "physical":
            # The camera emulator needs ground truth, which in the desk setup
            # is the emulated vehicle's own integration.
            self._true_physical[msg.id] = (msg.t, Pose2D(msg.x, msg.y, msg.theta), msg.v)
        self.ingress(msg, client.kind, sender_id=client.id)

    # -- outbound ------------------------------------------------------------

    def _down_link(self, kind: str) -> str:
        if kind == "physical":
            return VEHICLE_DOWN
        return UNITY_DOWN

    def _send(self, client: _Client, msg: Message, link_id: str | None = None) -> None:
        delay = 0.0
        if link_id is not None:
            delay = self.sc.links[link_id].sample_delay(self.link_rng)
        wall_due = time.monotonic() + delay / self.time_scale
        client.send_queue.put_nowait((wall_due, encode(msg)))

    # -- camera ----------------------------------------------------------------

    def _camera_tick(self) -> None:
        model = self.sc.localization
        for vid, (t_true, pose_full, v) in self._true_physical.items():
            # One fix per fresh report; capture time is the report's time.
            if self._last_capture.get(vid) == t_true:
                continue
            self._last_capture[vid] = t_true
            pose_mini = convert_pose(pose_full, FULL_SCALE, self.specs[vid].frame)
            ex = model.noise_mean_x_mm
            ey = model.noise_mean_y_mm
            if model.noise_std_x_mm > 0:
                ex += float(self.camera_rng.normal(0.0, model.noise_std_x_mm))
            if model.noise_std_y_mm > 0:
                ey += float(self.camera_rng.normal(0.0, model.noise_std_y_mm))
            etheta = (
                float(self.camera_rng.normal(0.0, model.heading_noise_std))
                if model.heading_noise_std > 0
                else 0.0
            )
            noisy_mini = Pose2D(pose_mini.x + ex * 1e-3, pose_mini.y + ey * 1e-3, pose_mini.theta + etheta)
            noisy_full = convert_pose(noisy_mini, self.specs[vid].frame, FULL_SCALE)
            available = self.t + sample_processing_delay(model, self.camera_rng)
            wire = Obs(id=vid, t_cap=t_true, x=noisy_full.x, y=noisy_full.y, theta=noisy_full.theta)
            self._pending_obs.append((available, wire))
        due = [o for o in self._pending_obs if o[0] <= self.t]
        self._pending_obs = [o for o in self._pending_obs if o[0] > self.t]
        for _, wire in due:
            delay = self.sc.links[CAMERA_UP].sample_delay(self.link_rng)
            deliver = self.t + delay
            floor = self._ingress_floor.get("camera")
            if floor is not None and deliver < floor:
                deliver = floor
            self._ingress_floor["camera"] = deliver
            heapq.heappush(self._ingress, (deliver, self._ingress_seq, wire))
            self._ingress_seq += 1

    # -- telemetry -------------------------------------------------------------

    def _record_tick(self) -> None:
        co = self.coordinator
        order = co.platoon_order
        fused = {}
        arcs = {}
        for vid in order:
            record = co.registry[vid]
            state = co.fused_state(record, self.t)
            fused[vid] = state
            arcs[vid] = co.track.project(state.pose)[0]
        rows = []
        for i, vid in enumerate(order):
            state = fused[vid]
            gap = None if i == 0 else signed_gap(co.track, arcs[vid], arcs[order[i - 1]])
            cmd = self._last_commands.get(vid)
            rows.append(
                {
                    "t": self.t,
                    "id": vid,
                    "s": arcs[vid],
                    "x": state.pose.x,
                    "y": state.pose.y,
                    "theta": state.pose.theta,
                    "v": state.v,
                    "v_cmd": cmd.v_cmd if cmd else 0.0,
                    "phi_cmd": cmd.phi_cmd if cmd else 0.0,
                    "gap": gap,
                }
            )
        self.record.add_tick(rows)
        for ev in co.events[self._events_seen :]:
            self.record.add_event(ev)
        self._events_seen = len(co.events)

    # -- main loop ---------------------------------------------------------------

    async def run(self) -> None:
        try:
            await self._run_inner()
        except Exception as e:  # surfaced through /status
            self.phase = "error"
            self.detail = f"{type(e).__name__}: {e}"
            raise
        finally:
            self._done.set()

    def _reports_current(self, t_expected: float) -> bool:
        for vid in self.specs:
            record = self.coordinator.registry[vid]
            newest = max(record.pose_time, record.v_time)
            if newest < t_expected - 1e-9:
                return False
        return True

    async def _tick_barrier(self, t_expected: float) -> None:
        """Wait briefly until every agent's report for the last tick arrived.

        Keeps the measurement age at exactly one control period instead of
        racing message arrival against the tick loop; a wall-clock timeout
        preserves liveness when an agent stalls or drops.
        """
        deadline = time.monotonic() + max(0.25, 4.0 * self.sc.control_dt / self.time_scale)
        while time.monotonic() < deadline:
            self._drain_ingress()
            if self._reports_current(t_expected):
                return
            await asyncio.sleep(0.0005)

    async def _run_inner(self) -> None:
        while not self.agents_ready():
            await asyncio.sleep(0.02)
        self.phase = "running"
        control_dt = self.sc.control_dt
        n_ticks = round(self.sc.duration_s / control_dt)
        start_wall = time.monotonic()
        self._origin_wall = start_wall
        for step in range(1, n_ticks + 1):
            target = start_wall + step * control_dt / self.time_scale
            delay = target - time.monotonic()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                await asyncio.sleep(0)
            self.step = step
            self.t = step * control_dt
            if step > 1:
                await self._tick_barrier((step - 1) * control_dt)
            self._drain_ingress()
            self._camera_tick()
            if self.driver is not None and self.latest_snapshot is not None:
                reply = self.driver.on_snapshot(self.latest_snapshot.t, self.latest_snapshot)
                if reply is not None:
                    self.ingress(reply, "console", sender_id="driver")
            if self.coordinator.platoon_ready():
                commands = self.coordinator.control_step(self.t)
                for vid, cmd in commands:
                    self._last_commands[vid] = cmd
                    client = self.vehicle_clients.get(vid)
                    if client is not None:
                        self._send(
                            client,
                            Command(id=vid, t=self.t, v_cmd=cmd.v_cmd, phi_cmd=cmd.phi_cmd),
                            self._down_link(client.kind),
                        )
                self.latest_snapshot = self._wire_snapshot()
                for console in self.consoles:
                    self._send(console, self.latest_snapshot, HMI_DOWN)
                self._record_tick()
            for vid, client in list(self.vehicle_clients.items()):
                self._send(client, Tick(t=self.t, step=step))
        self._finalize()

    def _wire_snapshot(self) -> Snapshot:
        snap = self.coordinator.snapshot(self.t)
        vehicles = tuple(
            StateUpdate(id=vid, t=self.t, x=st.pose.x, y=st.pose.y, theta=st.pose.theta, v=st.v)
            for vid, st in snap.vehicles
        )
        obstacles = tuple(ObstacleAdd(p.x, p.y, r) for _, p, r in snap.obstacles)
        facilities = tuple(FacilitySet(fid, state) for fid, state in snap.facilities)
        return Snapshot(t=self.t, vehicles=vehicles, obstacles=obstacles, facilities=facilities)

    def _finalize(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.telemetry_path = self.out_dir / f"{self.sc.name}_realtime.jsonl"
        self.record.to_jsonl(self.telemetry_path)
        self.record.to_csv(self.telemetry_path.with_suffix(".csv"))
        try:
            self.metrics_report = compute_metrics(self.record)
        except (WindowNotFound, IndexError):
            self.metrics_report = None
        self.phase = "done"
        for client in list(self.vehicle_clients.values()) + list(self.consoles):
            client.send_queue.put_nowait((time.monotonic(), None))

    async def wait_done(self) -> None:
        await self._done.wait()
