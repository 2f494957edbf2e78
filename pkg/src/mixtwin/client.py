"""Socket clients: the vehicle agent process and a thin REST helper.

An agent fetches the scenario document from the coordinator service, finds
its own vehicle entry, then drives its dynamics off the coordinator's tick
stream: integrate to each tick time, report state, execute received
commands. All physics stays local to the agent; only wire messages cross the
process boundary.
"""

from __future__ import annotations

import asyncio
import urllib.parse

import httpx
import numpy as np
import websockets

from .engine import VehicleAgent
from .netsim import Command, MalformedFrame, Register, StateUpdate, Tick, TickAck, decode, encode
from .scenario import Scenario, parse_scenario


def ws_url(connect: str) -> str:
    parsed = urllib.parse.urlparse(connect)
    scheme = "wss" if parsed.scheme == "https" else "ws"
    return f"{scheme}://{parsed.netloc}/ws"


def fetch_scenario(connect: str, timeout: float = 10.0) -> Scenario:
    response = httpx.get(f"{connect.rstrip('/')}/scenario", timeout=timeout)
    response.raise_for_status()
    return parse_scenario(response.json())


WIRE_KIND = {"physical": "physical", "virtual": "virtual", "hdv": "hdv"}


async def run_agent(
    connect: str,
    vehicle_id: str,
    kind: str | None = None,
    scenario: Scenario | None = None,
) -> int:
    """Run one vehicle agent until the coordinator closes the session.

    Returns the number of ticks executed.
    """
    if scenario is None:
        scenario = await asyncio.to_thread(fetch_scenario, connect)
    spec = next((v for v in scenario.vehicles if v.id == vehicle_id), None)
    if spec is None:
        raise KeyError(f"vehicle {vehicle_id!r} not in scenario {scenario.name!r}")
    if kind and kind.replace("-script", "") not in (spec.kind, "hdv"):
        raise ValueError(f"scenario says {vehicle_id} is {spec.kind!r}, not {kind!r}")

    index = [v.id for v in scenario.vehicles].index(vehicle_id)
    rng = (
        np.random.default_rng(np.random.SeedSequence((scenario.seed, index)))
        if spec.kind == "physical"
        else None
    )
    agent = VehicleAgent(spec, scenario.track, rng)
    frame = WIRE_KIND[spec.kind]
    wire_frame = "mini" if spec.kind == "physical" else "full"

    ticks = 0
    t_local = 0.0
    dt = scenario.physics_dt
    async with websockets.connect(ws_url(connect), max_queue=1024) as socket:
        await socket.send(encode(Register(vehicle_id, frame, wire_frame)).decode())
        try:
            async for raw in socket:
                try:
                    msg = decode(raw)
                except MalformedFrame:
                    continue
                if isinstance(msg, Tick):
                    steps = max(0, round((msg.t - t_local) / dt))
                    for _ in range(steps):
                        agent.step(dt)
                    t_local = msg.t
                    report: StateUpdate = agent.report(msg.t)
                    await socket.send(encode(report).decode())
                    await socket.send(encode(TickAck(step=msg.step, id=vehicle_id)).decode())
                    ticks += 1
                elif isinstance(msg, Command) and msg.id == vehicle_id:
                    agent.set_command(msg.v_cmd, msg.phi_cmd)
        except websockets.exceptions.ConnectionClosed:
            pass  # coordinator ended the run
    return ticks
