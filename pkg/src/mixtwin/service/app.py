"""FastAPI service wrapping the coordinator.

The one stream endpoint every agent and console connects to is the /ws
WebSocket: each text message is one newline-terminated JSON line of the wire
protocol. REST endpoints expose the scenario, track, live status, metrics,
obstacle/perturbation/facility injection, and server-side lockstep runs. If a
built operator console exists on disk it is served under /console.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import os
import time
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .. import __version__
from ..engine import run_scenario
from ..geometry import Pose2D
from ..metrics import compute_metrics
from ..mixedspace import UnknownVehicle
from ..netsim import MalformedFrame, Register, decode, encode
from ..scenario import Scenario, ValidationError, parse_scenario
from ..telemetry import WindowNotFound
from .hub import RealtimeHub
from .schemas import (
    FacilityRequest,
    HealthResponse,
    MetricsResponse,
    ObstacleRequest,
    ObstacleResponse,
    PerturbRequest,
    RunRequest,
    RunResponse,
    StatusResponse,
    TrackResponse,
)


def _console_dist() -> Path | None:
    env = os.environ.get("MCCT_CONSOLE_DIST")
    candidates = [Path(env)] if env else []
    candidates.append(Path(__file__).resolve().parents[3] / "frontend" / "dist")
    for cand in candidates:
        if cand and cand.is_dir():
            return cand
    return None


def create_app(
    scenario: Scenario | None = None,
    time_scale: float = 1.0,
    out_dir: str | Path = ".",
) -> FastAPI:
    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        hub: RealtimeHub | None = app.state.hub
        task = asyncio.create_task(hub.run()) if hub is not None else None
        yield
        if task is not None and not task.done():
            task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await task

    app = FastAPI(title="mixtwin coordinator", version=__version__, lifespan=lifespan)
    app.state.hub = RealtimeHub(scenario, time_scale, out_dir) if scenario else None
    app.state.runs = {}

    def hub_or_404() -> RealtimeHub:
        hub = app.state.hub
        if hub is None:
            raise HTTPException(status_code=404, detail="no live scenario; start with 'serve'")
        return hub

    @app.get("/health", response_model=HealthResponse)
    async def health():
        return HealthResponse(name="mixtwin", version=__version__)

    @app.get("/scenario")
    async def scenario_doc():
        return hub_or_404().sc.raw

    @app.get("/track", response_model=TrackResponse)
    async def track():
        t = hub_or_404().sc.track
        return TrackResponse(
            waypoints=[(float(x), float(y)) for x, y in t.waypoints],
            lap_length=t.lap_length,
            landmark_e_s=t.landmark_e_s,
        )

    @app.get("/status", response_model=StatusResponse)
    async def status():
        hub = hub_or_404()
        return StatusResponse(
            phase=hub.phase,
            t=hub.t,
            step=hub.step,
            duration_s=hub.sc.duration_s,
            expected=list(hub.specs),
            registered=list(hub.vehicle_clients),
            consoles=len(hub.consoles),
            stale_messages=hub.coordinator.stale_count,
            detail=hub.detail,
        )

    @app.get("/snapshot")
    async def snapshot():
        hub = hub_or_404()
        if hub.latest_snapshot is None:
            raise HTTPException(status_code=409, detail="no snapshot yet")
        return JSONResponse(content=_snapshot_json(hub.latest_snapshot))

    @app.get("/metrics", response_model=MetricsResponse)
    async def metrics():
        hub = hub_or_404()
        if hub.metrics_report is None:
            raise HTTPException(status_code=409, detail="run not finished or no trigger seen")
        return MetricsResponse(**hub.metrics_report.to_dict())

    @app.get("/telemetry.jsonl")
    async def telemetry():
        hub = hub_or_404()
        if hub.telemetry_path is None:
            raise HTTPException(status_code=409, detail="run not finished")
        return FileResponse(hub.telemetry_path, media_type="application/jsonl")

    @app.post("/obstacles", response_model=ObstacleResponse)
    async def add_obstacle(req: ObstacleRequest):
        hub = hub_or_404()
        try:
            oid = hub.coordinator.add_obstacle(Pose2D(req.x, req.y, 0.0), req.r)
        except ValueError as e:
            raise HTTPException(status_code=422, detail=str(e)) from None
        hub.coordinator.events.append(
            {"event": "obstacle", "t": hub.t, "id": oid, "x": req.x, "y": req.y, "r": req.r}
        )
        return ObstacleResponse(id=oid)

    @app.post("/perturbations")
    async def perturb(req: PerturbRequest):
        hub = hub_or_404()
        try:
            hub.coordinator.apply_perturb(req.id, req.dv)
        except UnknownVehicle:
            raise HTTPException(status_code=404, detail=f"unknown vehicle {req.id!r}") from None
        hub.coordinator.events.append({"event": "perturb", "t": hub.t, "id": req.id, "dv": req.dv})
        return {"ok": True}

    @app.post("/facilities")
    async def set_facility(req: FacilityRequest):
        hub = hub_or_404()
        hub.coordinator.facility_set(req.id, req.state)
        hub.coordinator.events.append(
            {"event": "facility", "t": hub.t, "id": req.id, "state": req.state}
        )
        return {"ok": True}

    @app.post("/runs", response_model=RunResponse)
    async def run_lockstep(req: RunRequest):
        doc = dict(req.scenario)
        if req.seed is not None:
            doc["seed"] = req.seed
        try:
            sc = parse_scenario(doc)
        except ValidationError as e:
            raise HTTPException(status_code=422, detail=str(e)) from None
        record = await asyncio.to_thread(run_scenario, sc)
        try:
            report = compute_metrics(record)
            metrics_model = MetricsResponse(**report.to_dict())
        except WindowNotFound:
            metrics_model = None
        run_id = uuid.uuid4().hex[:12]
        app.state.runs[run_id] = record
        return RunResponse(
            run_id=run_id,
            name=sc.name,
            seed=sc.seed,
            scenario_hash=sc.hash,
            metrics=metrics_model,
        )

    @app.get("/runs/{run_id}/telemetry.jsonl")
    async def run_telemetry(run_id: str):
        record = app.state.runs.get(run_id)
        if record is None:
            raise HTTPException(status_code=404, detail="unknown run id")
        lines = [json.dumps({"format": "mixtwin-telemetry/1", **record.header},
                            separators=(",", ":"))]
        lines += [json.dumps(line, separators=(",", ":")) for line in record._lines()]
        return PlainTextResponse("\n".join(lines) + "\n", media_type="application/jsonl")

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        hub = app.state.hub
        if hub is None:
            await ws.close(code=1008, reason="no live scenario")
            return
        await ws.accept()
        try:
            first = await ws.receive_text()
            msg = decode(first)
        except (MalformedFrame, WebSocketDisconnect):
            await ws.close(code=1002, reason="expected a register line")
            return
        if not isinstance(msg, Register):
            await ws.close(code=1002, reason="expected a register line")
            return
        try:
            client = hub.register_client(msg)
        except KeyError as e:
            await ws.close(code=1008, reason=str(e))
            return

        async def sender():
            while True:
                wall_due, payload = await client.send_queue.get()
                if payload is None:
                    # Run finished: close the session from the server side.
                    with contextlib.suppress(Exception):
                        await ws.close(code=1000, reason="run complete")
                    break
                delay = wall_due - time.monotonic()
                if delay > 0:
                    await asyncio.sleep(delay)
                with contextlib.suppress(Exception):
                    await ws.send_text(payload.decode("utf-8"))

        send_task = asyncio.create_task(sender())
        try:
            while True:
                text = await ws.receive_text()
                for line in text.splitlines():
                    if not line.strip():
                        continue
                    try:
                        hub.handle_wire_message(decode(line), client)
                    except MalformedFrame:
                        continue
        except (WebSocketDisconnect, RuntimeError):
            # RuntimeError: receive on a socket the sender already closed.
            pass
        finally:
            hub.drop_client(client)
            send_task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await send_task

    dist = _console_dist()
    if dist is not None:
        app.mount("/console", StaticFiles(directory=dist, html=True), name="console")

    return app


def _snapshot_json(snapshot) -> dict:
    return json.loads(encode(snapshot).decode("utf-8"))
