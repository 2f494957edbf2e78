"""Request/response models of the coordinator service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    name: str
    version: str


class TrackResponse(BaseModel):
    waypoints: list[tuple[float, float]]
    lap_length: float
    landmark_e_s: float


class StatusResponse(BaseModel):
    phase: str  # idle | waiting_agents | running | done | error
    t: float = 0.0
    step: int = 0
    duration_s: float = 0.0
    expected: list[str] = Field(default_factory=list)
    registered: list[str] = Field(default_factory=list)
    consoles: int = 0
    stale_messages: int = 0
    detail: str | None = None


class ObstacleRequest(BaseModel):
    x: float
    y: float
    r: float = Field(gt=0.0)


class ObstacleResponse(BaseModel):
    id: str


class PerturbRequest(BaseModel):
    id: str
    dv: float


class FacilityRequest(BaseModel):
    id: str
    state: str


class VehicleMetricsModel(BaseModel):
    id: str
    peak_to_peak_v: float
    osc_amplitude: float
    attenuation: float | None = None
    gap_rms_error: float | None = None
    gap_rms_pct: float | None = None
    settling_time_s: float | None = None


class MetricsResponse(BaseModel):
    window_start: float
    window_end: float
    vehicles: list[VehicleMetricsModel]


class RunRequest(BaseModel):
    scenario: dict
    seed: int | None = None


class RunResponse(BaseModel):
    run_id: str
    name: str
    seed: int
    scenario_hash: str
    metrics: MetricsResponse | None = None
