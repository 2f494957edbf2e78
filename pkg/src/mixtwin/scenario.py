"""Declarative experiment definitions and their validation.

A scenario JSON document names the track, the platoon formation (vehicle
sources, spawn arc-lengths, controllers and gains), the link and localization
models, the run mode and the seed. Two presets ship with the package:
`experiment_a` (one emulated-physical head plus two emulated-physical and
three virtual followers) and `experiment_b` (a scripted human-driven vehicle
in position four).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .control import CaccGains, HeadProfile, miniature_gains, virtual_gains
from .dynamics import (
    EMULATED_PHYSICAL,
    MINIATURE_DEFAULTS,
    VIRTUAL,
    VIRTUAL_DEFAULTS,
    VehicleParams,
)
from .geometry import FULL_SCALE, PHYSICAL_MINIATURE, Frame, Track, build_mcct_loop
from .mixedspace import HUMAN, KIND_HDV, KIND_PHYSICAL, KIND_VIRTUAL
from .netsim import LINK_IDS, LinkModel, default_links, zero_delay_links
from .perception import LocalizationModel

PRESET_NAMES = ("experiment_a", "experiment_b")


class ValidationError(ValueError):
    """Scenario document rejected; carries the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class HdvScript:
    """Scripted human driver: weak car following plus a sinusoid and jitter.

    The oscillation arms once the head vehicle has settled at its base speed
    and fires when the head's velocity deviates by more than trigger_v_dev,
    mimicking a sluggish human amplifying an arriving wave.
    """

    osc_amplitude: float = 2.1
    osc_period: float = 3.5
    osc_cycles: int = 2
    jitter_std: float = 0.05
    follow_k_p: float = 0.08
    follow_k_v: float = 0.35
    d_des: float = 8.4
    base_speed: float = 4.2
    trigger_v_dev: float = 0.7


@dataclass(frozen=True)
class VehicleSpec:
    id: str
    kind: str  # physical | virtual | hdv
    initial_s: float
    params: VehicleParams
    frame: Frame
    entity_kind: str
    controller: HeadProfile | CaccGains | str
    script: HdvScript | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    mode: str  # lockstep | realtime
    duration_s: float
    warmup_s: float
    physics_dt: float
    control_rate_hz: float
    report_rate_hz: float
    track: Track
    links: dict[str, LinkModel]
    localization: LocalizationModel
    vehicles: tuple[VehicleSpec, ...]
    raw: dict

    @property
    def control_dt(self) -> float:
        return 1.0 / self.control_rate_hz

    @property
    def hash(self) -> str:
        return scenario_hash(self.raw)

    def head(self) -> VehicleSpec:
        return next(v for v in self.vehicles if isinstance(v.controller, HeadProfile))


def scenario_hash(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise ValidationError(f"{path}.{key}", "missing required field")
    return doc[key]


def _build_track(spec, path: str) -> Track:
    if spec == "mcct-loop":
        return build_mcct_loop()
    if isinstance(spec, dict):
        waypoints = _require(spec, "waypoints", path)
        if not isinstance(waypoints, list) or len(waypoints) < 3:
            raise ValidationError(f"{path}.waypoints", "need at least 3 waypoints")
        landmark = float(spec.get("landmark_e_s", 0.0))
        try:
            return Track(waypoints, landmark_e_s=landmark)
        except ValueError as e:
            raise ValidationError(path, str(e)) from None
    raise ValidationError(path, "track must be 'mcct-loop' or a waypoint object")


def _build_links(spec, path: str) -> dict[str, LinkModel]:
    links = default_links()
    if spec is None:
        return links
    if spec == "zero":
        return zero_delay_links()
    if not isinstance(spec, dict):
        raise ValidationError(path, "links must be 'zero' or a per-link object")
    for link_id, fields in spec.items():
        if link_id not in LINK_IDS:
            raise ValidationError(f"{path}.{link_id}", f"unknown link, expected one of {LINK_IDS}")
        base = links[link_id]
        links[link_id] = LinkModel(
            link_id,
            float(fields.get("delay_mean_ms", base.delay_mean_ms)),
            float(fields.get("delay_std_ms", base.delay_std_ms)),
            float(fields.get("delay_p99_ms", base.delay_p99_ms)),
        )
    return links


def _build_localization(spec, path: str) -> LocalizationModel:
    base = LocalizationModel()
    if spec is None:
        return base
    if spec == "zero":
        return LocalizationModel(
            noise_mean_x_mm=0.0,
            noise_std_x_mm=0.0,
            noise_mean_y_mm=0.0,
            noise_std_y_mm=0.0,
            heading_noise_std=0.0,
            processing_delay_mean_ms=0.0,
            processing_delay_std_ms=0.0,
        )
    if not isinstance(spec, dict):
        raise ValidationError(path, "localization must be 'zero' or a field object")
    allowed = {
        "noise_mean_x_mm",
        "noise_std_x_mm",
        "noise_mean_y_mm",
        "noise_std_y_mm",
        "heading_noise_std",
        "frame_rate_hz",
        "processing_delay_mean_ms",
        "processing_delay_std_ms",
    }
    for key in spec:
        if key not in allowed:
            raise ValidationError(f"{path}.{key}", "unknown localization field")
    kwargs = {key: float(val) for key, val in spec.items()}
    try:
        return replace(base, **kwargs)
    except ValueError as e:
        raise ValidationError(path, str(e)) from None


def _build_params(kind: str, overrides: dict | None, path: str) -> VehicleParams:
    base = MINIATURE_DEFAULTS if kind == "physical" else VIRTUAL_DEFAULTS
    if not overrides:
        return base
    allowed = {
        "wheelbase",
        "v_max",
        "steer_max",
        "accel_max",
        "actuator_tau_v",
        "actuator_tau_phi",
        "process_noise_sigma_v",
    }
    for key in overrides:
        if key not in allowed:
            raise ValidationError(f"{path}.{key}", "unknown params field")
    try:
        return replace(base, **{key: float(val) for key, val in overrides.items()})
    except ValueError as e:
        raise ValidationError(path, str(e)) from None


def _build_controller(kind: str, spec, track: Track, path: str):
    if not isinstance(spec, dict) or "type" not in spec:
        raise ValidationError(path, "controller must be an object with a 'type'")
    ctype = spec["type"]
    if ctype == "head":
        if kind == "hdv":
            raise ValidationError(path, "an hdv cannot be the head vehicle")
        try:
            profile = HeadProfile(
                base_speed=float(spec.get("base_speed", 4.2)),
                perturb_amplitude=float(spec.get("amplitude", 1.4)),
                perturb_period=float(spec.get("period_s", 3.5)),
                trigger_arclength=float(spec.get("trigger_s", track.landmark_e_s)),
                perturb_cycles=int(spec.get("cycles", 2)),
            )
        except ValueError as e:
            raise ValidationError(path, str(e)) from None
        if not 0.0 <= profile.trigger_arclength < track.lap_length:
            raise ValidationError(f"{path}.trigger_s", "outside [0, lap_length)")
        return profile, None
    if ctype == "cacc":
        if kind == "hdv":
            raise ValidationError(path, "an hdv is human controlled, not CACC")
        defaults = miniature_gains() if kind == "physical" else virtual_gains()
        try:
            gains = CaccGains(
                k_p=float(spec.get("k_p", defaults.k_p)),
                k_v1=float(spec.get("k_v1", defaults.k_v1)),
                k_v2=float(spec.get("k_v2", defaults.k_v2)),
                d_des=float(spec.get("d_des", defaults.d_des)),
            )
        except ValueError as e:
            raise ValidationError(path, str(e)) from None
        return gains, None
    if ctype == "human":
        # Both driving modes: a human can take a virtual-dynamics vehicle
        # (kind hdv) or one of the camera-localized miniatures.
        if kind not in ("hdv", "physical"):
            raise ValidationError(path, "human control requires kind 'hdv' or 'physical'")
        script_spec = spec.get("script")
        script = None
        if script_spec is not None:
            base = HdvScript()
            allowed = {
                "osc_amplitude",
                "osc_period",
                "osc_cycles",
                "jitter_std",
                "follow_k_p",
                "follow_k_v",
                "d_des",
                "base_speed",
                "trigger_v_dev",
            }
            for key in script_spec:
                if key not in allowed:
                    raise ValidationError(f"{path}.script.{key}", "unknown script field")
            kwargs = {
                key: (int(val) if key == "osc_cycles" else float(val))
                for key, val in script_spec.items()
            }
            script = replace(base, **kwargs)
        return HUMAN, script
    raise ValidationError(f"{path}.type", f"unknown controller type {ctype!r}")


_KIND_TABLE = {
    "physical": (KIND_PHYSICAL, PHYSICAL_MINIATURE, EMULATED_PHYSICAL),
    "virtual": (KIND_VIRTUAL, FULL_SCALE, VIRTUAL),
    "hdv": (KIND_HDV, FULL_SCALE, VIRTUAL),
}


def parse_scenario(doc: dict) -> Scenario:
    """Validate a scenario document and resolve every default."""
    if not isinstance(doc, dict):
        raise ValidationError("$", "scenario must be a JSON object")
    name = str(doc.get("name", "unnamed"))
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ValidationError("$.seed", "seed must be a non-negative integer")
    mode = doc.get("mode", "lockstep")
    if mode not in ("lockstep", "realtime"):
        raise ValidationError("$.mode", "mode must be 'lockstep' or 'realtime'")
    duration = float(doc.get("duration_s", 60.0))
    if duration <= 0:
        raise ValidationError("$.duration_s", "must be > 0")
    warmup = float(doc.get("warmup_s", 5.0))
    if warmup < 0 or warmup >= duration:
        raise ValidationError("$.warmup_s", "must lie in [0, duration)")
    physics_dt = float(doc.get("physics_dt_s", 0.01))
    if not 0.0 < physics_dt <= 0.1:
        raise ValidationError("$.physics_dt_s", "must lie in (0, 0.1]")
    control_rate = float(doc.get("control_rate_hz", 20.0))
    report_rate = float(doc.get("report_rate_hz", 20.0))
    for rate, field in ((control_rate, "control_rate_hz"), (report_rate, "report_rate_hz")):
        if rate <= 0:
            raise ValidationError(f"$.{field}", "must be > 0")
        steps = 1.0 / (rate * physics_dt)
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise ValidationError(f"$.{field}", "period must be an integer multiple of physics_dt_s")

    track = _build_track(doc.get("track", "mcct-loop"), "$.track")
    links = _build_links(doc.get("links"), "$.links")
    localization = _build_localization(doc.get("localization"), "$.localization")

    vehicles_doc = _require(doc, "vehicles", "$")
    if not isinstance(vehicles_doc, list) or not vehicles_doc:
        raise ValidationError("$.vehicles", "need a non-empty vehicle list")

    vehicles: list[VehicleSpec] = []
    seen: set[str] = set()
    head_count = 0
    for i, vdoc in enumerate(vehicles_doc):
        path = f"$.vehicles[{i}]"
        vid = str(_require(vdoc, "id", path))
        if vid in seen:
            raise ValidationError(f"{path}.id", f"duplicate vehicle id {vid!r}")
        seen.add(vid)
        kind = _require(vdoc, "kind", path)
        if kind not in _KIND_TABLE:
            raise ValidationError(f"{path}.kind", "must be physical, virtual or hdv")
        entity_kind, frame, dyn_kind = _KIND_TABLE[kind]
        initial_s = float(_require(vdoc, "initial_s", path))
        if not 0.0 <= initial_s < track.lap_length:
            raise ValidationError(f"{path}.initial_s", "outside [0, lap_length)")
        params = _build_params(kind, vdoc.get("params"), f"{path}.params")
        params = replace(params, kind=dyn_kind)
        controller, script = _build_controller(
            kind, _require(vdoc, "controller", path), track, f"{path}.controller"
        )
        if isinstance(controller, HeadProfile):
            head_count += 1
        vehicles.append(
            VehicleSpec(
                id=vid,
                kind=kind,
                initial_s=initial_s,
                params=params,
                frame=frame,
                entity_kind=entity_kind,
                controller=controller,
                script=script,
            )
        )

    if head_count != 1:
        raise ValidationError("$.vehicles", f"exactly one head vehicle required, found {head_count}")
    if not isinstance(vehicles[0].controller, HeadProfile):
        raise ValidationError("$.vehicles[0]", "the platoon head must lead the vehicle list")
    for i in range(1, len(vehicles)):
        if vehicles[i].initial_s >= vehicles[i - 1].initial_s:
            raise ValidationError(
                f"$.vehicles[{i}].initial_s",
                "arc-lengths must strictly decrease along the platoon",
            )

    return Scenario(
        name=name,
        seed=seed,
        mode=mode,
        duration_s=duration,
        warmup_s=warmup,
        physics_dt=physics_dt,
        control_rate_hz=control_rate,
        report_rate_hz=report_rate,
        track=track,
        links=links,
        localization=localization,
        vehicles=tuple(vehicles),
        raw=doc,
    )


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(p)
    with open(p, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValidationError("$", f"invalid JSON: {e}") from None
    return parse_scenario(doc)


def load_preset(name: str) -> dict:
    """Load one of the shipped scenario documents by name."""
    if name not in PRESET_NAMES:
        raise KeyError(f"unknown preset {name!r}, expected one of {PRESET_NAMES}")
    text = resources.files("mixtwin").joinpath(f"presets/{name}.json").read_text("utf-8")
    return json.loads(text)
