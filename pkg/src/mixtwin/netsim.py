"""Delay-injected message bus and the line-delimited JSON wire protocol.

Eight links connect the cloud to vehicles, cameras, facilities, the virtual
platform and the HMI clients. Each link delays messages by a clamped Gaussian
fitted from round-trip measurements; delivery preserves per-sender FIFO order
even when sampled delays would reorder. The same message schemas travel
in-process (lockstep mode) and over sockets (realtime mode): UTF-8, one JSON
object per newline-terminated line, coordinates always full-scale meters.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

VEHICLE_UP = "VehicleUp"
VEHICLE_DOWN = "VehicleDown"
CAMERA_UP = "CameraUp"
FACILITY_DOWN = "FacilityDown"
UNITY_UP = "UnityUp"
UNITY_DOWN = "UnityDown"
HMI_UP = "HmiUp"
HMI_DOWN = "HmiDown"

LINK_IDS = (
    VEHICLE_UP,
    VEHICLE_DOWN,
    CAMERA_UP,
    FACILITY_DOWN,
    UNITY_UP,
    UNITY_DOWN,
    HMI_UP,
    HMI_DOWN,
)


class UnknownLink(KeyError):
    """Raised when sending on a link that was never registered."""


class MalformedFrame(ValueError):
    """Raised by the codec on an unparseable or incomplete line."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class LinkModel:
    """Gaussian delay model of one communication link, in milliseconds.

    Samples are clamped to [0, 2 * p99]; with std larger than the mean (the
    wired display and HMI links) the clamp floors a sizable negative tail, so
    realized means run above the fitted ones.
    """

    link_id: str
    delay_mean_ms: float
    delay_std_ms: float
    delay_p99_ms: float

    def __post_init__(self) -> None:
        if self.delay_std_ms < 0:
            raise ValueError("delay_std_ms must be >= 0")

    def sample_raw_ms(self, rng: np.random.Generator) -> float:
        """Unclamped Gaussian draw, used for parameter-level verification."""
        if self.delay_std_ms == 0:
            return self.delay_mean_ms
        return float(rng.normal(self.delay_mean_ms, self.delay_std_ms))

    def sample_delay(self, rng: np.random.Generator) -> float:
        """One delay in seconds, clamped to [0, 2 * p99]."""
        raw = self.sample_raw_ms(rng)
        return min(max(raw, 0.0), 2.0 * self.delay_p99_ms) * 1e-3


def default_links() -> dict[str, LinkModel]:
    """The measured per-link delay fits: four pairs sharing statistics."""
    pairs = {
        (VEHICLE_UP, VEHICLE_DOWN): (1.33, 0.66, 2.86),
        (CAMERA_UP, FACILITY_DOWN): (4.23, 1.72, 8.23),
        (UNITY_UP, UNITY_DOWN): (0.38, 1.17, 3.09),
        (HMI_UP, HMI_DOWN): (0.36, 2.74, 6.74),
    }
    links: dict[str, LinkModel] = {}
    for ids, (mean, std, p99) in pairs.items():
        for link_id in ids:
            links[link_id] = LinkModel(link_id, mean, std, p99)
    return links


def zero_delay_links() -> dict[str, LinkModel]:
    return {link_id: LinkModel(link_id, 0.0, 0.0, 0.0) for link_id in LINK_IDS}


# --------------------------------------------------------------------------
# Messages


@dataclass(frozen=True)
class Register:
    id: str
    kind: str  # virtual | physical | hdv | console
    frame: str  # mini | full


@dataclass(frozen=True)
class StateUpdate:
    id: str
    t: float
    x: float
    y: float
    theta: float
    v: float


@dataclass(frozen=True)
class Obs:
    id: str
    t_cap: float
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class Command:
    id: str
    t: float
    v_cmd: float
    phi_cmd: float


@dataclass(frozen=True)
class ObstacleAdd:
    x: float
    y: float
    r: float


@dataclass(frozen=True)
class Perturb:
    id: str
    dv: float


@dataclass(frozen=True)
class FacilitySet:
    id: str
    state: str  # on | off | red | yellow | green | up | down


@dataclass(frozen=True)
class Tick:
    t: float
    step: int


@dataclass(frozen=True)
class TickAck:
    step: int
    id: str


@dataclass(frozen=True)
class Snapshot:
    t: float
    vehicles: tuple[StateUpdate, ...]
    obstacles: tuple[ObstacleAdd, ...]
    facilities: tuple[FacilitySet, ...] = ()


Message = (
    Register
    | StateUpdate
    | Obs
    | Command
    | ObstacleAdd
    | Perturb
    | FacilitySet
    | Tick
    | TickAck
    | Snapshot
)


# --------------------------------------------------------------------------
# Codec: one JSON object per line, field names fixed by the wire contract.


def _to_obj(msg: Message) -> dict:
    if isinstance(msg, Register):
        return {"type": "register", "id": msg.id, "kind": msg.kind, "frame": msg.frame}
    if isinstance(msg, StateUpdate):
        return {
            "type": "state",
            "id": msg.id,
            "t": msg.t,
            "x": msg.x,
            "y": msg.y,
            "theta": msg.theta,
            "v": msg.v,
        }
    if isinstance(msg, Obs):
        return {
            "type": "obs",
            "id": msg.id,
            "t_cap": msg.t_cap,
            "x": msg.x,
            "y": msg.y,
            "theta": msg.theta,
        }
    if isinstance(msg, Command):
        return {
            "type": "cmd",
            "id": msg.id,
            "t": msg.t,
            "v_cmd": msg.v_cmd,
            "phi_cmd": msg.phi_cmd,
        }
    if isinstance(msg, ObstacleAdd):
        return {"type": "obstacle", "x": msg.x, "y": msg.y, "r": msg.r}
    if isinstance(msg, Perturb):
        return {"type": "perturb", "id": msg.id, "dv": msg.dv}
    if isinstance(msg, FacilitySet):
        return {"type": "facility", "id": msg.id, "state": msg.state}
    if isinstance(msg, Tick):
        return {"type": "tick", "t": msg.t, "step": msg.step}
    if isinstance(msg, TickAck):
        return {"type": "tick_ack", "step": msg.step, "id": msg.id}
    if isinstance(msg, Snapshot):
        return {
            "type": "snapshot",
            "t": msg.t,
            "vehicles": [
                {"id": s.id, "t": s.t, "x": s.x, "y": s.y, "theta": s.theta, "v": s.v}
                for s in msg.vehicles
            ],
            "obstacles": [{"x": o.x, "y": o.y, "r": o.r} for o in msg.obstacles],
            "facilities": [{"id": f.id, "state": f.state} for f in msg.facilities],
        }
    raise TypeError(f"not a wire message: {msg!r}")


def encode(msg: Message) -> bytes:
    """Serialize one message to a newline-terminated UTF-8 JSON line."""
    return (json.dumps(_to_obj(msg), separators=(",", ":"), allow_nan=False) + "\n").encode("utf-8")


def _need(obj: dict, key: str, offset: int):
    try:
        return obj[key]
    except KeyError:
        raise MalformedFrame(f"missing field {key!r}", offset) from None


def _from_obj(obj: dict, offset: int = 0) -> Message:
    kind = _need(obj, "type", offset)
    if kind == "register":
        return Register(_need(obj, "id", offset), _need(obj, "kind", offset), _need(obj, "frame", offset))
    if kind == "state":
        return StateUpdate(
            _need(obj, "id", offset),
            float(_need(obj, "t", offset)),
            float(_need(obj, "x", offset)),
            float(_need(obj, "y", offset)),
            float(_need(obj, "theta", offset)),
            float(_need(obj, "v", offset)),
        )
    if kind == "obs":
        return Obs(
            _need(obj, "id", offset),
            float(_need(obj, "t_cap", offset)),
            float(_need(obj, "x", offset)),
            float(_need(obj, "y", offset)),
            float(_need(obj, "theta", offset)),
        )
    if kind == "cmd":
        return Command(
            _need(obj, "id", offset),
            float(_need(obj, "t", offset)),
            float(_need(obj, "v_cmd", offset)),
            float(_need(obj, "phi_cmd", offset)),
        )
    if kind == "obstacle":
        return ObstacleAdd(float(_need(obj, "x", offset)), float(_need(obj, "y", offset)), float(_need(obj, "r", offset)))
    if kind == "perturb":
        return Perturb(_need(obj, "id", offset), float(_need(obj, "dv", offset)))
    if kind == "facility":
        return FacilitySet(_need(obj, "id", offset), _need(obj, "state", offset))
    if kind == "tick":
        return Tick(float(_need(obj, "t", offset)), int(_need(obj, "step", offset)))
    if kind == "tick_ack":
        return TickAck(int(_need(obj, "step", offset)), _need(obj, "id", offset))
    if kind == "snapshot":
        vehicles = tuple(
            StateUpdate(
                _need(s, "id", offset),
                float(_need(s, "t", offset)),
                float(_need(s, "x", offset)),
                float(_need(s, "y", offset)),
                float(_need(s, "theta", offset)),
                float(_need(s, "v", offset)),
            )
            for s in _need(obj, "vehicles", offset)
        )
        obstacles = tuple(
            ObstacleAdd(float(_need(o, "x", offset)), float(_need(o, "y", offset)), float(_need(o, "r", offset)))
            for o in _need(obj, "obstacles", offset)
        )
        facilities = tuple(
            FacilitySet(_need(f, "id", offset), _need(f, "state", offset))
            for f in obj.get("facilities", [])
        )
        return Snapshot(float(_need(obj, "t", offset)), vehicles, obstacles, facilities)
    raise MalformedFrame(f"unknown message type {kind!r}", offset)


def decode(line: bytes | str) -> Message:
    """Parse one complete line back into a message.

    Raises MalformedFrame with the byte offset of the failure for truncated
    or invalid input.
    """
    if isinstance(line, bytes):
        text = line.decode("utf-8", errors="strict")
    else:
        text = line
    stripped = text.strip("\n\r")
    if not stripped:
        raise MalformedFrame("empty frame", 0)
    try:
        obj = json.loads(stripped)
    except json.JSONDecodeError as e:
        raise MalformedFrame(f"invalid JSON: {e.msg}", e.pos) from None
    if not isinstance(obj, dict):
        raise MalformedFrame("frame is not a JSON object", 0)
    return _from_obj(obj)


def iter_frames(buffer: bytes) -> Iterator[tuple[Message, bytes]]:
    """Yield (message, remainder) pairs while complete lines remain."""
    rest = buffer
    while True:
        idx = rest.find(b"\n")
        if idx < 0:
            return
        line, rest = rest[: idx + 1], rest[idx + 1 :]
        yield decode(line), rest


# --------------------------------------------------------------------------
# Delay bus


@dataclass(frozen=True)
class Envelope:
    """One in-flight message with its scheduled delivery."""

    seq: int
    sender_id: str
    recipient_id: str
    link_id: str
    send_time: float
    deliver_time: float
    payload: Message


@dataclass
class DelayBus:
    """Priority-queue message bus with per-link Gaussian delays.

    Delivery order is (deliver_time, sender_id, seq); a sender's messages
    never overtake each other (ordered-transport semantics), so a small
    sampled delay behind a large one is stretched to match.
    """

    links: dict[str, LinkModel]
    _queue: list[tuple[float, str, int, Envelope]] = field(default_factory=list)
    _seq: dict[str, int] = field(default_factory=dict)
    _last_deliver: dict[str, float] = field(default_factory=dict)

    def send(
        self,
        link_id: str,
        msg: Message,
        t_now: float,
        rng: np.random.Generator,
        sender_id: str,
        recipient_id: str = "cloud",
    ) -> Envelope:
        try:
            link = self.links[link_id]
        except KeyError:
            raise UnknownLink(link_id) from None
        seq = self._seq.get(sender_id, 0)
        self._seq[sender_id] = seq + 1
        deliver = t_now + link.sample_delay(rng)
        floor = self._last_deliver.get(sender_id)
        if floor is not None and deliver < floor:
            deliver = floor
        self._last_deliver[sender_id] = deliver
        env = Envelope(
            seq=seq,
            sender_id=sender_id,
            recipient_id=recipient_id,
            link_id=link_id,
            send_time=t_now,
            deliver_time=deliver,
            payload=msg,
        )
        heapq.heappush(self._queue, (deliver, sender_id, seq, env))
        return env

    def deliver_due(self, t_now: float) -> list[Envelope]:
        """Pop every envelope due at or before t_now, in delivery order."""
        out: list[Envelope] = []
        while self._queue and self._queue[0][0] <= t_now:
            out.append(heapq.heappop(self._queue)[3])
        return out

    def pending(self) -> int:
        return len(self._queue)
