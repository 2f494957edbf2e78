"""Run records: one JSON line per vehicle per control tick, plus event lines.

The header line carries the scenario document and its hash so a record is
self-describing; rows hold the testbed's ground-truth states in full-scale
units. Lockstep runs with equal seeds serialize to byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .netsim import ObstacleAdd, Snapshot, StateUpdate

FORMAT = "mixtwin-telemetry/1"

ROW_FIELDS = ("t", "id", "s", "x", "y", "theta", "v", "v_cmd", "phi_cmd", "gap")


class MalformedRecord(ValueError):
    pass


class InvalidSpeed(ValueError):
    pass


class WindowNotFound(ValueError):
    """Telemetry lacks the perturbation event a metric needs."""


@dataclass
class TelemetryRecord:
    """Header, per-tick vehicle rows and event rows of one run."""

    header: dict
    rows: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)

    def add_tick(self, rows: list[dict]) -> None:
        self.rows.extend(sorted(rows, key=lambda r: r["id"]))

    def add_event(self, event: dict) -> None:
        self.events.append(event)

    def vehicle_ids(self) -> list[str]:
        return [v["id"] for v in self.header["scenario"]["vehicles"]]

    def ticks(self) -> list[float]:
        out: list[float] = []
        for row in self.rows:
            if not out or row["t"] != out[-1]:
                out.append(row["t"])
        return out

    def series(self, vehicle_id: str, key: str) -> tuple[list[float], list[float]]:
        """Time series of one row field for one vehicle."""
        ts: list[float] = []
        vals: list[float] = []
        for row in self.rows:
            if row["id"] == vehicle_id and row.get(key) is not None:
                ts.append(row["t"])
                vals.append(row[key])
        return ts, vals

    def event_time(self, name: str) -> float | None:
        for ev in self.events:
            if ev.get("event") == name:
                return ev["t"]
        return None

    # -- serialization -----------------------------------------------------

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"format": FORMAT, **self.header}, separators=(",", ":")) + "\n")
            for line in self._lines():
                fh.write(json.dumps(line, separators=(",", ":")) + "\n")

    def _lines(self) -> list[dict]:
        # Events sort ahead of rows at equal times: they explain what follows.
        keyed = [((ev["t"], 0, i), {"kind": "event", **ev}) for i, ev in enumerate(self.events)]
        keyed += [((row["t"], 1, i), {"kind": "row", **row}) for i, row in enumerate(self.rows)]
        keyed.sort(key=lambda kv: kv[0])
        return [line for _, line in keyed]

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "TelemetryRecord":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                header = json.loads(fh.readline())
            except json.JSONDecodeError as e:
                raise MalformedRecord(f"bad header: {e}") from None
            if header.get("format") != FORMAT:
                raise MalformedRecord(f"not a {FORMAT} file")
            header.pop("format")
            record = cls(header=header)
            for n, text in enumerate(fh, start=2):
                if not text.strip():
                    continue
                try:
                    line = json.loads(text)
                except json.JSONDecodeError as e:
                    raise MalformedRecord(f"line {n}: {e}") from None
                kind = line.pop("kind", None)
                if kind == "row":
                    record.rows.append(line)
                elif kind == "event":
                    record.events.append(line)
                else:
                    raise MalformedRecord(f"line {n}: unknown line kind {kind!r}")
        return record

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(ROW_FIELDS)
            for row in self.rows:
                writer.writerow([("" if row.get(k) is None else row.get(k)) for k in ROW_FIELDS])


def snapshot_at_tick(record: TelemetryRecord, t: float, rows: list[dict]) -> Snapshot:
    """Wire snapshot message rebuilt from one tick's rows."""
    vehicles = tuple(
        StateUpdate(id=r["id"], t=r["t"], x=r["x"], y=r["y"], theta=r["theta"], v=r["v"])
        for r in rows
    )
    obstacles: list[ObstacleAdd] = []
    for ev in record.events:
        if ev.get("event") == "obstacle" and ev["t"] <= t:
            obstacles.append(ObstacleAdd(ev["x"], ev["y"], ev["r"]))
    return Snapshot(t=t, vehicles=vehicles, obstacles=tuple(obstacles))


def replay(record: TelemetryRecord, speed: float):
    """Re-emit the run as (wall_delay_s, Snapshot) pairs at speed x real time.

    The first snapshot carries zero delay; later delays are the tick spacing
    compressed by the speed factor.
    """
    if not isinstance(speed, (int, float)) or speed <= 0:
        raise InvalidSpeed(f"speed must be > 0, got {speed}")
    if not record.rows:
        raise MalformedRecord("record has no rows")
    by_tick: dict[float, list[dict]] = {}
    for row in record.rows:
        by_tick.setdefault(row["t"], []).append(row)
    prev_t: float | None = None
    for t in sorted(by_tick):
        delay = 0.0 if prev_t is None else (t - prev_t) / speed
        prev_t = t
        yield delay, snapshot_at_tick(record, t, by_tick[t])
