"""Platoon performance metrics computed from a telemetry record.

The perturbation window opens at the recorded trigger event and covers the
scripted sinusoid plus a propagation margin so the wave has reached the tail
of the platoon. Attenuation ratios compare the velocity oscillation at the
perturbation frequency (a Fourier projection over the window), which is the
string-stability quantity; raw peak-to-peak would drown the platoon tail in
sensor-noise wander once the wave has been damped below ambient level. The
report also carries raw peak-to-peak, the steady-state gap error and
settling times.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

from .telemetry import TelemetryRecord, WindowNotFound

# Extra window time after the sinusoid ends, letting the wave reach the tail.
PROPAGATION_MARGIN_S = 8.0
# Tail slice used for steady-state gap statistics.
STEADY_WINDOW_S = 10.0
# Oscillation amplitude below this (m/s) counts as flat; flat/flat pairs
# read as 1.0.
P2P_FLOOR = 1e-9


@dataclass
class VehicleMetrics:
    id: str
    peak_to_peak_v: float
    osc_amplitude: float
    attenuation: float | None
    gap_rms_error: float | None
    gap_rms_pct: float | None
    settling_time_s: float | None


@dataclass
class MetricsReport:
    window_start: float
    window_end: float
    vehicles: list[VehicleMetrics] = field(default_factory=list)

    def attenuation_ratios(self) -> dict[str, float]:
        return {m.id: m.attenuation for m in self.vehicles if m.attenuation is not None}

    def to_dict(self) -> dict:
        return {
            "window_start": self.window_start,
            "window_end": self.window_end,
            "vehicles": [vars(m) for m in self.vehicles],
        }

    def format_table(self) -> str:
        lines = [
            f"perturbation window: [{self.window_start:.2f}, {self.window_end:.2f}] s",
            f"{'vehicle':<10}{'p2p v [m/s]':>14}{'osc amp':>10}{'attenuation':>14}{'gap rms [m]':>14}{'gap rms [%]':>13}{'settle [s]':>12}",
        ]
        for m in self.vehicles:
            lines.append(
                f"{m.id:<10}"
                f"{m.peak_to_peak_v:>14.3f}"
                f"{m.osc_amplitude:>10.4f}"
                f"{'' if m.attenuation is None else format(m.attenuation, '.3f'):>14}"
                f"{'' if m.gap_rms_error is None else format(m.gap_rms_error, '.3f'):>14}"
                f"{'' if m.gap_rms_pct is None else format(m.gap_rms_pct, '.2f'):>13}"
                f"{'' if m.settling_time_s is None else format(m.settling_time_s, '.2f'):>12}"
            )
        return "\n".join(lines)


def _window_slice(ts: list[float], vs: list[float], t0: float, t1: float) -> list[float]:
    return [v for t, v in zip(ts, vs) if t0 <= t <= t1]


def oscillation_amplitude(ts: list[float], vs: list[float], freq_hz: float) -> float:
    """Amplitude of the sinusoidal component at freq_hz over the samples.

    A least-squares line is removed first: the platoon's slow gap-recovery
    drift otherwise leaks into the bin and buries the wave at the tail of
    the chain.
    """
    n = len(ts)
    if n == 0:
        return 0.0
    if n < 3:
        detrended = [v - sum(vs) / n for v in vs]
    else:
        t_mean = sum(ts) / n
        v_mean = sum(vs) / n
        sxx = sum((t - t_mean) ** 2 for t in ts)
        sxy = sum((t - t_mean) * (v - v_mean) for t, v in zip(ts, vs))
        slope = sxy / sxx if sxx > 0 else 0.0
        detrended = [v - v_mean - slope * (t - t_mean) for t, v in zip(ts, vs)]
    acc = 0.0 + 0.0j
    for t, v in zip(ts, detrended):
        acc += v * cmath.exp(-2j * math.pi * freq_hz * t)
    return 2.0 * abs(acc) / n


def compute_metrics(record: TelemetryRecord) -> MetricsReport:
    """Metrics over the perturbation window of a completed run."""
    trigger = record.event_time("trigger")
    if trigger is None:
        raise WindowNotFound("no perturbation trigger event in record")
    scenario = record.header["scenario"]
    head = scenario["vehicles"][0]["controller"]
    period = float(head.get("period_s", 3.5))
    cycles = int(head.get("cycles", 2))
    base_speed = float(head.get("base_speed", 4.2))
    perturb_end = trigger + cycles * period
    window_end = perturb_end + PROPAGATION_MARGIN_S

    report = MetricsReport(window_start=trigger, window_end=window_end)
    last_t = record.rows[-1]["t"] if record.rows else 0.0
    steady_start = last_t - STEADY_WINDOW_S

    prev_amp: float | None = None
    for i, vdoc in enumerate(scenario["vehicles"]):
        vid = vdoc["id"]
        ts, vs = record.series(vid, "v")
        pairs = [(t, v) for t, v in zip(ts, vs) if trigger <= t <= window_end]
        if not pairs:
            raise WindowNotFound(f"{vid}: no samples inside the perturbation window")
        in_window = [v for _, v in pairs]
        p2p = max(in_window) - min(in_window)
        # The sinusoid only runs for cycles*period of the analysis window;
        # rescale the projection by the duty factor so the head's reported
        # amplitude matches its physical one. Ratios are unaffected.
        duty = (window_end - trigger) / (cycles * period)
        amp = duty * oscillation_amplitude([t for t, _ in pairs], in_window, 1.0 / period)

        attenuation: float | None = None
        if i > 0 and prev_amp is not None:
            if amp < P2P_FLOOR and prev_amp < P2P_FLOOR:
                attenuation = 1.0
            else:
                attenuation = amp / max(prev_amp, P2P_FLOOR)

        gap_rms = gap_pct = None
        if i > 0:
            gts, gaps = record.series(vid, "gap")
            d_des = float(vdoc["controller"].get("d_des", 8.4))
            steady = _window_slice(gts, gaps, steady_start, last_t)
            if steady:
                gap_rms = (sum((g - d_des) ** 2 for g in steady) / len(steady)) ** 0.5
                gap_pct = 100.0 * gap_rms / d_des

        settle = None
        band = max(0.15 * float(head.get("amplitude", 1.4)), 1e-6)
        beyond = [t for t, v in zip(ts, vs) if t > perturb_end and abs(v - base_speed) > band]
        if ts and ts[-1] > perturb_end:
            settle = 0.0 if not beyond else max(0.0, beyond[-1] - perturb_end)

        report.vehicles.append(
            VehicleMetrics(
                id=vid,
                peak_to_peak_v=p2p,
                osc_amplitude=amp,
                attenuation=attenuation,
                gap_rms_error=gap_rms,
                gap_rms_pct=gap_pct,
                settling_time_s=settle,
            )
        )
        prev_amp = amp
    return report
