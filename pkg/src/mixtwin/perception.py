"""Statistical emulation of the roadside vision localization pipeline.

Overhead cameras fix each miniature vehicle's pose at the camera frame rate.
Instead of running color-block detection, the emulator draws per-axis
Gaussian errors (with the measured nonzero means kept as biases) and a
Gaussian image-processing delay that gates when each fix becomes available
to the cloud.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import VehicleState
from .geometry import FULL_SCALE, PHYSICAL_MINIATURE, Pose2D, convert_pose


@dataclass(frozen=True)
class LocalizationModel:
    """Noise and timing statistics of the camera localization chain.

    Positional units are millimeters in the miniature frame; delays are in
    milliseconds. Sampled processing delays are truncated at zero.
    """

    noise_mean_x_mm: float = 15.18
    noise_std_x_mm: float = 19.65
    noise_mean_y_mm: float = 6.68
    noise_std_y_mm: float = 16.73
    heading_noise_std: float = 0.02
    frame_rate_hz: float = 20.0
    processing_delay_mean_ms: float = 49.55
    processing_delay_std_ms: float = 1.39

    def __post_init__(self) -> None:
        if min(self.noise_std_x_mm, self.noise_std_y_mm, self.heading_noise_std) < 0:
            raise ValueError("noise std values must be >= 0")
        if self.processing_delay_std_ms < 0:
            raise ValueError("processing delay std must be >= 0")
        if self.frame_rate_hz <= 0:
            raise ValueError("frame_rate_hz must be > 0")

    @property
    def frame_period(self) -> float:
        return 1.0 / self.frame_rate_hz


@dataclass(frozen=True)
class Observation:
    """One camera fix of a vehicle, in the miniature frame.

    `available_time` is when the cloud may first consume it: capture time
    plus the sampled image-processing delay.
    """

    vehicle_id: str
    pose: Pose2D
    capture_time: float
    available_time: float

    def __post_init__(self) -> None:
        if self.available_time < self.capture_time:
            raise ValueError("available_time must be >= capture_time")


def observe(
    vehicle_id: str,
    true_state: VehicleState,
    model: LocalizationModel,
    t: float,
    rng: np.random.Generator,
    state_frame=FULL_SCALE,
) -> Observation:
    """Sample one noisy localization of a vehicle at camera time t.

    The true pose is converted into the miniature frame, per-axis position
    noise (mean + std, in mm) and heading noise are added, and the processing
    delay decides availability. Call only on frame boundaries.
    """
    pose_mini = convert_pose(true_state.pose, state_frame, PHYSICAL_MINIATURE)
    ex = model.noise_mean_x_mm
    ey = model.noise_mean_y_mm
    if model.noise_std_x_mm > 0:
        ex += float(rng.normal(0.0, model.noise_std_x_mm))
    if model.noise_std_y_mm > 0:
        ey += float(rng.normal(0.0, model.noise_std_y_mm))
    etheta = float(rng.normal(0.0, model.heading_noise_std)) if model.heading_noise_std > 0 else 0.0
    noisy = Pose2D(pose_mini.x + ex * 1e-3, pose_mini.y + ey * 1e-3, pose_mini.theta + etheta)

    delay_ms = model.processing_delay_mean_ms
    if model.processing_delay_std_ms > 0:
        delay_ms = float(rng.normal(model.processing_delay_mean_ms, model.processing_delay_std_ms))
    delay = max(0.0, delay_ms) * 1e-3
    return Observation(vehicle_id=vehicle_id, pose=noisy, capture_time=t, available_time=t + delay)


def sample_processing_delay(model: LocalizationModel, rng: np.random.Generator) -> float:
    """Image-processing delay in seconds, truncated at zero."""
    if model.processing_delay_std_ms == 0:
        return model.processing_delay_mean_ms * 1e-3
    return max(0.0, float(rng.normal(model.processing_delay_mean_ms, model.processing_delay_std_ms))) * 1e-3


def frame_schedule(model: LocalizationModel, t_start: float, t_end: float) -> list[float]:
    """Camera capture times in [t_start, t_end) at the model frame rate.

    Times are exact multiples of the frame period counted from t = 0.
    """
    if t_start >= t_end:
        raise ValueError("t_start must be < t_end")
    period = model.frame_period
    k = math.ceil(t_start / period - 1e-12)
    times: list[float] = []
    while k * period < t_end - 1e-12:
        if k * period >= t_start - 1e-12:
            times.append(k * period)
        k += 1
    return times
