"""Coordinate frames, the 1:14 miniature/full-scale mapping, and the closed test track.

All cloud-side computation runs in full-scale meters; the desk platform's
native frame is the miniature one. Frame conversion scales x/y and leaves
headings untouched. The track is a closed polyline with arc-length
parameterization used for projection, lap-relative gaps and the lateral
controller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Road scale of the desk platform relative to real roads.
MINIATURE_SCALE = 14.0


class DegenerateTrack(ValueError):
    """Raised when a track has fewer than 3 distinct waypoints."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    elif wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Frame:
    """A coordinate frame with its length scale relative to full-scale roads."""

    id: str
    scale_to_full: float

    def __post_init__(self) -> None:
        if self.scale_to_full <= 0:
            raise ValueError("scale_to_full must be > 0")


PHYSICAL_MINIATURE = Frame("PhysicalMiniature", MINIATURE_SCALE)
FULL_SCALE = Frame("FullScale", 1.0)

FRAMES = {
    "mini": PHYSICAL_MINIATURE,
    "full": FULL_SCALE,
    PHYSICAL_MINIATURE.id: PHYSICAL_MINIATURE,
    FULL_SCALE.id: FULL_SCALE,
}


@dataclass(frozen=True)
class Pose2D:
    """Planar pose: x, y in meters, heading theta in radians, wrapped to (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(self.theta))


def convert_pose(p: Pose2D, frame_from: Frame, frame_to: Frame) -> Pose2D:
    """Rescale a pose between frames. Headings are scale invariant."""
    factor = frame_from.scale_to_full / frame_to.scale_to_full
    return Pose2D(p.x * factor, p.y * factor, p.theta)


class Track:
    """Closed centerline polyline in full-scale meters with arc-length lookup.

    Immutable after construction; safe to share across tasks.
    """

    def __init__(self, waypoints: np.ndarray, landmark_e_s: float = 0.0):
        pts = np.asarray(waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DegenerateTrack("waypoints must be an (N, 2) array")
        # Close the loop if the caller did not.
        if not np.allclose(pts[0], pts[-1]):
            pts = np.vstack([pts, pts[0]])
        distinct = np.unique(np.round(pts[:-1], 9), axis=0)
        if len(distinct) < 3:
            raise DegenerateTrack("track needs at least 3 distinct waypoints")

        self._pts = pts
        seg = np.diff(pts, axis=0)
        self._seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(self._seg_len <= 0):
            keep = self._seg_len > 0
            # Drop zero-length segments to keep projection well defined.
            self._pts = np.vstack([pts[:-1][keep], pts[-1]])
            seg = np.diff(self._pts, axis=0)
            self._seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self._seg = seg
        self._cum_s = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.lap_length = float(self._cum_s[-1])
        if not 0.0 <= landmark_e_s < self.lap_length:
            raise ValueError("landmark_e_s must lie in [0, lap_length)")
        self.landmark_e_s = float(landmark_e_s)
        # Unit tangents per segment, used for lateral sign and headings.
        self._tangent = seg / self._seg_len[:, None]

    @property
    def waypoints(self) -> np.ndarray:
        return self._pts.copy()

    def point_at(self, s: float) -> tuple[float, float]:
        """Centerline point at arc-length s (wrapped into [0, lap))."""
        s = float(s) % self.lap_length
        x = float(np.interp(s, self._cum_s, self._pts[:, 0]))
        y = float(np.interp(s, self._cum_s, self._pts[:, 1]))
        return x, y

    def heading_at(self, s: float) -> float:
        """Travel-direction heading of the segment containing arc-length s."""
        s = float(s) % self.lap_length
        i = int(np.searchsorted(self._cum_s, s, side="right") - 1)
        i = min(max(i, 0), len(self._seg) - 1)
        return math.atan2(self._tangent[i, 1], self._tangent[i, 0])

    def project(self, p: Pose2D) -> tuple[float, float, float]:
        """Project a pose onto the centerline.

        Returns (s, lateral_error, heading_error): s in [0, lap); lateral
        error signed positive to the left of the travel direction; heading
        error wrapped to (-pi, pi].
        """
        q = np.array([p.x, p.y])
        rel = q - self._pts[:-1]
        t = np.einsum("ij,ij->i", rel, self._seg) / (self._seg_len**2)
        t = np.clip(t, 0.0, 1.0)
        proj = self._pts[:-1] + t[:, None] * self._seg
        d2 = np.sum((q - proj) ** 2, axis=1)
        i = int(np.argmin(d2))
        s = float((self._cum_s[i] + t[i] * self._seg_len[i]) % self.lap_length)
        offset = q - proj[i]
        # Left normal of the travel direction.
        lateral = float(-self._tangent[i, 1] * offset[0] + self._tangent[i, 0] * offset[1])
        heading_err = wrap_angle(p.theta - math.atan2(self._tangent[i, 1], self._tangent[i, 0]))
        return s, lateral, heading_err


def project_to_track(track: Track, p: Pose2D) -> tuple[float, float, float]:
    return track.project(p)


def signed_gap(track: Track, s_follower: float, s_leader: float) -> float:
    """Forward distance along travel direction from follower to leader.

    Result lies in (0, lap]; coincident arc-lengths read as a full lap so a
    follower spawned on top of its leader backs off instead of tailgating.
    """
    lap = track.lap_length
    gap = (s_leader - s_follower) % lap
    if gap == 0.0:
        return lap
    return gap


def build_mcct_loop(
    perimeter: float = 245.0,
    end_radius: float = 25.0,
    transition: float = 8.0,
    spacing: float = 0.25,
    landmark_e_s: float = 0.0,
) -> Track:
    """Rounded-rectangle loop: two straights joined by eased 180-degree turns.

    Sized so the full-scale perimeter is ~245 m (a 17.5 m miniature lap).
    Each turn ramps curvature linearly over `transition` meters into a
    constant-radius arc and back out (clothoid easing): curvature steps at
    corner entries excite every vehicle's lateral loop broadside, and on
    tight curves a lateral offset of the localization-bias magnitude
    distorts arc-length rates enough to disturb platoon gaps. Waypoints are
    spaced `spacing` apart; arc-length zero, and the default perturbation
    landmark, sit at the start of the first straight.
    """
    kappa_max = 1.0 / end_radius
    # Each turn: ramp-in, constant arc, ramp-out, total heading change pi.
    arc_len = (math.pi - kappa_max * transition) * end_radius
    if arc_len <= 0:
        raise ValueError("transition too long for the end radius")
    turn_len = 2.0 * transition + arc_len
    straight = (perimeter - 2.0 * turn_len) / 2.0
    if straight <= 0:
        raise ValueError("end_radius too large for requested perimeter")

    def curvature(u: float) -> float:
        # u: arc position within one half-loop [0, straight + turn_len).
        if u < straight:
            return 0.0
        u -= straight
        if u < transition:
            return kappa_max * u / transition
        u -= transition
        if u < arc_len:
            return kappa_max
        u -= arc_len
        return kappa_max * (1.0 - u / transition)

    half_len = straight + turn_len
    ds = spacing / 8.0
    n_fine = round(2.0 * half_len / ds)
    ds = 2.0 * half_len / n_fine
    xs = np.empty(n_fine)
    ys = np.empty(n_fine)
    x, y, theta = -straight / 2.0, -end_radius, 0.0
    for i in range(n_fine):
        xs[i], ys[i] = x, y
        u = (i * ds) % half_len
        k1 = curvature(u)
        k2 = curvature(min(u + ds, half_len) if u + ds <= half_len else half_len)
        x += ds * math.cos(theta + 0.5 * ds * k1)
        y += ds * math.sin(theta + 0.5 * ds * k1)
        theta += 0.5 * ds * (k1 + k2)

    step = max(1, round(spacing / ds))
    pts = np.stack([xs[::step], ys[::step]], axis=1)
    return Track(pts, landmark_e_s=landmark_e_s)
