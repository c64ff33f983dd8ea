"""Trajectory-conflict heuristics over pairs of confirmed tracks.

A pair is reported when the two road-users are close, approach each other at
a considerable angle, were both moving, and at least one of them shows a
sudden speed drop in the most recent frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .costs import boxes_to_array, iou_matrix
from .geometry import CalibrationError, GeoPoint, Homography, SpeedEstimate, SpeedSeries, image_to_world
from .ingest import ClassLabel
from .kalman import boxes_from_means
from .tracker import Track

V2V, V2P, V2B = "V2V", "V2P", "V2B"
ACCIDENT, NEAR_ACCIDENT = "accident", "near_accident"
ANGLE_MODES = ("first_observed", "window")


@dataclass
class ConflictConfig:
    tau_prox: float = 1.5
    theta_min: float = 35.0
    s_min: float = 10.0
    rho_drop: float = 0.5
    k_recent: int = 5
    f: int = 30
    cooldown: int = 60
    angle_mode: str = "first_observed"

    def __post_init__(self):
        if self.tau_prox <= 0 or self.s_min <= 0:
            raise ValueError("tau_prox and s_min must be positive")
        if not 0.0 < self.theta_min < 180.0:
            raise ValueError("theta_min must lie in (0, 180) degrees")
        if not 0.0 < self.rho_drop < 1.0:
            raise ValueError("rho_drop must lie in (0, 1)")
        if self.k_recent < 1 or self.cooldown < 1:
            raise ValueError("k_recent and cooldown must be positive")
        if self.f < 2 or self.f <= self.k_recent:
            raise ValueError("f must be at least 2 and larger than k_recent")
        if self.angle_mode not in ANGLE_MODES:
            raise ValueError(f"angle_mode must be one of {ANGLE_MODES}")


@dataclass
class ConflictEvent:
    frame: int
    location: Tuple[float, float]
    geo: Optional[GeoPoint]
    type: str
    severity: str
    participants: Tuple[int, int]
    angle: float
    speeds_before: Tuple[float, float]
    speeds_after: Tuple[float, float]
    classes: Tuple[str, str] = ("vehicle", "vehicle")

    def to_record(self) -> dict:
        return {
            "frame": self.frame,
            "type": self.type,
            "severity": self.severity,
            "participants": list(self.participants),
            "classes": list(self.classes),
            "x": round(self.location[0], 3),
            "y": round(self.location[1], 3),
            "lat": None if self.geo is None else round(self.geo.lat, 8),
            "lon": None if self.geo is None else round(self.geo.lon, 8),
            "angle": round(self.angle, 3),
            "speeds_before": [_num(s) for s in self.speeds_before],
            "speeds_after": [_num(s) for s in self.speeds_after],
        }

    def summary(self) -> str:
        a, b = self.participants
        return (
            f"frame {self.frame}: {self.type} {self.severity.replace('_', '-')} between tracks {a} and {b} "
            f"at ({self.location[0]:.0f}, {self.location[1]:.0f}) px, angle {self.angle:.0f} deg, "
            f"speeds {self.speeds_before[0]:.1f}/{self.speeds_before[1]:.1f} -> "
            f"{self.speeds_after[0]:.1f}/{self.speeds_after[1]:.1f} km/h"
        )


def _num(v: float):
    return round(v, 3) if math.isfinite(v) else None


def event_type(a: ClassLabel, b: ClassLabel) -> Optional[str]:
    """Conflict type for a class pair; None when no vehicle is involved."""
    labels = {a, b}
    if ClassLabel.VEHICLE not in labels:
        return None
    if ClassLabel.PEDESTRIAN in labels:
        return V2P
    if ClassLabel.BICYCLE in labels:
        return V2B
    return V2V


def close_pairs(tracks: Sequence[Track], tau_prox: float) -> List[Tuple[Track, Track]]:
    """Pairs whose boxes overlap or whose centers are within ``tau_prox`` mean diagonals."""
    n = len(tracks)
    if n < 2:
        return []
    boxes = boxes_from_means(np.stack([t.state.mean for t in tracks]))
    overlap = iou_matrix(boxes, boxes) > 0
    diff = boxes[:, None, :2] - boxes[None, :, :2]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    diag = np.hypot(boxes[:, 2], boxes[:, 3])
    near = dist < tau_prox * 0.5 * (diag[:, None] + diag[None, :])
    iu, ju = np.nonzero(np.triu(overlap | near, k=1))
    return [(tracks[i], tracks[j]) for i, j in zip(iu, ju)]


class UndefinedDirection(ValueError):
    pass


def line_angle(u, v) -> float:
    """Acute angle in degrees between the lines along vectors ``u`` and ``v``.

    Equivalent to |arctan((m_u - m_v) / (1 + m_u m_v))| for slopes m, but
    also defined for vertical and perpendicular directions.
    """
    cross = u[0] * v[1] - u[1] * v[0]
    dot = u[0] * v[0] + u[1] * v[1]
    if (u[0] == 0 and u[1] == 0) or (v[0] == 0 and v[1] == 0):
        raise UndefinedDirection("zero displacement")
    return math.degrees(math.atan2(abs(cross), abs(dot)))


def displacement(track: Track, mode: str = "first_observed", f: int = 30) -> Tuple[float, float]:
    x, y = track.center
    if mode == "window" and len(track.history) >= 2:
        _, x0, y0 = track.history[max(0, len(track.history) - f)]
    else:
        _, x0, y0 = track.first_observed
    return x - x0, y - y0


def approach_angle(a: Track, b: Track, mode: str = "first_observed", f: int = 30) -> float:
    """Approach angle between two tracks from their displacement since first seen."""
    return line_angle(displacement(a, mode, f), displacement(b, mode, f))


def _speeds(series: Sequence[SpeedEstimate]) -> List[float]:
    if isinstance(series, SpeedSeries):
        return series.speeds()
    return [e.speed for e in series]


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else math.nan


def speed_drop(speeds: Sequence[SpeedEstimate], rho_drop: float, k_recent: int, s_min: float) -> bool:
    """True when the pre-recent mean was substantial and the latest speed fell below (1 - rho) of it."""
    if len(speeds) < 2 or len(speeds) <= k_recent:
        return False
    values = _speeds(speeds)
    before = _mean(values[:-k_recent])
    return before >= s_min and values[-1] <= (1.0 - rho_drop) * before


def is_moving(speeds: Sequence[SpeedEstimate], label: ClassLabel, s_min: float) -> bool:
    """Vehicles and bicycles must have reached ``s_min``; pedestrians only need to be non-stalled."""
    if not len(speeds):
        return False
    if label is ClassLabel.PEDESTRIAN:
        stalled = speeds.stalled() if isinstance(speeds, SpeedSeries) else [e.stalled for e in speeds]
        return not all(stalled)
    return max(_speeds(speeds)) >= s_min


@dataclass
class ConflictDetector:
    """Per-stream conflict detector holding the pair cooldown table."""

    config: ConflictConfig = field(default_factory=ConflictConfig)
    homography: Optional[Homography] = None
    last_emitted: Dict[Tuple[int, int], int] = field(default_factory=dict)

    def in_cooldown(self, key: Tuple[int, int], frame: int) -> bool:
        last = self.last_emitted.get(key)
        return last is not None and frame - last < self.config.cooldown

    def detect(self, frame: int, tracks: Sequence[Track],
               speeds: Dict[int, Sequence[SpeedEstimate]]) -> List[ConflictEvent]:
        cfg = self.config
        events = []
        flags: Dict[int, Tuple[bool, bool]] = {}

        def motion(t: Track) -> Tuple[bool, bool]:
            # (moving, dropped), computed once per track per frame
            if t.id not in flags:
                series = speeds.get(t.id, ())
                moving = is_moving(series, t.label, cfg.s_min)
                # a pedestrian's speed profile is too noisy for the drop test
                dropped = (moving and t.label is not ClassLabel.PEDESTRIAN
                           and speed_drop(series, cfg.rho_drop, cfg.k_recent, cfg.s_min))
                flags[t.id] = (moving, dropped)
            return flags[t.id]

        for a, b in close_pairs(tracks, cfg.tau_prox):
            kind = event_type(a.label, b.label)
            if kind is None:
                continue
            key = (min(a.id, b.id), max(a.id, b.id))
            if self.in_cooldown(key, frame):
                continue
            moving_a, drop_a = motion(a)
            moving_b, drop_b = motion(b)
            if not (moving_a and moving_b and (drop_a or drop_b)):
                continue
            try:
                angle = approach_angle(a, b, cfg.angle_mode, cfg.f)
            except UndefinedDirection:
                continue
            if angle < cfg.theta_min:
                continue
            events.append(self._event(frame, a, b, kind, angle, speeds.get(a.id, ()), speeds.get(b.id, ())))
            self.last_emitted[key] = frame
        return events

    def _event(self, frame, a, b, kind, angle, sa, sb) -> ConflictEvent:
        k = self.config.k_recent
        ba, bb = a.box, b.box
        overlap = iou_matrix(boxes_to_array([ba]), boxes_to_array([bb]))[0, 0] > 0
        mx, my = (ba.x + bb.x) / 2.0, (ba.y + bb.y) / 2.0
        geo = None
        if self.homography is not None:
            try:
                geo = image_to_world(self.homography, mx, my)
            except (CalibrationError, ValueError):
                geo = None
        va, vb = _speeds(sa), _speeds(sb)
        return ConflictEvent(
            frame=frame,
            location=(mx, my),
            geo=geo,
            type=kind,
            severity=ACCIDENT if overlap else NEAR_ACCIDENT,
            participants=(a.id, b.id),
            angle=angle,
            speeds_before=(_mean(va[:-k]), _mean(vb[:-k])),
            speeds_after=(float(va[-1]), float(vb[-1])),
            classes=(a.label.value, b.label.value),
        )
