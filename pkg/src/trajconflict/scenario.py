"""Synthetic detection streams with scripted trajectories and labelled conflicts.

Actors move piecewise-linearly between ``(frame, x, y)`` waypoints and exist
only between their first and last waypoint frames. The synthetic camera is
a top-down view at 10 px per metre, so a vehicle at 40 km/h moves about
3.7 px per frame at 30 fps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import KM_PER_DEG, Homography
from .ingest import HIST_LENGTH, BoundingBox, ClassLabel, Detection, FrameDetections

PX_PER_M = 10.0
FPS = 30.0
ORIGIN = (40.7423, -74.1793)  # lat, lon of the image origin

VEHICLE_H = (46.0, 20.0)  # eastbound/westbound footprint
VEHICLE_V = (20.0, 46.0)
BICYCLE_V = (10.0, 22.0)
PEDESTRIAN = (10.0, 12.0)


def kmh_to_px_per_frame(kmh: float, fps: float = FPS) -> float:
    return kmh / 3.6 * PX_PER_M / fps


def synthetic_homography(origin: Tuple[float, float] = ORIGIN, px_per_m: float = PX_PER_M) -> Homography:
    """Top-down camera: +x is east, +y is south, ``px_per_m`` pixels per metre."""
    lat0, lon0 = origin
    deg_per_px_lat = 1e-3 / px_per_m / KM_PER_DEG
    deg_per_px_lon = deg_per_px_lat / math.cos(math.radians(lat0))
    H_inv = np.array([
        [0.0, -deg_per_px_lat, lat0],
        [deg_per_px_lon, 0.0, lon0],
        [0.0, 0.0, 1.0],
    ])
    return Homography.from_inverse(H_inv)


class ScenarioError(ValueError):
    pass


@dataclass
class ScriptedActor:
    label: ClassLabel
    waypoints: List[Tuple[int, float, float]]
    size: Tuple[float, float] = VEHICLE_H
    hist_seed: int = 0
    dropout: float = 0.05
    jitter: float = 1.0
    hidden: List[Tuple[int, int]] = field(default_factory=list)
    histogram: Optional[List[float]] = None

    def __post_init__(self):
        self.label = ClassLabel(self.label)
        self.waypoints = [(int(f), float(x), float(y)) for f, x, y in self.waypoints]
        self.size = (float(self.size[0]), float(self.size[1]))
        self.hidden = [(int(a), int(b)) for a, b in self.hidden]
        frames = [w[0] for w in self.waypoints]
        if not frames:
            raise ScenarioError("actor needs at least one waypoint")
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ScenarioError("waypoint frames must be strictly increasing")
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ScenarioError("actor size must be positive")
        if not 0.0 <= self.dropout <= 1.0:
            raise ScenarioError("dropout must lie in [0, 1]")
        if self.jitter < 0:
            raise ScenarioError("jitter must be non-negative")
        if self.histogram is not None and len(self.histogram) != HIST_LENGTH:
            raise ScenarioError(f"histogram must have {HIST_LENGTH} bins")

    @property
    def span(self) -> Tuple[int, int]:
        return self.waypoints[0][0], self.waypoints[-1][0]

    def position(self, frame: int) -> Optional[Tuple[float, float]]:
        """Noise-free center at ``frame`` or None outside the actor's lifetime."""
        wp = self.waypoints
        if frame < wp[0][0] or frame > wp[-1][0]:
            return None
        for (f0, x0, y0), (f1, x1, y1) in zip(wp, wp[1:]):
            if f0 <= frame <= f1:
                t = (frame - f0) / (f1 - f0)
                return x0 + t * (x1 - x0), y0 + t * (y1 - y0)
        return wp[0][1], wp[0][2]

    def visible(self, frame: int) -> bool:
        return not any(a <= frame <= b for a, b in self.hidden)

    def base_histogram(self) -> np.ndarray:
        if self.histogram is not None:
            return np.asarray(self.histogram, dtype=float)
        rng = np.random.default_rng(self.hist_seed)
        return rng.gamma(0.5, 1.0, HIST_LENGTH) * 100.0

    def to_dict(self) -> dict:
        return {
            "class": self.label.value,
            "waypoints": [list(w) for w in self.waypoints],
            "size": list(self.size),
            "hist_seed": self.hist_seed,
            "dropout": self.dropout,
            "jitter": self.jitter,
            "hidden": [list(h) for h in self.hidden],
            "histogram": self.histogram,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScriptedActor":
        d = dict(d)
        d["label"] = d.pop("class")
        return cls(**d)


@dataclass
class GroundTruthEvent:
    start: int
    end: int
    type: str
    participants: Tuple[int, int]
    severity: Optional[str] = None

    def __post_init__(self):
        if self.end < self.start:
            raise ScenarioError("truth event ends before it starts")
        if self.type not in ("V2V", "V2P", "V2B"):
            raise ScenarioError(f"unknown conflict type {self.type!r}")
        self.participants = tuple(self.participants)

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "type": self.type,
                "participants": list(self.participants), "severity": self.severity}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruthEvent":
        return cls(**d)


def render(actors: Sequence[ScriptedActor], duration: int, seed: int = 0) -> List[FrameDetections]:
    """Detections for frames ``0 .. duration-1``. Pure function of its arguments."""
    rng = np.random.default_rng(seed)
    bases = [a.base_histogram() for a in actors]
    frames = []
    for frame in range(duration):
        dets = []
        for actor, base in zip(actors, bases):
            pos = actor.position(frame)
            if pos is None or not actor.visible(frame):
                continue
            if actor.dropout > 0 and rng.random() < actor.dropout:
                continue
            x, y = pos
            if actor.jitter > 0:
                jx, jy = rng.uniform(-actor.jitter, actor.jitter, 2)
                x, y = x + jx, y + jy
            hist = np.clip(base * (1.0 + 0.05 * rng.standard_normal(HIST_LENGTH)), 0.0, None)
            conf = float(rng.uniform(0.6, 0.99))
            w, h = actor.size
            dets.append(Detection(frame, actor.label, BoundingBox(max(x, 0.0), max(y, 0.0), w, h), conf, hist))
        if dets:
            frames.append(FrameDetections(frame, dets))
    return frames


@dataclass
class Scenario:
    name: str
    duration: int
    actors: List[ScriptedActor]
    truth: List[GroundTruthEvent] = field(default_factory=list)
    seed: int = 0
    description: str = ""

    def __post_init__(self):
        for ev in self.truth:
            if ev.start < 0 or ev.end >= self.duration:
                raise ScenarioError(f"{self.name}: truth range [{ev.start}, {ev.end}] outside duration {self.duration}")
            for p in ev.participants:
                if not 0 <= p < len(self.actors):
                    raise ScenarioError(f"{self.name}: truth participant {p} is not an actor index")

    def render(self, seed: Optional[int] = None) -> Tuple[List[FrameDetections], List[GroundTruthEvent]]:
        return render(self.actors, self.duration, self.seed if seed is None else seed), list(self.truth)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "duration": self.duration,
            "seed": self.seed,
            "description": self.description,
            "actors": [a.to_dict() for a in self.actors],
            "truth": [t.to_dict() for t in self.truth],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        unknown = set(d) - {"name", "duration", "seed", "description", "actors", "truth"}
        if unknown:
            raise ScenarioError(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
        try:
            actors = []
            for i, a in enumerate(d["actors"]):
                try:
                    actors.append(ScriptedActor.from_dict(a))
                except (TypeError, ValueError, KeyError) as exc:
                    raise ScenarioError(f"actors[{i}]: {exc}") from None
            truth = []
            for i, t in enumerate(d.get("truth", [])):
                try:
                    truth.append(GroundTruthEvent.from_dict(t))
                except (TypeError, ValueError) as exc:
                    raise ScenarioError(f"truth[{i}]: {exc}") from None
            return cls(name=d["name"], duration=int(d["duration"]), actors=actors, truth=truth,
                       seed=int(d.get("seed", 0)), description=d.get("description", ""))
        except KeyError as exc:
            raise ScenarioError(f"missing scenario key {exc}") from None


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        try:
            return Scenario.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc.msg})") from None


def truth_manifest(scenario: Scenario) -> dict:
    return {
        "scenario": scenario.name,
        "duration": scenario.duration,
        "fps": FPS,
        "events": [t.to_dict() for t in scenario.truth],
    }


def manifest_events(manifest: dict) -> List[GroundTruthEvent]:
    return [GroundTruthEvent.from_dict(e) for e in manifest.get("events", [])]


# -- builtin suite ----------------------------------------------------------

def _straight(start_frame: int, start: Tuple[float, float], stop: Tuple[float, float], kmh: float,
              hold_until: Optional[int] = None) -> List[Tuple[int, float, float]]:
    """Constant-speed leg from ``start`` to ``stop`` then an optional stationary hold."""
    dist = math.hypot(stop[0] - start[0], stop[1] - start[1])
    frames = max(1, round(dist / kmh_to_px_per_frame(kmh)))
    wp = [(start_frame, *start), (start_frame + frames, *stop)]
    if hold_until is not None and hold_until > start_frame + frames:
        wp.append((hold_until, *stop))
    return wp


def _arriving(at_frame: int, stop: Tuple[float, float], heading: Tuple[float, float], kmh: float,
              distance: float, hold_until: Optional[int] = None) -> List[Tuple[int, float, float]]:
    """Leg that reaches ``stop`` at ``at_frame`` after travelling ``distance`` px along ``heading``."""
    frames = round(distance / kmh_to_px_per_frame(kmh))
    start = (stop[0] - heading[0] * distance, stop[1] - heading[1] * distance)
    wp = [(at_frame - frames, *start), (at_frame, *stop)]
    if hold_until is not None:
        wp.append((hold_until, *stop))
    return wp


EAST, WEST, SOUTH, NORTH = (1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)


def _stripes(phase: int) -> List[float]:
    return [10.0 if (i + phase) % 2 == 0 else 0.0 for i in range(HIST_LENGTH)]


def v2v_collision() -> Scenario:
    t = 150
    actors = [
        ScriptedActor(ClassLabel.VEHICLE, _arriving(t, (615, 360), EAST, 40, 500, 299), VEHICLE_H, hist_seed=11),
        ScriptedActor(ClassLabel.VEHICLE, _arriving(t, (640, 340), SOUTH, 40, 300, 299), VEHICLE_V, hist_seed=12),
    ]
    return Scenario("v2v_right_angle_collision", 300, actors,
                    [GroundTruthEvent(t, t + 45, "V2V", (0, 1), "accident")], seed=101,
                    description="eastbound and southbound vehicles collide at right angles and stop")


def v2v_near_miss() -> Scenario:
    t = 150
    actors = [
        ScriptedActor(ClassLabel.VEHICLE, _arriving(t, (590, 360), EAST, 40, 480, 299), VEHICLE_H, hist_seed=21),
        ScriptedActor(ClassLabel.VEHICLE, _arriving(t, (640, 318), SOUTH, 40, 270, 299), VEHICLE_V, hist_seed=22),
    ]
    return Scenario("v2v_near_miss", 300, actors,
                    [GroundTruthEvent(t, t + 45, "V2V", (0, 1), "near_accident")], seed=102,
                    description="two vehicles brake hard and stop a car-length short of contact")


def v2b_conflict() -> Scenario:
    t = 150
    actors = [
        ScriptedActor(ClassLabel.VEHICLE, _arriving(t, (615, 360), EAST, 38, 480, 299), VEHICLE_H, hist_seed=31),
        ScriptedActor(ClassLabel.BICYCLE, _arriving(t, (640, 352), SOUTH, 28, 290, 299), BICYCLE_V, hist_seed=32),
    ]
    return Scenario("v2b_conflict", 300, actors,
                    [GroundTruthEvent(t, t + 45, "V2B", (0, 1), "accident")], seed=103,
                    description="vehicle strikes a southbound cyclist; both come to rest")


def v2p_crossing() -> Scenario:
    t = 150
    actors = [
        ScriptedActor(ClassLabel.VEHICLE, _arriving(t, (615, 360), EAST, 35, 480, 299), VEHICLE_H, hist_seed=41),
        ScriptedActor(ClassLabel.PEDESTRIAN, _arriving(t, (642, 362), SOUTH, 5, 65, 299), PEDESTRIAN, hist_seed=42),
    ]
    return Scenario("v2p_crossing", 300, actors,
                    [GroundTruthEvent(t, t + 45, "V2P", (0, 1), "accident")], seed=104,
                    description="vehicle strikes a pedestrian on the crosswalk")


def parallel_passing() -> Scenario:
    actors = [
        # brakes to a stop line while its neighbour keeps going in the next lane
        ScriptedActor(ClassLabel.VEHICLE, _straight(0, (80, 340), (560, 340), 40, 299), VEHICLE_H, hist_seed=51),
        ScriptedActor(ClassLabel.VEHICLE, _straight(20, (60, 380), (1200, 380), 45), VEHICLE_H, hist_seed=52),
        ScriptedActor(ClassLabel.VEHICLE, _straight(0, (1200, 300), (100, 300), 40), VEHICLE_H, hist_seed=53),
    ]
    return Scenario("parallel_passing", 300, actors, [], seed=105,
                    description="same- and opposite-direction passing, one car stopping at a line")


def queued_stop() -> Scenario:
    actors = [
        ScriptedActor(ClassLabel.VEHICLE, _straight(0, (300, 360), (580, 360), 35, 299), VEHICLE_H, hist_seed=61),
        ScriptedActor(ClassLabel.VEHICLE, _straight(20, (200, 360), (524, 360), 35, 299), VEHICLE_H, hist_seed=62),
        ScriptedActor(ClassLabel.VEHICLE, _straight(40, (110, 360), (468, 360), 35, 299), VEHICLE_H, hist_seed=63),
    ]
    return Scenario("queued_stop", 300, actors, [], seed=106,
                    description="three vehicles queue up behind a stop line")


def occlusion_gap() -> Scenario:
    actors = [
        ScriptedActor(ClassLabel.VEHICLE, _straight(0, (80, 360), (1180, 360), 40), VEHICLE_H, hist_seed=71,
                      dropout=0.0, hidden=[(120, 128)]),
        ScriptedActor(ClassLabel.PEDESTRIAN, _straight(0, (300, 640), (400, 640), 5), PEDESTRIAN, hist_seed=72),
    ]
    return Scenario("occlusion_gap", 300, actors, [], seed=107,
                    description="vehicle disappears behind an obstruction for 9 frames")


def identity_crossing() -> Scenario:
    actors = [
        ScriptedActor(ClassLabel.VEHICLE, _arriving(150, (640, 360), EAST, 40, 500) +
                      [(270, 640 + 120 * kmh_to_px_per_frame(40), 360)], VEHICLE_H,
                      histogram=_stripes(0), dropout=0.0),
        ScriptedActor(ClassLabel.VEHICLE, _arriving(156, (640, 360), SOUTH, 40, 320) +
                      [(276, 640, 360 + 120 * kmh_to_px_per_frame(40))], VEHICLE_V,
                      histogram=_stripes(1), dropout=0.0),
    ]
    return Scenario("identity_crossing", 300, actors, [], seed=108,
                    description="two vehicles with opposite colour histograms cross through one point")


def stalled_vehicle() -> Scenario:
    actors = [
        ScriptedActor(ClassLabel.VEHICLE, [(0, 700, 300), (299, 700, 300)], VEHICLE_V, hist_seed=91),
        ScriptedActor(ClassLabel.VEHICLE, _straight(10, (120, 330), (660, 330), 40, 299), VEHICLE_H, hist_seed=92),
    ]
    return Scenario("stalled_vehicle", 300, actors, [], seed=109,
                    description="a car pulls up beside a parked vehicle and stops")


def dense_scene(n_lanes: int = 6, per_lane: int = 7, n_peds: int = 8, duration: int = 300) -> Scenario:
    actors = []
    seed = 1000
    lane_ys = [180, 230, 280, 440, 490, 540][:n_lanes]
    for li, y in enumerate(lane_ys):
        eastbound = li < 3
        speed = 1.6 + 0.35 * (li % 3)
        for k in range(per_lane):
            x0 = 40 + 95 * k + 15 * (li % 2)
            if not eastbound:
                x0 = 1240 - x0
            travel = speed * (duration - 1)
            x1 = x0 + travel if eastbound else x0 - travel
            actors.append(ScriptedActor(ClassLabel.VEHICLE, [(0, x0, y), (duration - 1, x1, y)], VEHICLE_H,
                                        hist_seed=seed))
            seed += 1
    for k in range(n_peds):
        y = 90 if k % 2 == 0 else 640
        x0 = 100 + 130 * k
        actors.append(ScriptedActor(ClassLabel.PEDESTRIAN, [(0, x0, y), (duration - 1, x0 + 120, y)], PEDESTRIAN,
                                    hist_seed=seed))
        seed += 1
    return Scenario("dense_50_actors", duration, actors, [], seed=110,
                    description=f"{len(actors)} road-users in parallel lanes and sidewalks")


def builtin_suite() -> List[Scenario]:
    return [
        v2v_collision(),
        v2v_near_miss(),
        v2b_conflict(),
        v2p_crossing(),
        parallel_passing(),
        queued_stop(),
        occlusion_gap(),
        identity_crossing(),
        stalled_vehicle(),
        dense_scene(),
    ]


def builtin_names() -> List[str]:
    return [s.name for s in builtin_suite()]


def get_builtin(name: str) -> Scenario:
    for s in builtin_suite():
        if s.name == name:
            return s
    raise ScenarioError(f"unknown scenario {name!r}; available: {', '.join(builtin_names())}")
