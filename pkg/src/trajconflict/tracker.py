"""Multi-object tracker: per-track Kalman filters joined by Hungarian assignment.

Association runs over the weighted four-term cost from :mod:`costs`. Only
same-class pairs may match, and a matched pair whose cost is above
``tau_d`` is split back into an unmatched track and a new-track seed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from . import kalman
from .assignment import hungarian_assign
from .costs import CostWeights, boxes_to_array, cost_matrix
from .ingest import BoundingBox, ClassLabel, Detection, FrameDetections
from .kalman import KalmanNoise, KalmanState


class TrackStatus(str, enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


@dataclass
class TrackerConfig:
    weights: CostWeights = field(default_factory=CostWeights)
    tau_d: float = 0.6
    min_hits: int = 3
    max_age: int = 10
    hist_alpha: float = 0.9
    history_len: int = 64
    kalman: KalmanNoise = field(default_factory=KalmanNoise)

    def __post_init__(self):
        if not self.tau_d >= 0:
            raise ValueError("tau_d must be non-negative")
        if self.min_hits < 1 or self.max_age < 0:
            raise ValueError("min_hits must be >= 1 and max_age >= 0")
        if not 0.0 <= self.hist_alpha <= 1.0:
            raise ValueError("hist_alpha must lie in [0, 1]")
        if self.history_len < 2:
            raise ValueError("history_len must be >= 2")


class History:
    """Fixed-capacity ring buffer of ``(frame, x, y)`` rows, oldest first.

    Rows are written twice, ``capacity`` apart, so the newest ``n`` rows are
    always one contiguous slice.
    """

    def __init__(self, capacity: int = 64):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self._cap = capacity
        self._buf = np.empty((2 * capacity, 3))
        self._end = 0  # one past the newest row, in [capacity, 2 * capacity) once full
        self._len = 0

    @property
    def capacity(self) -> int:
        return self._cap

    def __len__(self) -> int:
        return self._len

    def append(self, row) -> None:
        if self._len and row[0] <= self._buf[self._end - 1, 0]:
            raise ValueError(f"history frame {row[0]} is not after the previous entry")
        cap = self._cap
        i = self._end % cap
        self._buf[i] = row
        self._buf[i + cap] = row
        self._len = min(self._len + 1, cap)
        self._end = i + 1 + (cap if self._len == cap else 0)

    def last(self, n: int) -> np.ndarray:
        """Newest ``n`` rows as an (n, 3) array in chronological order."""
        n = min(n, self._len)
        return self._buf[self._end - n:self._end]

    def __getitem__(self, i: int) -> Tuple[int, float, float]:
        if i < 0:
            i += self._len
        if not 0 <= i < self._len:
            raise IndexError(i)
        f, x, y = self._buf[self._end - self._len + i]
        return int(f), float(x), float(y)

    def __iter__(self) -> Iterator[Tuple[int, float, float]]:
        for i in range(self._len):
            yield self[i]


@dataclass
class Track:
    id: int
    label: ClassLabel
    state: KalmanState
    first_observed: Tuple[int, float, float]
    histogram: Optional[np.ndarray] = None
    hits: int = 1
    misses: int = 0
    status: TrackStatus = TrackStatus.TENTATIVE
    history: History = field(default_factory=History)

    @property
    def center(self) -> Tuple[float, float]:
        return self.state.x, self.state.y

    @property
    def box(self) -> BoundingBox:
        return self.state.box()

    @property
    def confirmed(self) -> bool:
        return self.status is TrackStatus.CONFIRMED

    @property
    def alive(self) -> bool:
        return self.status is not TrackStatus.DELETED


@dataclass
class AssociationResult:
    matches: List[Tuple[int, int, float]] = field(default_factory=list)
    unmatched_tracks: List[int] = field(default_factory=list)
    unmatched_detections: List[int] = field(default_factory=list)


def build_cost_matrix(tracks: List[Track], dets: List[Detection], weights: CostWeights,
                      track_boxes: Optional[np.ndarray] = None) -> np.ndarray:
    """Full (tracks x detections) cost with cross-class entries set to +inf."""
    n, m = len(tracks), len(dets)
    if n == 0 or m == 0:
        return np.zeros((n, m))
    if track_boxes is None:
        track_boxes = boxes_to_array([t.box for t in tracks])
    db = boxes_to_array([d.box for d in dets])
    t_has = np.array([t.histogram is not None for t in tracks])
    d_has = np.array([d.histogram is not None for d in dets])
    th = dh = None
    if t_has.any() and d_has.any():
        # placeholder rows for missing histograms; their appearance term is masked out
        flat = np.ones(len(next(t.histogram for t in tracks if t.histogram is not None)))
        th = np.stack([t.histogram if t.histogram is not None else flat for t in tracks])
        dh = np.stack([d.histogram if d.histogram is not None else flat for d in dets])
    cost = cost_matrix(track_boxes, db, weights, th, dh, t_has, d_has)
    t_cls = np.array([_CLASS_CODE[t.label] for t in tracks])
    d_cls = np.array([_CLASS_CODE[d.label] for d in dets])
    cost[t_cls[:, None] != d_cls[None, :]] = np.inf
    return cost


_CLASS_CODE = {label: i for i, label in enumerate(ClassLabel)}


def associate(tracks: List[Track], frame: FrameDetections, weights: CostWeights, tau_d: float,
              track_boxes: Optional[np.ndarray] = None) -> AssociationResult:
    """Match predicted tracks to this frame's detections."""
    dets = frame.detections
    cost = build_cost_matrix(tracks, dets, weights, track_boxes)
    result = AssociationResult()
    pairs = []
    if cost.size:
        # gated entries become a finite sentinel above tau_d so they are always demoted
        sentinel = max(tau_d, 1.0) + 1.0
        finite = np.where(np.isfinite(cost), cost, sentinel)
        pairs = hungarian_assign(finite, pad_value=sentinel)
    matched_t, matched_d = set(), set()
    for r, c in pairs:
        if cost[r, c] <= tau_d:
            result.matches.append((tracks[r].id, c, float(cost[r, c])))
            matched_t.add(r)
            matched_d.add(c)
    result.unmatched_tracks = [t.id for i, t in enumerate(tracks) if i not in matched_t]
    result.unmatched_detections = [j for j in range(len(dets)) if j not in matched_d]
    return result


@dataclass
class StepResult:
    frame: int
    updated: List[Track]
    new: List[Track]
    deleted: List[int]
    association: AssociationResult


class Tracker:
    """Stateful tracker for one stream; call :meth:`step` once per frame in order."""

    def __init__(self, config: Optional[TrackerConfig] = None):
        self.config = config or TrackerConfig()
        self.tracks: List[Track] = []
        self.frame: Optional[int] = None
        self._next_id = 1
        self._Q = self.config.kalman.Q
        self._R = self.config.kalman.R

    def _spawn(self, det: Detection) -> Track:
        t = Track(
            id=self._next_id,
            label=det.label,
            state=kalman.initiate(det.box, self.config.kalman),
            first_observed=(det.frame, det.box.x, det.box.y),
            histogram=None if det.histogram is None else np.array(det.histogram, dtype=float),
            history=History(self.config.history_len),
        )
        if t.hits >= self.config.min_hits:
            t.status = TrackStatus.CONFIRMED
        self._next_id += 1
        return t

    def step(self, frame: FrameDetections) -> StepResult:
        """Advance to ``frame``. Skipped frame indices are stepped as empty frames first."""
        if self.frame is not None and frame.frame <= self.frame:
            raise ValueError(f"frame {frame.frame} is not after {self.frame}")
        if self.frame is not None:
            for missing in range(self.frame + 1, frame.frame):
                self._step(FrameDetections(missing))
        return self._step(frame)

    def _step(self, frame: FrameDetections) -> StepResult:
        cfg = self.config
        self.frame = frame.frame
        tracks = self.tracks
        boxes = None
        if tracks:
            means = np.stack([t.state.mean for t in tracks])
            covs = np.stack([t.state.cov for t in tracks])
            means, covs = kalman.predict_many(means, covs, self._Q)
            boxes = kalman.boxes_from_means(means)

        result = associate(tracks, frame, cfg.weights, cfg.tau_d, boxes)
        index: Dict[int, int] = {t.id: i for i, t in enumerate(tracks)}
        updated = []
        if result.matches:
            rows = np.array([index[tid] for tid, _, _ in result.matches])
            z = np.array([kalman.measurement(frame.detections[j].box) for _, j, _ in result.matches])
            um, uc = kalman.update_many(means[rows], covs[rows], z, self._R)
            means[rows] = um
            covs[rows] = uc
        for i, t in enumerate(tracks):
            t.state = KalmanState(means[i], covs[i])
        for tid, j, _ in result.matches:
            t = tracks[index[tid]]
            det = frame.detections[j]
            if det.histogram is not None:
                if t.histogram is None:
                    t.histogram = np.array(det.histogram, dtype=float)
                else:
                    t.histogram = cfg.hist_alpha * t.histogram + (1.0 - cfg.hist_alpha) * det.histogram
            t.hits += 1
            t.misses = 0
            updated.append(t)
        for tid in result.unmatched_tracks:
            tracks[index[tid]].misses += 1

        new = [self._spawn(frame.detections[j]) for j in result.unmatched_detections]
        self.tracks.extend(new)

        deleted = []
        live = []
        for t in self.tracks:
            if t.misses > cfg.max_age:
                t.status = TrackStatus.DELETED
                deleted.append(t.id)
                continue
            if t.status is TrackStatus.TENTATIVE and t.hits >= cfg.min_hits:
                t.status = TrackStatus.CONFIRMED
            t.history.append((frame.frame, t.state.x, t.state.y))
            live.append(t)
        self.tracks = live
        return StepResult(frame.frame, updated, new, deleted, result)

    @property
    def confirmed(self) -> List[Track]:
        return [t for t in self.tracks if t.status is TrackStatus.CONFIRMED]

    @property
    def started(self) -> int:
        """Number of track ids issued so far."""
        return self._next_id - 1

