"""Per-stream pipeline: tracking, per-track speed series, conflict detection."""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional

import numpy as np

from .conflict import ConflictDetector, ConflictEvent
from .config import PipelineConfig
from .geometry import Homography, SpeedSeries, estimate_speeds
from .ingest import FrameDetections
from .tracker import StepResult, Track, Tracker


@dataclass
class FrameResult:
    """Output of one frame. ``tracks`` holds the live Track objects, which keep
    changing as later frames are processed; copy what you need before advancing."""

    frame: int
    step: StepResult
    tracks: List[Track]
    events: List[ConflictEvent]


class Pipeline:
    """Track -> speed -> conflict for one camera stream, one frame at a time.

    With ``tracking_only`` the speed and conflict stages are skipped.
    """

    def __init__(self, config: Optional[PipelineConfig] = None, homography: Optional[Homography] = None,
                 tracking_only: bool = False):
        self.config = config or PipelineConfig()
        self.homography = homography or Homography.identity()
        self.tracker = Tracker(self.config.tracker)
        self.detector = ConflictDetector(self.config.conflict, self.homography)
        self.speeds: Dict[int, SpeedSeries] = {}
        self.frame: Optional[int] = None
        self.tracking_only = tracking_only

    def _update_speeds(self, frame: int) -> None:
        f = self.config.conflict.f
        ready = [t for t in self.tracker.tracks if t.confirmed and len(t.history) >= f]
        if ready:
            windows = np.stack([t.history.last(f) for t in ready])
            estimates = estimate_speeds(windows, self.homography, self.config.speed.fps, self.config.speed.stall_px)
            for t, est in zip(ready, estimates):
                series = self.speeds.get(t.id)
                if series is None:
                    series = self.speeds[t.id] = SpeedSeries(f)
                series.append(est)
        if len(self.speeds) > len(self.tracker.tracks):
            live = {t.id for t in self.tracker.tracks}
            for tid in [k for k in self.speeds if k not in live]:
                del self.speeds[tid]

    def _process_one(self, fd: FrameDetections) -> FrameResult:
        step = self.tracker.step(fd)
        self.frame = fd.frame
        if self.tracking_only:
            return FrameResult(fd.frame, step, list(self.tracker.tracks), [])
        self._update_speeds(fd.frame)
        confirmed = self.tracker.confirmed
        events = self.detector.detect(fd.frame, confirmed, self.speeds)
        return FrameResult(fd.frame, step, list(self.tracker.tracks), events)

    def process(self, fd: FrameDetections) -> List[FrameResult]:
        """Advance to ``fd.frame``; frames missing from the stream are run as empty frames."""
        out = []
        if self.frame is not None:
            if fd.frame <= self.frame:
                raise ValueError(f"frame {fd.frame} is not after {self.frame}")
            for missing in range(self.frame + 1, fd.frame):
                out.append(self._process_one(FrameDetections(missing)))
        out.append(self._process_one(fd))
        return out

    def run(self, frames: Iterable[FrameDetections], last_frame: Optional[int] = None) -> Iterator[FrameResult]:
        for fd in frames:
            yield from self.process(fd)
        if last_frame is not None and (self.frame is None or self.frame < last_frame):
            yield from self.process(FrameDetections(last_frame))


def detect_events(frames: Iterable[FrameDetections], config: Optional[PipelineConfig] = None,
                  homography: Optional[Homography] = None, last_frame: Optional[int] = None) -> List[ConflictEvent]:
    pipe = Pipeline(config, homography)
    events = []
    for res in pipe.run(frames, last_frame):
        events.extend(res.events)
    return events


_DONE = object()


class _Failure:
    def __init__(self, exc: BaseException):
        self.exc = exc


def prefetch(items: Iterable, maxsize: int = 64) -> Iterator:
    """Iterate ``items`` from a background thread through a bounded queue, preserving order.

    Exceptions raised by the producer are re-raised in the consumer.
    """
    q: "queue.Queue" = queue.Queue(maxsize=maxsize)
    stop = threading.Event()

    def produce():
        try:
            for item in items:
                while not stop.is_set():
                    try:
                        q.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if stop.is_set():
                    return
            q.put(_DONE)
        except BaseException as exc:  # noqa: BLE001 - forwarded to the consumer
            q.put(_Failure(exc))

    worker = threading.Thread(target=produce, name="ingest", daemon=True)
    worker.start()
    try:
        while True:
            item = q.get()
            if item is _DONE:
                return
            if isinstance(item, _Failure):
                raise item.exc
            yield item
    finally:
        stop.set()
        worker.join(timeout=1.0)


def track_rows(res: FrameResult) -> Iterator[dict]:
    for t in res.tracks:
        b = t.box
        yield {
            "frame": res.frame,
            "id": t.id,
            "class": t.label.value,
            "x": round(b.x, 3),
            "y": round(b.y, 3),
            "w": round(b.w, 3),
            "h": round(b.h, 3),
            "status": t.status.value,
        }
