"""Detection data model and the line-delimited JSON detection stream.

Each record is one detection::

    {"frame": 12, "class": "vehicle", "x": 640.0, "y": 360.0,
     "w": 45.0, "h": 20.0, "conf": 0.91, "hist": [48 floats]}

``x``/``y`` are box centers in pixels (origin top-left). ``hist`` is optional.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Iterator, List, Optional, Sequence, Union

import numpy as np

HIST_BINS_PER_CHANNEL = 16
HIST_CHANNELS = 3
HIST_LENGTH = HIST_BINS_PER_CHANNEL * HIST_CHANNELS


class ClassLabel(str, Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    BICYCLE = "bicycle"

    @classmethod
    def parse(cls, name: str) -> Optional["ClassLabel"]:
        try:
            return cls(name)
        except ValueError:
            return None


class StreamError(ValueError):
    """Corrupt or unordered detection stream. ``line`` is 1-based."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def diagonal(self) -> float:
        return math.hypot(self.w, self.h)

    def corners(self):
        """(x_min, y_min, x_max, y_max)."""
        hw, hh = self.w / 2.0, self.h / 2.0
        return (self.x - hw, self.y - hh, self.x + hw, self.y + hh)

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BoundingBox":
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)


@dataclass(frozen=True)
class Detection:
    frame: int
    label: ClassLabel
    box: BoundingBox
    confidence: float = 1.0
    histogram: Optional[np.ndarray] = field(default=None, compare=False)

    def to_record(self) -> dict:
        rec = {
            "frame": self.frame,
            "class": self.label.value,
            "x": self.box.x,
            "y": self.box.y,
            "w": self.box.w,
            "h": self.box.h,
            "conf": self.confidence,
        }
        if self.histogram is not None:
            rec["hist"] = [float(v) for v in self.histogram]
        return rec


@dataclass
class FrameDetections:
    frame: int
    detections: List[Detection] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.detections)


def validate_detection(d: Detection, hist_length: int = HIST_LENGTH) -> Optional[str]:
    """Return the first violated invariant as a short string, or None if valid."""
    b = d.box
    for name, value in (("x", b.x), ("y", b.y), ("w", b.w), ("h", b.h), ("conf", d.confidence)):
        if not math.isfinite(value):
            return f"{name} finite"
    if b.w <= 0:
        return "w > 0"
    if b.h <= 0:
        return "h > 0"
    if b.x < 0:
        return "x >= 0"
    if b.y < 0:
        return "y >= 0"
    if not 0.0 <= d.confidence <= 1.0:
        return "conf in [0, 1]"
    if d.frame < 0:
        return "frame >= 0"
    if d.histogram is not None:
        hist = d.histogram
        if len(hist) != hist_length:
            return f"histogram length {hist_length}"
        if not np.all(np.isfinite(hist)) or np.any(hist < 0):
            return "histogram entries >= 0"
        if not np.any(hist > 0):
            return "histogram has a positive entry"
    return None


_REQUIRED = ("frame", "class", "x", "y", "w", "h", "conf")


def parse_record(line: str, lineno: Optional[int] = None) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise StreamError(f"invalid JSON ({exc.msg})", lineno) from None
    if not isinstance(rec, dict):
        raise StreamError("record is not an object", lineno)
    missing = [k for k in _REQUIRED if k not in rec]
    if missing:
        raise StreamError(f"missing field(s) {', '.join(missing)}", lineno)
    frame = rec["frame"]
    if isinstance(frame, bool) or not isinstance(frame, int):
        raise StreamError("frame must be an integer", lineno)
    if not isinstance(rec["class"], str):
        raise StreamError("class must be a string", lineno)
    for k in ("x", "y", "w", "h", "conf"):
        v = rec[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise StreamError(f"{k} must be a number", lineno)
    hist = rec.get("hist")
    if hist is not None and (
        not isinstance(hist, list)
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in hist)
    ):
        raise StreamError("hist must be a list of numbers", lineno)
    return rec


def record_to_detection(rec: dict, label: ClassLabel) -> Detection:
    hist = rec.get("hist")
    return Detection(
        frame=rec["frame"],
        label=label,
        box=BoundingBox(float(rec["x"]), float(rec["y"]), float(rec["w"]), float(rec["h"])),
        confidence=float(rec["conf"]),
        histogram=None if hist is None else np.asarray(hist, dtype=float),
    )


class DetectionReader:
    """Iterate a detection stream as :class:`FrameDetections`, one per frame.

    Records with an unknown class, an invariant violation, or confidence
    below ``min_confidence`` are dropped and counted. Malformed records and
    frame regressions raise :class:`StreamError`.
    """

    def __init__(self, source: Union[IO[str], IO[bytes], Iterable[str]], min_confidence: float = 0.0,
                 hist_length: int = HIST_LENGTH):
        self.source = source
        self.min_confidence = min_confidence
        self.hist_length = hist_length
        self.records = 0
        self.dropped_class = 0
        self.dropped_invalid = 0
        self.dropped_confidence = 0
        self.violations: List[tuple] = []

    @property
    def dropped(self) -> int:
        return self.dropped_class + self.dropped_invalid + self.dropped_confidence

    def _lines(self) -> Iterator[str]:
        for raw in self.source:
            if isinstance(raw, bytes):
                raw = raw.decode("utf-8")
            yield raw

    def __iter__(self) -> Iterator[FrameDetections]:
        current: Optional[FrameDetections] = None
        last_frame = -1
        for lineno, line in enumerate(self._lines(), start=1):
            if not line.strip():
                continue
            rec = parse_record(line, lineno)
            self.records += 1
            frame = rec["frame"]
            if frame < last_frame:
                raise StreamError(f"frame index regressed from {last_frame} to {frame}", lineno)
            label = ClassLabel.parse(rec["class"])
            if frame != last_frame:
                if current is not None and current.detections:
                    yield current
                current = FrameDetections(frame)
                last_frame = frame
            if label is None:
                self.dropped_class += 1
                continue
            det = record_to_detection(rec, label)
            problem = validate_detection(det, self.hist_length)
            if problem is not None:
                self.dropped_invalid += 1
                self.violations.append((lineno, problem))
                continue
            if det.confidence < self.min_confidence:
                self.dropped_confidence += 1
                continue
            current.detections.append(det)
        if current is not None and current.detections:
            yield current


def read_stream(source, min_confidence: float = 0.0, hist_length: int = HIST_LENGTH) -> DetectionReader:
    """Wrap ``source`` (file object, bytes stream or iterable of lines) in a reader."""
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(bytes(source))
    elif isinstance(source, str):
        source = io.StringIO(source)
    return DetectionReader(source, min_confidence=min_confidence, hist_length=hist_length)


def format_record(rec: dict, ndigits: Optional[int] = None) -> str:
    if ndigits is not None:
        rec = {k: _round(v, ndigits) for k, v in rec.items()}
    return json.dumps(rec, separators=(",", ":"))


def _round(v, ndigits):
    if isinstance(v, float):
        return round(v, ndigits)
    if isinstance(v, list):
        return [round(x, ndigits) if isinstance(x, float) else x for x in v]
    return v


def write_stream(frames: Iterable[FrameDetections], out: IO[str], ndigits: Optional[int] = None) -> int:
    """Serialize frames as one JSON record per line. Returns the record count."""
    n = 0
    for fd in frames:
        for det in fd.detections:
            out.write(format_record(det.to_record(), ndigits))
            out.write("\n")
            n += 1
    return n


def serialize(frames: Sequence[FrameDetections], ndigits: Optional[int] = None) -> str:
    buf = io.StringIO()
    write_stream(frames, buf, ndigits)
    return buf.getvalue()
