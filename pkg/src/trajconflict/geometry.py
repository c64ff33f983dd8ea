"""Image-to-world calibration and world-frame speed estimation.

The homography ``H`` maps world (lat, lon) to image pixels; pixels are taken
back to the ground plane with ``H^-1``. Latitude/longitude are treated as
planar coordinates, which only holds over an intersection-sized patch.
"""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0
KM_PER_DEG = EARTH_RADIUS_KM * math.pi / 180.0
AT_INFINITY_EPS = 1e-12
RESIDUAL_WARN = 1e-6


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0 and -180.0 <= self.lon <= 180.0):
            raise ValueError(f"invalid geo point ({self.lat}, {self.lon})")


class Homography:
    """3x3 world->image projective map and its inverse."""

    def __init__(self, H, H_inv=None, residual: Optional[float] = None):
        H = np.asarray(H, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(H)):
            raise CalibrationError("homography has non-finite entries")
        if abs(np.linalg.det(H)) < 1e-300 or np.linalg.matrix_rank(H) < 3:
            raise CalibrationError("homography is singular")
        self.H = H
        self.H_inv = np.linalg.inv(H) if H_inv is None else np.asarray(H_inv, dtype=float).reshape(3, 3)
        self.residual = residual

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def from_inverse(cls, H_inv) -> "Homography":
        """Build from the image->world matrix, which is what is usually known exactly."""
        H_inv = np.asarray(H_inv, dtype=float).reshape(3, 3)
        return cls(np.linalg.inv(H_inv), H_inv)

    def world_to_image(self, lat: float, lon: float) -> Tuple[float, float]:
        u, v, w = self.H @ (lat, lon, 1.0)
        if abs(w) < AT_INFINITY_EPS:
            raise CalibrationError(f"world point ({lat}, {lon}) maps to infinity")
        return u / w, v / w

    def to_dict(self) -> dict:
        return {"H": [float(v) for v in self.H.ravel()]}


def image_to_world_xy(Hm: Homography, px: float, py: float) -> Tuple[float, float]:
    a, b, w = Hm.H_inv @ (px, py, 1.0)
    if abs(w) < AT_INFINITY_EPS:
        raise CalibrationError(f"pixel ({px}, {py}) lies outside the calibrated plane")
    return a / w, b / w


def image_to_world(Hm: Homography, px: float, py: float) -> GeoPoint:
    lat, lon = image_to_world_xy(Hm, px, py)
    return GeoPoint(lat, lon)


def _normalizer(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = math.sqrt(2) / d if d > 0 else 1.0
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1]])


def fit_homography(world: Sequence[Tuple[float, float]], image: Sequence[Tuple[float, float]]) -> Homography:
    """Normalised DLT fit of the world->image map from >= 4 correspondences.

    ``residual`` on the result is the RMS transfer error in normalised
    image coordinates.
    """
    src = np.asarray(world, dtype=float)
    dst = np.asarray(image, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise CalibrationError("point lists must be matching (n, 2) arrays")
    if len(src) < 4:
        raise CalibrationError(f"need at least 4 point pairs, got {len(src)}")
    Ts, Td = _normalizer(src), _normalizer(dst)
    s = (Ts @ np.c_[src, np.ones(len(src))].T).T
    d = (Td @ np.c_[dst, np.ones(len(dst))].T).T
    rows = []
    for (x, y, _), (u, v, _) in zip(s, d):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    _, sv, vt = np.linalg.svd(np.asarray(rows))
    Hn = vt[-1].reshape(3, 3)
    proj = (Hn @ s.T).T
    if np.any(np.abs(proj[:, 2]) < AT_INFINITY_EPS):
        raise CalibrationError("degenerate point configuration")
    proj = proj[:, :2] / proj[:, 2:]
    residual = float(np.sqrt(np.mean(np.sum((proj - d[:, :2]) ** 2, axis=1))))
    H = np.linalg.inv(Td) @ Hn @ Ts
    H /= H[2, 2] if abs(H[2, 2]) > 1e-12 else np.linalg.norm(H)
    # the image->world inverse composed in normalised space is better conditioned
    H_inv = np.linalg.inv(Ts) @ np.linalg.inv(Hn) @ Td
    if residual > RESIDUAL_WARN:
        logger.warning("homography fit residual %.3g exceeds %.0e (normalised units)", residual, RESIDUAL_WARN)
    return Homography(H, H_inv / H_inv[2, 2] if abs(H_inv[2, 2]) > 1e-12 else H_inv, residual=residual)


def load_calibration(data) -> Homography:
    """Parse ``{"H": [9 floats]}`` or ``{"points": [{px, py, lat, lon}, ...]}``."""
    if not isinstance(data, dict):
        raise CalibrationError("calibration must be a JSON object")
    if "H" in data:
        h = data["H"]
        if not isinstance(h, list) or len(h) != 9:
            raise CalibrationError("'H' must be a list of 9 numbers (row-major)")
        return Homography(h)
    if "points" in data:
        pts = data["points"]
        try:
            world = [(float(p["lat"]), float(p["lon"])) for p in pts]
            image = [(float(p["px"]), float(p["py"])) for p in pts]
        except (KeyError, TypeError, ValueError) as exc:
            raise CalibrationError(f"bad calibration point: {exc}") from None
        return fit_homography(world, image)
    raise CalibrationError("calibration needs an 'H' or a 'points' key")


def read_calibration(path) -> Homography:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CalibrationError(f"{path}: invalid JSON ({exc.msg})") from None
    return load_calibration(data)


def haversine_km(p: GeoPoint, q: GeoPoint) -> float:
    phi_p, phi_q = math.radians(p.lat), math.radians(q.lat)
    dphi = phi_q - phi_p
    dlam = math.radians(q.lon - p.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi_p) * math.cos(phi_q) * math.sin(dlam / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, h)))


def speed_kmh(distance_km: float, fps: float, window: int) -> float:
    return distance_km * 3600.0 * fps / window


@dataclass(frozen=True)
class SpeedEstimate:
    speed: float
    window: int
    p: Optional[GeoPoint]
    q: Optional[GeoPoint]
    stalled: bool
    frame: Optional[int] = None


class SpeedSeries:
    """Most recent ``maxlen`` speed estimates of one track.

    Speeds and stall flags are mirrored as plain floats/bools; the gating
    checks run on them every frame and the windows are short.
    """

    def __init__(self, maxlen: int, estimates: Iterable[SpeedEstimate] = ()):
        self.maxlen = maxlen
        self._items: "deque[SpeedEstimate]" = deque(maxlen=maxlen)
        self._speed: "deque[float]" = deque(maxlen=maxlen)
        self._stalled: "deque[bool]" = deque(maxlen=maxlen)
        for e in estimates:
            self.append(e)

    def append(self, est: SpeedEstimate) -> None:
        self._items.append(est)
        self._speed.append(est.speed)
        self._stalled.append(est.stalled)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def speeds(self) -> List[float]:
        return list(self._speed)

    def stalled(self) -> List[bool]:
        return list(self._stalled)


class InsufficientHistory(ValueError):
    pass


def half_window_centers(centers: np.ndarray, f: int) -> Tuple[np.ndarray, np.ndarray]:
    """Mean of the first floor(f/2) and last ceil(f/2) of the newest ``f`` centers."""
    if len(centers) < f:
        raise InsufficientHistory(f"need {f} history entries, have {len(centers)}")
    win = centers[len(centers) - f:]
    half = f // 2
    return win[:half].mean(axis=0), win[half:].mean(axis=0)


def estimate_speed(history: Iterable, H: Homography, f: int, fps: float, stall_px: float) -> SpeedEstimate:
    """Speed in km/h over the newest ``f`` entries of ``history``.

    ``history`` holds ``(frame, x, y)`` rows (a track's history deque works).
    When the two half-window mean centers are less than ``stall_px`` apart the
    object counts as stalled and the speed is 0.
    """
    if f < 2:
        raise ValueError("window f must be at least 2")
    if hasattr(history, "last"):
        if len(history) < f:
            raise InsufficientHistory(f"need {f} history entries, have {len(history)}")
        arr = history.last(f)
    else:
        rows = list(history)
        if len(rows) < f:
            raise InsufficientHistory(f"need {f} history entries, have {len(rows)}")
        arr = np.asarray(rows[len(rows) - f:], dtype=float)
    first, second = half_window_centers(arr[:, 1:3], f)
    frame = int(arr[-1, 0])
    if math.hypot(*(second - first)) < stall_px:
        return SpeedEstimate(0.0, f, None, None, True, frame)
    p = image_to_world(H, *first)
    q = image_to_world(H, *second)
    return SpeedEstimate(speed_kmh(haversine_km(p, q), fps, f), f, p, q, False, frame)


def haversine_km_array(lat_p, lon_p, lat_q, lon_q) -> np.ndarray:
    phi_p, phi_q = np.radians(lat_p), np.radians(lat_q)
    h = np.sin((phi_q - phi_p) / 2) ** 2 + np.cos(phi_p) * np.cos(phi_q) * np.sin(np.radians(lon_q - lon_p) / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(h, 1.0)))


def estimate_speeds(windows: np.ndarray, H: Homography, fps: float, stall_px: float) -> List[SpeedEstimate]:
    """Vectorised :func:`estimate_speed` over an (N, f, 3) stack of history windows."""
    n, f = windows.shape[:2]
    if n == 0:
        return []
    half = f // 2
    first = windows[:, :half, 1:3].mean(axis=1)
    second = windows[:, half:, 1:3].mean(axis=1)
    stalled = np.hypot(*(second - first).T) < stall_px
    pts = np.concatenate([first, second])
    world = np.c_[pts, np.ones(2 * n)] @ H.H_inv.T
    w = world[:, 2]
    if np.any(np.abs(w[~np.tile(stalled, 2)]) < AT_INFINITY_EPS):
        raise CalibrationError("track center lies outside the calibrated plane")
    with np.errstate(divide="ignore", invalid="ignore"):
        lat = world[:, 0] / w
        lon = world[:, 1] / w
    d = haversine_km_array(lat[:n], lon[:n], lat[n:], lon[n:])
    speed = d * 3600.0 * fps / f
    frames = windows[:, -1, 0]
    out = []
    for i in range(n):
        if stalled[i]:
            out.append(SpeedEstimate(0.0, f, None, None, True, int(frames[i])))
        else:
            out.append(SpeedEstimate(float(speed[i]), f, GeoPoint(float(lat[i]), float(lon[i])),
                                     GeoPoint(float(lat[n + i]), float(lon[n + i])), False, int(frames[i])))
    return out
