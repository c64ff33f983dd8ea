"""Dissimilarity terms between a track and a detection.

Four terms, each in [0, 1]: appearance (1 - histogram correlation, clamped),
size, position (coordinate-sum normalised) and Jaccard distance. The scalar
functions are the reference; :func:`cost_matrix` is the vectorised version
the tracker uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ingest import BoundingBox

NEUTRAL_APPEARANCE = 0.5


@dataclass(frozen=True)
class CostWeights:
    w_a: float = 0.25
    w_s: float = 0.25
    w_p: float = 0.25
    w_k: float = 0.25

    def __post_init__(self):
        vals = (self.w_a, self.w_s, self.w_p, self.w_k)
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise ValueError(f"cost weights must be finite and non-negative, got {vals}")
        total = sum(vals)
        if total <= 0:
            raise ValueError("cost weights must not all be zero")
        for name, v in zip(("w_a", "w_s", "w_p", "w_k"), vals):
            object.__setattr__(self, name, v / total)

    def without_appearance(self):
        """Weights (w_s, w_p, w_k) with w_a spread proportionally over the rest."""
        rest = self.w_s + self.w_p + self.w_k
        if rest <= 0:
            return (1 / 3, 1 / 3, 1 / 3)
        return (self.w_s / rest, self.w_p / rest, self.w_k / rest)


def _rescaled(d: np.ndarray):
    # divide by max |d| so tiny histograms don't underflow when squared
    m = float(np.abs(d).max()) if d.size else 0.0
    return d / m if m > 0 else None


def appearance_cost(h1, h2) -> float:
    """1 - Pearson correlation of two histograms, clamped to [0, 1].

    A constant histogram has no defined correlation; the neutral 0.5 is
    returned (see :func:`appearance_is_defined`).
    """
    a = np.asarray(h1, dtype=float)
    b = np.asarray(h2, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"histogram lengths differ: {a.shape} vs {b.shape}")
    da = _rescaled(a - a.mean())
    db = _rescaled(b - b.mean())
    if da is None or db is None:
        return NEUTRAL_APPEARANCE
    denom = math.sqrt(float(da @ da)) * math.sqrt(float(db @ db))
    return min(1.0, max(0.0, 1.0 - float(da @ db) / denom))


def appearance_is_defined(h) -> bool:
    a = np.asarray(h, dtype=float)
    return bool(np.ptp(a) > 0)


def size_cost(b1: BoundingBox, b2: BoundingBox) -> float:
    return 0.5 * (abs(b1.h - b2.h) / (b1.h + b2.h) + abs(b1.w - b2.w) / (b1.w + b2.w))


def _ratio(a: float, b: float) -> float:
    s = a + b
    return abs(a - b) / s if s > 0 else 0.0


def position_cost(b1: BoundingBox, b2: BoundingBox) -> float:
    # normalised by coordinate sums, so it depends on where the image origin is
    return 0.5 * (_ratio(b1.x, b2.x) + _ratio(b1.y, b2.y))


def iou(b1: BoundingBox, b2: BoundingBox) -> float:
    ax1, ay1, ax2, ay2 = b1.corners()
    bx1, by1, bx2, by2 = b2.corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return min(1.0, inter / (b1.area + b2.area - inter))


def jaccard_cost(b1: BoundingBox, b2: BoundingBox) -> float:
    return 1.0 - iou(b1, b2)


def total_cost(
    track_box: BoundingBox,
    det_box: BoundingBox,
    weights: CostWeights = CostWeights(),
    track_hist: Optional[np.ndarray] = None,
    det_hist: Optional[np.ndarray] = None,
) -> float:
    """Weighted sum of the four terms.

    When either histogram is missing the appearance weight is redistributed
    proportionally over the other three.
    """
    cs = size_cost(track_box, det_box)
    cp = position_cost(track_box, det_box)
    ck = jaccard_cost(track_box, det_box)
    if track_hist is None or det_hist is None:
        ws, wp, wk = weights.without_appearance()
        return min(1.0, ws * cs + wp * cp + wk * ck)
    ca = appearance_cost(track_hist, det_hist)
    # min() only absorbs rounding of the normalised weights
    return min(1.0, weights.w_a * ca + weights.w_s * cs + weights.w_p * cp + weights.w_k * ck)


# -- vectorised -------------------------------------------------------------

def boxes_to_array(boxes) -> np.ndarray:
    return np.array([(b.x, b.y, b.w, b.h) for b in boxes], dtype=float).reshape(-1, 4)


def _pair_ratio(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    num = np.abs(np.subtract.outer(a, b))
    den = np.add.outer(a, b)
    # inputs are non-negative, so a zero denominator always has a zero numerator
    den[den == 0] = 1.0
    return num / den


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IOU for (N, 4) and (M, 4) arrays of (x, y, w, h)."""
    ahw, ahh = a[:, 2] / 2, a[:, 3] / 2
    bhw, bhh = b[:, 2] / 2, b[:, 3] / 2
    iw = np.minimum.outer(a[:, 0] + ahw, b[:, 0] + bhw) - np.maximum.outer(a[:, 0] - ahw, b[:, 0] - bhw)
    ih = np.minimum.outer(a[:, 1] + ahh, b[:, 1] + bhh) - np.maximum.outer(a[:, 1] - ahh, b[:, 1] - bhh)
    np.maximum(iw, 0.0, out=iw)
    np.maximum(ih, 0.0, out=ih)
    inter = iw * ih
    union = np.add.outer(a[:, 2] * a[:, 3], b[:, 2] * b[:, 3]) - inter
    return np.minimum(inter / union, 1.0)


def _centered_unit(h: np.ndarray):
    c = h - h.mean(axis=1, keepdims=True)
    peak = np.abs(c).max(axis=1, keepdims=True) if c.shape[1] else np.zeros((len(c), 1))
    c /= np.where(peak > 0, peak, 1.0)
    norm = np.sqrt(np.einsum("ij,ij->i", c, c))
    ok = norm > 0
    c /= np.where(ok, norm, 1.0)[:, None]
    return c, ok


def cost_matrix(
    track_boxes: np.ndarray,
    det_boxes: np.ndarray,
    weights: CostWeights,
    track_hists: Optional[np.ndarray] = None,
    det_hists: Optional[np.ndarray] = None,
    track_has_hist: Optional[np.ndarray] = None,
    det_has_hist: Optional[np.ndarray] = None,
) -> np.ndarray:
    """(N, M) total costs. Histogram arrays are (N, B)/(M, B) with presence masks."""
    n, m = len(track_boxes), len(det_boxes)
    if n == 0 or m == 0:
        return np.zeros((n, m))
    ta, da = track_boxes, det_boxes
    cs = _pair_ratio(ta[:, 3], da[:, 3])
    cs += _pair_ratio(ta[:, 2], da[:, 2])
    cs *= 0.5
    cp = _pair_ratio(ta[:, 0], da[:, 0])
    cp += _pair_ratio(ta[:, 1], da[:, 1])
    cp *= 0.5
    ck = 1.0 - iou_matrix(ta, da)
    if track_hists is None or det_hists is None:
        ws, wp, wk = weights.without_appearance()
        return ws * cs + wp * cp + wk * ck
    if track_has_hist is None:
        track_has_hist = np.ones(n, dtype=bool)
    if det_has_hist is None:
        det_has_hist = np.ones(m, dtype=bool)
    tu, tok = _centered_unit(np.asarray(track_hists, dtype=float))
    du, dok = _centered_unit(np.asarray(det_hists, dtype=float))
    ca = 1.0 - tu @ du.T
    np.clip(ca, 0.0, 1.0, out=ca)
    if not (tok.all() and dok.all()):
        ca[~np.logical_and.outer(tok, dok)] = NEUTRAL_APPEARANCE
    cost = weights.w_a * ca + weights.w_s * cs + weights.w_p * cp + weights.w_k * ck
    if track_has_hist.all() and det_has_hist.all():
        return cost
    ws, wp, wk = weights.without_appearance()
    return np.where(np.logical_and.outer(track_has_hist, det_has_hist), cost, ws * cs + wp * cp + wk * ck)
