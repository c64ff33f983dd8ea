"""Minimum-cost one-to-one assignment."""

from __future__ import annotations

from typing import List, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment


def hungarian_assign(cost, pad_value: float = None) -> List[Tuple[int, int]]:
    """Return ``min(N, M)`` (row, col) pairs minimising the summed cost.

    Rectangular input is padded to square with ``pad_value`` (defaults to
    one more than the largest entry) and pairs landing on padding are dropped.
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {c.shape}")
    n, m = c.shape
    if n == 0 or m == 0:
        return []
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    k = max(n, m)
    if n != m:
        if pad_value is None:
            pad_value = float(c.max()) + 1.0
        square = np.full((k, k), pad_value)
        square[:n, :m] = c
    else:
        square = c
    rows, cols = linear_sum_assignment(square)
    return [(int(r), int(cl)) for r, cl in zip(rows, cols) if r < n and cl < m]
