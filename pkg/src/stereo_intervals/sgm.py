"""Scanline path aggregation of cost volumes.

Each path direction sweeps the image once. Along a path, a pixel's
aggregated cost for disparity d is its raw cost plus the cheapest
continuation of the previous pixel's aggregated curve: stay at d, step to
d +- 1 for a small penalty p1, or jump anywhere for p2. Subtracting the
previous minimum keeps the accumulator bounded without changing the
argmin. Directional results are summed (and by default divided by the
path count so values stay on the raw cost scale).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costvolume import CostVolume

_DIRECTIONS_4 = ((0, 1), (0, -1), (1, 0), (-1, 0))
_DIRECTIONS_8 = _DIRECTIONS_4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass(frozen=True)
class SgmParams:
    p1: float = 8.0
    p2: float = 32.0
    num_paths: int = 8
    normalize_by_paths: bool = True

    def __post_init__(self) -> None:
        if not 0 <= self.p1 <= self.p2:
            raise ValueError(f"penalties must satisfy 0 <= p1 <= p2, got {self.p1}, {self.p2}")
        if self.num_paths not in (4, 8):
            raise ValueError(f"num_paths must be 4 or 8, got {self.num_paths}")


def _relax(prev: np.ndarray, p1: float, p2: float) -> np.ndarray:
    """Cheapest continuation of the previous pixel's curve, minus its minimum.

    `prev` is (..., D) with +inf at invalid entries. A fully invalid (or
    absent) predecessor contributes nothing, so the recurrence restarts.
    """
    m = prev.min(axis=-1, keepdims=True)
    finite = np.isfinite(m)
    m0 = np.where(finite, m, 0.0)
    step = np.full_like(prev, np.inf)
    step[..., 1:] = prev[..., :-1] + p1
    np.minimum(step[..., :-1], prev[..., 1:] + p1, out=step[..., :-1])
    best = np.minimum(np.minimum(prev, m0 + p2), step) - m0
    return np.where(finite, best, 0.0)


def _path_cost(costs: np.ndarray, dr: int, dc: int, p1: float, p2: float) -> np.ndarray:
    """Aggregate along one direction. `costs` carry +inf at invalid entries."""
    height, width, _ = costs.shape
    out = np.empty_like(costs)
    if dr == 0:
        cols = range(width) if dc > 0 else range(width - 1, -1, -1)
        first = True
        for j in cols:
            if first:
                out[:, j] = costs[:, j]
                first = False
            else:
                out[:, j] = costs[:, j] + _relax(out[:, j - dc], p1, p2)
        return out

    rows = range(height) if dr > 0 else range(height - 1, -1, -1)
    first = True
    for i in rows:
        if first:
            out[i] = costs[i]
            first = False
            continue
        prev = out[i - dr]
        if dc != 0:
            shifted = np.full_like(prev, np.inf)
            if dc > 0:
                shifted[dc:] = prev[:-dc]
            else:
                shifted[:dc] = prev[-dc:]
            prev = shifted
        out[i] = costs[i] + _relax(prev, p1, p2)
    return out


def aggregate(volume: CostVolume, params: SgmParams = SgmParams()) -> CostVolume:
    """Sum directional path costs over 4 or 8 scan directions.

    Invalid entries stay invalid and are treated as +inf inside the
    recurrence minima. With p1 = p2 = 0 and normalization on, the output
    equals the input.
    """
    directions = _DIRECTIONS_8 if params.num_paths == 8 else _DIRECTIONS_4
    costs = np.where(volume.valid, volume.costs, np.inf).astype(np.float32)
    acc = np.zeros_like(costs)
    for dr, dc in directions:
        acc += _path_cost(costs, dr, dc, params.p1, params.p2)
    if params.normalize_by_paths:
        acc /= params.num_paths
    out = np.where(volume.valid, acc, np.nan).astype(np.float32)
    return CostVolume.from_costs(out, volume.valid.copy(), volume.disp_range)
