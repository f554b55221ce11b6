"""Matching-ambiguity confidence and low-confidence interval pooling.

A pixel whose cost curve has many entries almost as cheap as its minimum
cannot be matched with confidence. The ambiguity score counts, for a
ladder of tolerances eta_k = k * eta_max / k_max, how many disparities
fall within eta_k of the per-pixel minimum, averages the counts and flips
the result into [0, 1]: sharp single-minimum curves score close to 1,
constant curves score 0. The score is minimum-filtered along rows and
thresholded to produce the low-confidence mask.

Interval bounds inside a low-confidence area are unreliable individually
but informative collectively, so each low-confidence pixel's bounds are
replaced by rank quantiles of the bounds over its area: the connected
piece (8-connectivity) of the mask around the pixel, restricted to a few
rows above and below it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .costvolume import CostVolume
from .possibility import IntervalMap

_SMOOTH_WIDTH = 5
_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class ConfidenceMap:
    """Ambiguity confidence planes and the derived low-confidence mask."""

    ambiguity: np.ndarray
    smoothed: np.ndarray
    tau: float
    low_mask: np.ndarray

    @property
    def low_fraction(self) -> float:
        return float(self.low_mask.mean())


@dataclass(frozen=True)
class LowConfidenceArea:
    """Pixels pooled around one low-confidence seed.

    The area is the 8-connected component of the low-confidence mask that
    contains the seed, intersected with the rows within half_height of the
    seed's row.
    """

    seed: tuple[int, int]
    rows: np.ndarray
    cols: np.ndarray
    half_height: int

    @property
    def size(self) -> int:
        return self.rows.size


def ambiguity(volume: CostVolume, eta_max: float = 2.0, k_max: int = 10) -> np.ndarray:
    """Per-pixel matching ambiguity confidence in [0, 1], float64.

    eta_max is expressed in the volume's own cost units (Hamming bits for
    census volumes). Pixels with no valid cost entry score 0: nothing
    distinguishes any disparity there.
    """
    if eta_max <= 0:
        raise ValueError(f"eta_max must be positive, got {eta_max}")
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    costs = np.where(volume.valid, volume.costs.astype(np.float64), np.inf)
    m = costs.min(axis=2, keepdims=True)
    any_valid = volume.valid.any(axis=2)

    size = volume.disp_range.size
    total = np.zeros(volume.costs.shape[:2], dtype=np.int64)
    for k in range(1, k_max + 1):
        eta = k * eta_max / k_max
        total += np.count_nonzero(costs <= m + eta, axis=2)
    amb = 1.0 - total / float(k_max * size)
    amb[~any_valid] = 0.0
    return amb


def smooth_and_threshold(amb: np.ndarray, tau: float = 0.6) -> ConfidenceMap:
    """Row-direction minimum filter (1 x 5, edge-replicated), then threshold.

    The min filter spreads low scores sideways so that a flagged area also
    covers its immediate surroundings. A pixel is low confidence when the
    smoothed score is <= tau (inclusive).
    """
    if not 0 <= tau <= 1:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    smoothed = ndimage.minimum_filter1d(amb, size=_SMOOTH_WIDTH, axis=1, mode="nearest")
    return ConfidenceMap(amb, smoothed, tau, smoothed <= tau)


def _band_component(mask: np.ndarray, row: int, half_height: int) -> tuple[int, np.ndarray, np.ndarray]:
    """Label the mask band around `row`; returns (top, labels, row_labels)."""
    top = max(0, row - half_height)
    bottom = min(mask.shape[0], row + half_height + 1)
    labels, _ = ndimage.label(mask[top:bottom], structure=_EIGHT_CONNECTED)
    return top, labels, labels[row - top]


def build_area(mask: np.ndarray, seed: tuple[int, int], half_height: int = 2) -> LowConfidenceArea:
    """Area pooled around one seed pixel of the low-confidence mask."""
    i, j = seed
    if not (0 <= i < mask.shape[0] and 0 <= j < mask.shape[1]):
        raise ValueError(f"seed {seed} outside the mask")
    if not mask[i, j]:
        raise ValueError(f"seed {seed} is not a low-confidence pixel")
    top, labels, _ = _band_component(mask, i, half_height)
    rows, cols = np.nonzero(labels == labels[i - top, j])
    return LowConfidenceArea((i, j), rows + top, cols, half_height)


def _rank_index(n: int, q: float) -> int:
    """0-based nearest-rank index: 1-based ceil(q * n), clamped to [1, n]."""
    rank = int(np.ceil(q * n))
    return min(max(rank, 1), n) - 1


def nearest_rank(values: np.ndarray, q: float) -> float:
    """Nearest-rank quantile of a 1-D sample (ascending sort, rank ceil(q*n))."""
    if values.size == 0:
        raise ValueError("quantile of an empty sample")
    if not 0 <= q <= 1:
        raise ValueError(f"quantile level must be in [0, 1], got {q}")
    ordered = np.sort(values)
    return float(ordered[_rank_index(values.size, q)])


def regularize_intervals(
    intervals: IntervalMap,
    cmap: ConfidenceMap,
    half_height: int = 2,
    q_low: float = 0.10,
    q_high: float = 0.90,
) -> IntervalMap:
    """Replace low-confidence bounds by rank quantiles over their areas.

    Every low-confidence pixel with a valid interval gets its lower bound
    set to the q_low quantile of the valid lower bounds over its area and
    its upper bound to the q_high quantile of the uppers. Quantiles are
    taken over the input intervals, so the result does not depend on pixel
    order. With q_low <= q_high the output still satisfies lower <= upper:
    the k-th smallest lower never exceeds the k-th smallest upper.
    """
    if not 0 <= q_low <= q_high <= 1:
        raise ValueError(f"need 0 <= q_low <= q_high <= 1, got {q_low}, {q_high}")
    if half_height < 0:
        raise ValueError(f"half_height must be >= 0, got {half_height}")
    mask = cmap.low_mask
    lower = intervals.lower.copy()
    upper = intervals.upper.copy()
    target = mask & intervals.valid

    for i in np.nonzero(target.any(axis=1))[0]:
        top, labels, row_labels = _band_component(mask, int(i), half_height)
        band_lower = intervals.lower[top : top + labels.shape[0]]
        band_upper = intervals.upper[top : top + labels.shape[0]]
        band_ok = np.isfinite(band_lower) & np.isfinite(band_upper)
        for label in np.unique(row_labels[target[i]]):
            members = (labels == label) & band_ok
            pool_lower = np.sort(band_lower[members])
            if pool_lower.size == 0:
                continue
            pool_upper = np.sort(band_upper[members])
            cols = target[i] & (row_labels == label)
            lower[i, cols] = pool_lower[_rank_index(pool_lower.size, q_low)]
            upper[i, cols] = pool_upper[_rank_index(pool_upper.size, q_high)]
    return IntervalMap(lower, upper)


def low_area_error_span(
    disp: np.ndarray,
    truth: np.ndarray,
    cmap: ConfidenceMap,
    half_height: int = 2,
) -> np.ndarray:
    """Per-pixel worst absolute disparity error over each pixel's area.

    For every low-confidence pixel, the maximum of |disp - truth| over the
    pixels of its area where both planes are valid; NaN outside the mask or
    when the area holds no such pixel. This is the error span the
    overestimation metric compares interval widths against.
    """
    mask = cmap.low_mask
    out = np.full(disp.shape, np.nan, dtype=np.float64)
    err = np.abs(disp.astype(np.float64) - truth.astype(np.float64))

    for i in np.nonzero(mask.any(axis=1))[0]:
        top, labels, row_labels = _band_component(mask, int(i), half_height)
        band_err = err[top : top + labels.shape[0]]
        for label in np.unique(row_labels[mask[i]]):
            values = band_err[labels == label]
            values = values[np.isfinite(values)]
            if values.size == 0:
                continue
            span = values.max()
            out[i, mask[i] & (row_labels == label)] = span
    return out
