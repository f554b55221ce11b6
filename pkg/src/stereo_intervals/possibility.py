"""Possibility distributions over disparities and interval extraction.

Cost curves are turned upside down and rescaled by the global extrema of
the volume, so that the globally best cost maps to 1 and the globally
worst to 0. Each pixel's curve is then shifted up until its own maximum
reaches 1, which makes it a possibility distribution: at least one
disparity is fully possible, and a pixel that matches poorly everywhere
keeps many disparities near 1. Cutting the distribution at level alpha
yields the set of disparities still considered possible; its hull is the
pixel's disparity interval. When the winner sits on the hull's edge, the
interval is widened by one step on that side so the true (possibly
fractional) disparity is not cut off at an integer bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costvolume import CostVolume
from .dataio import DisparityRange


@dataclass(frozen=True)
class PossibilityVolume:
    """Per-pixel possibility over disparities, float64 in [0, 1].

    Invalid entries carry 0. Every pixel with at least one valid entry has
    per-pixel maximum exactly 1.0.
    """

    values: np.ndarray
    valid: np.ndarray
    disp_range: DisparityRange

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class IntervalMap:
    """Per-pixel closed disparity intervals, NaN at invalid pixels."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper planes must have equal shapes")

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.lower) & np.isfinite(self.upper)

    def width(self) -> np.ndarray:
        return self.upper - self.lower


def normalize_volume(volume: CostVolume) -> np.ndarray:
    """Flip and rescale costs by the global volume extrema, as float64.

    The globally cheapest cost maps to 1, the most expensive to 0. Invalid
    entries come out NaN. A constant volume cannot be rescaled.
    """
    if not volume.cost_max > volume.cost_min:
        raise ValueError("constant cost volume: global extrema are equal")
    costs = volume.costs.astype(np.float64)
    f = (costs - volume.cost_max) / (volume.cost_min - volume.cost_max)
    f[~volume.valid] = np.nan
    return f


def to_possibility(f: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Shift normalized curves so each pixel's maximum is exactly 1.

    Works on any (..., D) stack of curves. Invalid entries become 0. The
    argmax entries are snapped to 1.0 so the per-pixel maximum is exact.
    """
    fv = np.where(valid, f, -np.inf)
    fmax = fv.max(axis=-1, keepdims=True)
    any_valid = np.isfinite(fmax)
    with np.errstate(invalid="ignore"):
        pi = np.clip(fv + (1.0 - fmax), 0.0, 1.0)
    pi[fv == fmax] = 1.0
    pi[~valid] = 0.0
    pi[~np.broadcast_to(any_valid, pi.shape)] = 0.0
    return pi


def to_possibility_volume(volume: CostVolume) -> PossibilityVolume:
    """Full conversion of a cost volume into a possibility volume."""
    pi = to_possibility(normalize_volume(volume), volume.valid)
    vmax = pi.max(axis=2)
    has_valid = volume.valid.any(axis=2)
    assert (vmax[has_valid] == 1.0).all(), "possibility maximum must be exactly 1"
    return PossibilityVolume(pi, volume.valid.copy(), volume.disp_range)


def alpha_cut(
    curve: np.ndarray,
    alpha: float,
    valid: np.ndarray | None = None,
    disp_range: DisparityRange | None = None,
) -> np.ndarray:
    """Disparities whose possibility reaches alpha (inclusive).

    Returns disparity values when a range is given, otherwise indices into
    the curve. alpha must lie in (0, 1] so invalid entries (possibility 0)
    can never enter the cut.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    mask = curve >= alpha
    if valid is not None:
        mask &= valid
    idx = np.nonzero(mask)[0]
    if disp_range is None:
        return idx
    return idx + disp_range.d_min


def interval_from_cut(cut: np.ndarray, winner: float) -> tuple[float, float]:
    """Hull of an alpha-cut, widened by one where the winner touches it.

    `cut` holds disparity values. When the winner equals the hull's lower
    (upper) end, that end moves out by one step; a singleton cut at the
    winner widens on both sides.
    """
    if cut.size == 0:
        raise ValueError("empty alpha-cut")
    lower = float(cut.min())
    upper = float(cut.max())
    if winner == lower:
        lower -= 1.0
    if winner == upper:
        upper += 1.0
    return lower, upper


def compute_intervals(pvol: PossibilityVolume, winners: np.ndarray, alpha: float) -> IntervalMap:
    """Per-pixel disparity intervals from alpha-cuts of the possibility volume.

    `winners` is the integer-valued winner-takes-all disparity plane used
    for the end-of-hull extension. Pixels invalid in either input stay NaN.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    in_cut = (pvol.values >= alpha) & pvol.valid
    ok = in_cut.any(axis=2) & np.isfinite(winners)

    size = pvol.disp_range.size
    first = np.argmax(in_cut, axis=2)
    last = size - 1 - np.argmax(in_cut[:, :, ::-1], axis=2)
    lower = (pvol.disp_range.d_min + first).astype(np.float32)
    upper = (pvol.disp_range.d_min + last).astype(np.float32)

    lower -= (winners == lower).astype(np.float32)
    upper += (winners == upper).astype(np.float32)
    lower[~ok] = np.nan
    upper[~ok] = np.nan
    return IntervalMap(lower, upper)


def baseline_intervals(volume: CostVolume, threshold: float = 0.9) -> IntervalMap:
    """Intervals from per-curve normalization alone, with no widening.

    Each curve is flipped and rescaled by its own extrema; the interval is
    the hull of the entries at or above the threshold. A constant curve
    gives no information, so it yields the full search range. This is the
    naive reference the possibility route is measured against: without the
    end-of-hull extension, a sharp curve collapses to a single integer
    disparity, which can never contain fractional ground truth.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    costs = volume.costs.astype(np.float64)
    cmax = np.where(volume.valid, costs, -np.inf).max(axis=2, keepdims=True)
    cmin = np.where(volume.valid, costs, np.inf).min(axis=2, keepdims=True)
    span = cmax - cmin
    any_valid = volume.valid.any(axis=2)
    flat = np.isfinite(span[..., 0]) & (span[..., 0] == 0)

    with np.errstate(invalid="ignore", divide="ignore"):
        value = (costs - cmax) / (cmin - cmax)
    in_cut = (value >= threshold) & volume.valid

    size = volume.disp_range.size
    first = np.argmax(in_cut, axis=2)
    last = size - 1 - np.argmax(in_cut[:, :, ::-1], axis=2)
    lower = (volume.disp_range.d_min + first).astype(np.float32)
    upper = (volume.disp_range.d_min + last).astype(np.float32)

    lower[flat] = volume.disp_range.d_min
    upper[flat] = volume.disp_range.d_max
    lower[~any_valid] = np.nan
    upper[~any_valid] = np.nan
    return IntervalMap(lower, upper)
