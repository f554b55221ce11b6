"""Interval quality metrics, evaluation reports, and row profiles.

Three numbers summarize an interval map against ground truth:

* accuracy: fraction of pixels whose interval contains the true disparity
  (bounds inclusive);
* relative size: lower median of interval width over the search-range
  width, with bounds clamped to the range first, so a full-range interval
  scores exactly 1;
* overestimation: for low-confidence pixels, how much wider the interval
  is than the worst disparity error over the pixel's area; 1 - Delta/width
  per pixel, lower median over pixels. 0 means intervals are exactly as
  wide as needed, values near 1 mean they are needlessly wide.

Pixels with invalid ground truth or invalid intervals are excluded from
the denominators; region pixel counts in the report keep the exclusions
visible. Dataset-level numbers pool per-pixel samples across scenes, so a
large scene weighs more than a small one.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .confidence import ConfidenceMap, LowConfidenceArea, low_area_error_span
from .dataio import DisparityRange
from .possibility import IntervalMap

_REGIONS = ("global", "high", "low")
_METRICS = ("pixels", "evaluated", "accuracy", "relative_size", "overestimation")


def lower_median(values: np.ndarray) -> float:
    """Lower median: the 1-based rank ceil(n/2) order statistic."""
    if values.size == 0:
        raise ValueError("median of an empty sample")
    ordered = np.sort(values)
    return float(ordered[(values.size + 1) // 2 - 1])


def accuracy(intervals: IntervalMap, truth: np.ndarray, region: np.ndarray | None = None) -> float:
    """Fraction of evaluated pixels whose interval contains the truth.

    Evaluated pixels are those in the region with finite truth and a valid
    interval; bounds are inclusive. Raises on an empty denominator.
    """
    mask = np.isfinite(truth) & intervals.valid
    if region is not None:
        mask &= region
    if not mask.any():
        raise ValueError("accuracy over an empty region")
    inside = (intervals.lower[mask] <= truth[mask]) & (truth[mask] <= intervals.upper[mask])
    return float(inside.mean())


def size_fractions(
    intervals: IntervalMap, disp_range: DisparityRange, region: np.ndarray | None = None
) -> np.ndarray:
    """Per-pixel interval width over range width, bounds clamped to the range."""
    mask = intervals.valid
    if region is not None:
        mask = mask & region
    lo = np.clip(intervals.lower[mask], disp_range.d_min, disp_range.d_max)
    hi = np.clip(intervals.upper[mask], disp_range.d_min, disp_range.d_max)
    return (hi - lo) / disp_range.width


def relative_size(
    intervals: IntervalMap, disp_range: DisparityRange, region: np.ndarray | None = None
) -> float:
    """Lower median of the clamped width fraction over the region."""
    fractions = size_fractions(intervals, disp_range, region)
    if fractions.size == 0:
        raise ValueError("relative size over an empty region")
    return lower_median(fractions)


def overestimation_terms(intervals: IntervalMap, error_span: np.ndarray) -> np.ndarray:
    """Per-pixel overestimation terms where both interval and span exist.

    term = 1 - Delta / width; a zero-width interval contributes 0 (it
    cannot overestimate), whatever Delta is.
    """
    mask = intervals.valid & np.isfinite(error_span)
    width = intervals.width()[mask]
    span = error_span[mask]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = 1.0 - span / width
    return np.where(width == 0, 0.0, terms)


def overestimation(
    intervals: IntervalMap,
    disp: np.ndarray,
    truth: np.ndarray,
    areas: list[LowConfidenceArea],
) -> float:
    """Overestimation over explicit areas: one term per seed pixel.

    Each seed's Delta is the worst |disp - truth| over its own area (pixels
    with both planes valid). Seeds with an invalid interval or an empty
    valid area contribute no term.
    """
    err = np.abs(disp.astype(np.float64) - truth.astype(np.float64))
    terms = []
    for area in areas:
        i, j = area.seed
        if not (np.isfinite(intervals.lower[i, j]) and np.isfinite(intervals.upper[i, j])):
            continue
        values = err[area.rows, area.cols]
        values = values[np.isfinite(values)]
        if values.size == 0:
            continue
        width = float(intervals.upper[i, j] - intervals.lower[i, j])
        terms.append(0.0 if width == 0 else 1.0 - float(values.max()) / width)
    if not terms:
        raise ValueError("no valid areas")
    return lower_median(np.asarray(terms))


@dataclass(frozen=True)
class RegionStats:
    pixels: int
    evaluated: int
    accuracy: float | None
    relative_size: float | None
    overestimation: float | None = None

    def to_dict(self) -> dict:
        return {
            "pixels": self.pixels,
            "evaluated": self.evaluated,
            "accuracy": self.accuracy,
            "relative_size": self.relative_size,
            "overestimation": self.overestimation,
        }


@dataclass(frozen=True)
class EvalReport:
    """Metrics for one scene (or a pooled set of scenes), split by region."""

    scene: str
    config_digest: str
    regions: dict[str, RegionStats]

    def __post_init__(self) -> None:
        counts = [self.regions[name].pixels for name in ("high", "low") if name in self.regions]
        if "global" in self.regions and len(counts) == 2:
            if sum(counts) != self.regions["global"].pixels:
                raise ValueError("high + low region pixel counts must equal global")

    def to_dict(self) -> dict:
        return {
            "scene": self.scene,
            "config_digest": self.config_digest,
            "regions": {name: stats.to_dict() for name, stats in self.regions.items()},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "EvalReport":
        regions = {
            name: RegionStats(**stats) for name, stats in payload["regions"].items()
        }
        return cls(payload["scene"], payload["config_digest"], regions)


@dataclass
class SceneSamples:
    """Per-pixel samples kept around so scenes can be pooled exactly."""

    scene: str
    contained: dict[str, np.ndarray] = field(default_factory=dict)
    fractions: dict[str, np.ndarray] = field(default_factory=dict)
    o_terms: np.ndarray = field(default_factory=lambda: np.empty(0))
    pixels: dict[str, int] = field(default_factory=dict)


def _region_stats(
    region: np.ndarray,
    intervals: IntervalMap,
    truth: np.ndarray | None,
    disp_range: DisparityRange,
    o_terms: np.ndarray | None = None,
) -> tuple[RegionStats, np.ndarray, np.ndarray]:
    valid = intervals.valid & region
    contained = np.empty(0)
    acc = None
    evaluated = 0
    if truth is not None:
        eval_mask = valid & np.isfinite(truth)
        evaluated = int(eval_mask.sum())
        if evaluated:
            contained = (intervals.lower[eval_mask] <= truth[eval_mask]) & (
                truth[eval_mask] <= intervals.upper[eval_mask]
            )
            acc = float(contained.mean())
    fractions = size_fractions(intervals, disp_range, region)
    rel = lower_median(fractions) if fractions.size else None
    over = None
    if o_terms is not None and o_terms.size:
        over = lower_median(o_terms)
    stats = RegionStats(int(region.sum()), evaluated, acc, rel, over)
    return stats, contained, fractions


def evaluate_scene(
    scene: str,
    intervals: IntervalMap,
    disp: np.ndarray,
    truth: np.ndarray | None,
    cmap: ConfidenceMap,
    disp_range: DisparityRange,
    config_digest: str = "",
    half_height: int = 2,
) -> tuple[EvalReport, SceneSamples]:
    """Per-region metrics for one scene plus the raw samples for pooling."""
    low = cmap.low_mask
    everywhere = np.ones_like(low)
    samples = SceneSamples(scene)
    o_terms = np.empty(0)
    if truth is not None:
        span = low_area_error_span(disp, truth, cmap, half_height)
        o_terms = overestimation_terms(intervals, span)
    regions = {}
    for name, region in (("global", everywhere), ("high", ~low), ("low", low)):
        stats, contained, fractions = _region_stats(
            region, intervals, truth, disp_range, o_terms if name == "low" else None
        )
        regions[name] = stats
        samples.contained[name] = contained
        samples.fractions[name] = fractions
        samples.pixels[name] = stats.pixels
    samples.o_terms = o_terms
    return EvalReport(scene, config_digest, regions), samples


def pool_samples(samples: list[SceneSamples], scene: str = "pooled", config_digest: str = "") -> EvalReport:
    """Pool per-pixel samples from several scenes into one report."""
    if not samples:
        raise ValueError("nothing to pool")
    regions = {}
    for name in _REGIONS:
        contained = np.concatenate([s.contained.get(name, np.empty(0)) for s in samples])
        fractions = np.concatenate([s.fractions.get(name, np.empty(0)) for s in samples])
        over = None
        if name == "low":
            terms = np.concatenate([s.o_terms for s in samples])
            over = lower_median(terms) if terms.size else None
        regions[name] = RegionStats(
            pixels=sum(s.pixels.get(name, 0) for s in samples),
            evaluated=int(contained.size),
            accuracy=float(contained.mean()) if contained.size else None,
            relative_size=lower_median(fractions) if fractions.size else None,
            overestimation=over,
        )
    return EvalReport(scene, config_digest, regions)


def _format_value(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return format(value, ".6g")


def emit_report(reports: list[EvalReport], path: str | Path, fmt: str = "csv") -> None:
    """Write reports as CSV (dataset, region, metric, value) or JSON.

    Row order is deterministic: reports in the given order, regions
    global / high / low, metrics in a fixed order, skipping absent values.
    The JSON form round-trips through EvalReport.from_dict.
    """
    if not reports:
        raise ValueError("no reports to write")
    path = Path(path)
    if fmt == "json":
        payload = {"reports": [r.to_dict() for r in reports]}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["dataset", "region", "metric", "value"])
        for report in reports:
            for region in _REGIONS:
                if region not in report.regions:
                    continue
                stats = report.regions[region]
                for metric in _METRICS:
                    value = getattr(stats, metric)
                    if value is None:
                        continue
                    writer.writerow([report.scene, region, metric, _format_value(value)])


def read_report_json(path: str | Path) -> list[EvalReport]:
    payload = json.loads(Path(path).read_text())
    return [EvalReport.from_dict(entry) for entry in payload["reports"]]


def emit_profile(
    path: str | Path,
    row: int,
    intervals: IntervalMap,
    disp: np.ndarray,
    truth: np.ndarray | None = None,
    cmap: ConfidenceMap | None = None,
) -> None:
    """Dump one image row as CSV for plotting interval profiles.

    Columns: j, lower, upper, disparity, truth, low_conf_flag,
    wrong_interval. Missing values are written as nan; wrong_interval is 1
    when a valid interval misses valid truth.
    """
    height, width = disp.shape
    if not 0 <= row < height:
        raise ValueError(f"row {row} outside image of height {height}")
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["j", "lower", "upper", "disparity", "truth", "low_conf_flag", "wrong_interval"])
        for j in range(width):
            lo = float(intervals.lower[row, j])
            hi = float(intervals.upper[row, j])
            t = float(truth[row, j]) if truth is not None else float("nan")
            wrong = int(
                np.isfinite(t) and np.isfinite(lo) and np.isfinite(hi) and not (lo <= t <= hi)
            )
            flag = int(bool(cmap.low_mask[row, j])) if cmap is not None else 0
            writer.writerow(
                [
                    j,
                    _format_value(lo),
                    _format_value(hi),
                    _format_value(float(disp[row, j])),
                    _format_value(t),
                    flag,
                    wrong,
                ]
            )
