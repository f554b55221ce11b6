"""Disparity extraction and plane filtering.

Planes are float32 arrays with NaN marking invalid pixels.
"""

from __future__ import annotations

import numpy as np

from .costvolume import CostVolume


def wta(volume: CostVolume) -> np.ndarray:
    """Winner-takes-all disparity: per-pixel argmin of the cost curve.

    Ties break to the smallest disparity. Pixels without a single valid
    entry come out NaN.
    """
    costs = np.where(volume.valid, volume.costs, np.inf)
    idx = np.argmin(costs, axis=2)
    disp = (volume.disp_range.d_min + idx).astype(np.float32)
    disp[~volume.valid.any(axis=2)] = np.nan
    return disp


def vfit_refine(volume: CostVolume, disp: np.ndarray) -> np.ndarray:
    """Subpixel refinement by fitting a symmetric V through the cost minimum.

    With c0, c1, c2 the costs at d-1, d, d+1 and m = max(c0-c1, c2-c1), the
    offset is (c0-c2) / (2m), clamped to [-0.5, 0.5]. Degenerate fits
    (m <= 0) and disparities at either end of the search range stay put.
    """
    d_min = volume.disp_range.d_min
    size = volume.disp_range.size
    finite = np.isfinite(disp)
    idx = np.where(finite, disp - d_min, 0).astype(np.int64)
    interior = finite & (idx > 0) & (idx < size - 1)

    gather = np.clip(np.stack([idx - 1, idx, idx + 1], axis=-1), 0, size - 1)
    triple = np.take_along_axis(volume.costs, gather, axis=2)
    triple_valid = np.take_along_axis(volume.valid, gather, axis=2)
    c0, c1, c2 = triple[..., 0], triple[..., 1], triple[..., 2]

    with np.errstate(invalid="ignore", divide="ignore"):
        m = np.maximum(c0 - c1, c2 - c1)
        ok = interior & triple_valid.all(axis=-1) & (m > 0)
        offset = np.where(ok, (c0 - c2) / (2 * np.where(ok, m, 1.0)), 0.0)
    offset = np.clip(offset, -0.5, 0.5)
    return np.where(finite, disp + offset, np.nan).astype(np.float32)


def median_filter(plane: np.ndarray, kernel: int = 3) -> np.ndarray:
    """Lower-median filter that ignores invalid samples.

    The window is kernel x kernel, clipped at the borders; the output is the
    1-based rank ceil(n/2) order statistic of the n valid samples in the
    window (center included). Invalid pixels stay invalid, and a pixel whose
    window holds no valid sample also comes out NaN.

    Applying this filter with the same kernel to planes a and b with
    a <= b pixelwise (and identical NaN sets) preserves the ordering, since
    both take the same order statistic over aligned windows.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"kernel must be odd and positive, got {kernel}")
    if kernel == 1:
        return plane.astype(np.float32, copy=True)
    pad = kernel // 2
    height, width = plane.shape
    padded = np.pad(plane.astype(np.float32), pad, mode="constant", constant_values=np.nan)
    windows = np.empty((height, width, kernel * kernel), dtype=np.float32)
    k = 0
    for wr in range(kernel):
        for wc in range(kernel):
            windows[:, :, k] = padded[wr : wr + height, wc : wc + width]
            k += 1
    windows.sort(axis=2)  # NaNs sort to the end
    n = np.count_nonzero(~np.isnan(windows), axis=2)
    rank = np.maximum((n + 1) // 2 - 1, 0)
    out = np.take_along_axis(windows, rank[..., None], axis=2)[..., 0]
    out[n == 0] = np.nan
    out[np.isnan(plane)] = np.nan
    return out
