"""Census transform and Hamming-distance cost volumes.

The census transform encodes each pixel's neighbourhood as a bit string
(one bit per neighbour: 1 when the neighbour is strictly darker than the
center). Matching cost between two pixels is the Hamming distance between
their bit strings. A cost volume stacks these costs over a disparity
search range: volume[i, j, k] is the cost of matching left pixel (i, j)
against right pixel (i, j + d_k).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import DisparityRange, FormatError, GrayImage

_CVOL_MAGIC = b"CVOL"
_CVOL_VERSION = 1
# magic, version, height, width, d_min, d_max, 8 reserved bytes
_CVOL_HEADER = struct.Struct("<4sIIIii8x")


@dataclass(frozen=True)
class CensusField:
    """Per-pixel census bit strings packed into uint64 words (LSB first)."""

    signatures: np.ndarray
    window: tuple[int, int]

    @property
    def bits(self) -> int:
        return self.window[0] * self.window[1] - 1

    @property
    def height(self) -> int:
        return self.signatures.shape[0]

    @property
    def width(self) -> int:
        return self.signatures.shape[1]


def census_transform(image: GrayImage | np.ndarray, window: tuple[int, int] = (5, 5)) -> CensusField:
    """Census-transform an image over an odd-sized window.

    Bit k of a signature corresponds to the k-th window position in row-major
    order, center excluded, and is set when that neighbour is strictly less
    than the center pixel. Pixels outside the image are edge-replicated, so
    border bits compare against the nearest real sample.
    """
    data = image.data if isinstance(image, GrayImage) else image
    rows, cols = window
    if rows % 2 == 0 or cols % 2 == 0 or rows < 1 or cols < 1:
        raise ValueError(f"census window must have odd positive sides, got {window}")
    height, width = data.shape
    if height < rows or width < cols:
        raise ValueError(f"image {height}x{width} smaller than census window {rows}x{cols}")

    pad_r, pad_c = rows // 2, cols // 2
    padded = np.pad(data, ((pad_r, pad_r), (pad_c, pad_c)), mode="edge")
    center = data
    bits = rows * cols - 1
    words = (bits + 63) // 64
    signatures = np.zeros((height, width, words), dtype=np.uint64)

    k = 0
    for wr in range(rows):
        for wc in range(cols):
            if wr == pad_r and wc == pad_c:
                continue
            neighbour = padded[wr : wr + height, wc : wc + width]
            bit = (neighbour < center).astype(np.uint64)
            signatures[:, :, k // 64] |= bit << np.uint64(k % 64)
            k += 1
    return CensusField(signatures, (rows, cols))


def hamming_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel Hamming distance between packed signature arrays."""
    return np.bitwise_count(a ^ b).sum(axis=-1, dtype=np.uint32)


@dataclass(frozen=True)
class CostVolume:
    """Matching costs over a disparity range, float32 with NaN at invalid entries.

    An entry is invalid when the implied right-image column j + d falls
    outside the frame (or when an imported volume marked it NaN).
    cost_min / cost_max are the global extrema over valid entries.
    """

    costs: np.ndarray
    valid: np.ndarray
    disp_range: DisparityRange
    cost_min: float
    cost_max: float

    @classmethod
    def from_costs(cls, costs: np.ndarray, valid: np.ndarray, disp_range: DisparityRange) -> "CostVolume":
        if costs.shape != valid.shape or costs.ndim != 3:
            raise ValueError(f"costs {costs.shape} and valid {valid.shape} must be equal 3-D shapes")
        if costs.shape[2] != disp_range.size:
            raise ValueError(
                f"volume depth {costs.shape[2]} does not match disparity range size {disp_range.size}"
            )
        if not valid.any():
            raise ValueError("cost volume has no valid entries")
        masked = costs[valid]
        if not np.isfinite(masked).all():
            raise ValueError("valid cost entries must be finite")
        return cls(costs, valid, disp_range, float(masked.min()), float(masked.max()))

    @property
    def height(self) -> int:
        return self.costs.shape[0]

    @property
    def width(self) -> int:
        return self.costs.shape[1]


def build_cost_volume(left: CensusField, right: CensusField, disp_range: DisparityRange) -> CostVolume:
    """Hamming-distance cost volume between two census fields.

    Matches left pixel (i, j) against right pixel (i, j + d) for every d in
    the search range; entries whose right column falls outside the frame are
    invalid.
    """
    if left.signatures.shape != right.signatures.shape:
        raise ValueError("left and right census fields must have equal shapes")
    if left.window != right.window:
        raise ValueError("left and right census windows differ")
    height, width = left.height, left.width
    size = disp_range.size
    costs = np.full((height, width, size), np.nan, dtype=np.float32)
    valid = np.zeros((height, width, size), dtype=bool)
    for k, d in enumerate(disp_range.disparities()):
        j0 = max(0, -d)
        j1 = min(width, width - d)
        if j0 >= j1:
            continue
        ham = hamming_distance(
            left.signatures[:, j0:j1], right.signatures[:, j0 + d : j1 + d]
        )
        costs[:, j0:j1, k] = ham
        valid[:, j0:j1, k] = True
    return CostVolume.from_costs(costs, valid, disp_range)


def export_cost_volume(volume: CostVolume, path: str | Path) -> None:
    """Write a cost volume in the CVOL interchange layout.

    32-byte little-endian header (magic, version, height, width, d_min,
    d_max, reserved) followed by float32 costs in row-major order with the
    disparity axis fastest; invalid entries stored as NaN.
    """
    header = _CVOL_HEADER.pack(
        _CVOL_MAGIC,
        _CVOL_VERSION,
        volume.height,
        volume.width,
        volume.disp_range.d_min,
        volume.disp_range.d_max,
    )
    payload = np.where(volume.valid, volume.costs, np.nan).astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def import_cost_volume(path: str | Path) -> CostVolume:
    """Read a CVOL file back into a CostVolume (NaN entries become invalid)."""
    buf = Path(path).read_bytes()
    if len(buf) < _CVOL_HEADER.size:
        raise FormatError("CVOL file shorter than its header")
    magic, version, height, width, d_min, d_max = _CVOL_HEADER.unpack_from(buf)
    if magic != _CVOL_MAGIC:
        raise FormatError(f"bad CVOL magic {magic!r}")
    if version != _CVOL_VERSION:
        raise FormatError(f"unsupported CVOL version {version}")
    if d_min > d_max:
        raise FormatError(f"CVOL header has empty disparity range [{d_min}, {d_max}]")
    if height < 1 or width < 1 or height * width > (1 << 28):
        raise FormatError(f"bad CVOL dimensions {height}x{width}")
    disp_range = DisparityRange(d_min, d_max)
    count = height * width * disp_range.size
    payload = buf[_CVOL_HEADER.size :]
    if len(payload) != count * 4:
        raise FormatError(
            f"CVOL payload holds {len(payload) // 4} floats, header promises {count}"
        )
    costs = np.frombuffer(payload, dtype="<f4").reshape(height, width, disp_range.size)
    costs = costs.astype(np.float32)
    valid = np.isfinite(costs)
    costs[~valid] = np.nan
    return CostVolume.from_costs(costs, valid, disp_range)
