"""Raster and metadata I/O for rectified stereo scenes.

All readers return numpy arrays in top-to-bottom row order. Float planes
(disparity, ground truth, interval bounds) use NaN as the invalid-pixel
marker everywhere in this package.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

# Hard cap on pixel count accepted from file headers. Keeps a corrupt
# header from turning into a multi-gigabyte allocation.
_MAX_PIXELS = 1 << 28

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


class FormatError(ValueError):
    """An input file could not be decoded as the expected format."""


@dataclass(frozen=True)
class GrayImage:
    """Single-channel image with 8- or 16-bit unsigned samples."""

    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {self.data.shape}")
        if self.data.dtype not in (np.uint8, np.uint16):
            raise ValueError(f"expected uint8 or uint16 samples, got {self.data.dtype}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("image has no pixels")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class DisparityRange:
    """Closed integer disparity search range [d_min, d_max]."""

    d_min: int
    d_max: int

    def __post_init__(self) -> None:
        if self.d_min > self.d_max:
            raise ValueError(f"empty disparity range [{self.d_min}, {self.d_max}]")

    @property
    def size(self) -> int:
        return self.d_max - self.d_min + 1

    @property
    def width(self) -> float:
        return float(self.d_max - self.d_min)

    def disparities(self) -> np.ndarray:
        return np.arange(self.d_min, self.d_max + 1)


def _check_dims(width: int, height: int) -> None:
    if width < 1 or height < 1:
        raise FormatError(f"bad image dimensions {width}x{height}")
    if width * height > _MAX_PIXELS:
        raise FormatError(f"dimension overflow: {width}x{height}")


def _pnm_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Read `count` whitespace-separated header tokens, skipping # comments.

    Returns the tokens and the offset of the byte right after the single
    whitespace character that terminates the last token.
    """
    tokens: list[bytes] = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace():
            pos += 1
        if pos == start:
            raise FormatError("truncated header")
        tokens.append(buf[start:pos])
        # the token must be terminated by exactly one whitespace byte
        if pos >= n:
            raise FormatError("truncated header")
    return tokens, pos + 1


def _load_pgm(buf: bytes) -> GrayImage:
    tokens, offset = _pnm_tokens(buf, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"unsupported format {tokens[0]!r}, expected binary PGM (P5)")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"bad PGM header: {exc}") from exc
    _check_dims(width, height)
    if not 0 < maxval < 65536:
        raise FormatError(f"bad PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    payload = buf[offset : offset + count * dtype.itemsize]
    if len(payload) != count * dtype.itemsize:
        raise FormatError("PGM payload shorter than header promises")
    data = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    if dtype.itemsize == 2:
        data = data.astype(np.uint16)
    return GrayImage(np.ascontiguousarray(data))


def _luminance(rgb: np.ndarray) -> np.ndarray:
    # Rec.601 weights with integer rounding; keeps the source bit depth.
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.round(y).astype(rgb.dtype)


def _load_png(path: Path) -> GrayImage:
    with Image.open(path) as img:
        if img.mode == "P":
            img = img.convert("RGB")
        elif img.mode in ("1", "LA"):
            img = img.convert("L")
        data = np.asarray(img)
    _check_dims(data.shape[1] if data.ndim >= 2 else 0, data.shape[0])
    if data.ndim == 3:
        data = _luminance(data[..., :3])
    if data.dtype == np.int32:
        # PIL reports some 16-bit grayscale PNGs as mode "I"
        if data.min() < 0 or data.max() > 65535:
            raise FormatError("PNG sample values exceed 16-bit range")
        data = data.astype(np.uint16)
    if data.dtype not in (np.uint8, np.uint16):
        raise FormatError(f"unsupported PNG sample type {data.dtype}")
    return GrayImage(data)


def load_gray_image(path: str | Path) -> GrayImage:
    """Load a PGM (binary P5) or PNG image as a single grayscale channel.

    16-bit samples are preserved without rescaling. Color inputs are
    collapsed with integer-rounded Rec.601 luminance.
    """
    path = Path(path)
    buf = path.read_bytes()
    if buf[:2] == b"P5":
        return _load_pgm(buf)
    if buf[: len(_PNG_MAGIC)] == _PNG_MAGIC:
        return _load_png(path)
    raise FormatError(f"{path.name}: not a binary PGM or PNG file")


def write_pgm(data: np.ndarray, path: str | Path) -> None:
    """Write uint8 or uint16 samples as binary PGM (16-bit stored big-endian)."""
    if data.dtype == np.uint8:
        maxval, payload = 255, data.tobytes()
    elif data.dtype == np.uint16:
        maxval, payload = 65535, data.astype(">u2").tobytes()
    else:
        raise ValueError(f"PGM supports uint8/uint16, got {data.dtype}")
    header = f"P5\n{data.shape[1]} {data.shape[0]}\n{maxval}\n".encode()
    Path(path).write_bytes(header + payload)


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a grayscale PFM file into a float32 plane, NaN where invalid.

    The scale line's sign selects endianness (negative = little endian);
    rows are stored bottom to top and are flipped on load. Any non-finite
    stored value becomes NaN.
    """
    buf = Path(path).read_bytes()
    tokens, offset = _pnm_tokens(buf, 4)
    if tokens[0] == b"PF":
        raise FormatError("color PFM is not supported, expected grayscale 'Pf'")
    if tokens[0] != b"Pf":
        raise FormatError(f"unsupported format {tokens[0]!r}, expected PFM ('Pf')")
    try:
        width, height = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError as exc:
        raise FormatError(f"bad PFM header: {exc}") from exc
    _check_dims(width, height)
    if scale == 0:
        raise FormatError("PFM scale must be nonzero")
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    count = width * height
    payload = buf[offset : offset + count * 4]
    if len(payload) != count * 4:
        raise FormatError("PFM payload shorter than header promises")
    data = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    data = np.flipud(data).astype(np.float32)
    data[~np.isfinite(data)] = np.nan
    return data


def write_pfm(data: np.ndarray, path: str | Path) -> None:
    """Write a float plane as little-endian grayscale PFM (scale -1.0).

    Invalid pixels (any non-finite value) are stored as +inf, the
    conventional invalid marker of the format.
    """
    if data.ndim != 2:
        raise ValueError(f"expected a 2-D plane, got shape {data.shape}")
    out = data.astype(np.float32, copy=True)
    out[~np.isfinite(out)] = np.float32(np.inf)
    header = f"Pf\n{data.shape[1]} {data.shape[0]}\n-1.0\n".encode()
    Path(path).write_bytes(header + np.flipud(out).astype("<f4").tobytes())


def parse_calib(path: str | Path) -> dict[str, str]:
    """Parse a key=value calibration text file into a dict (values raw)."""
    entries: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def parse_disparity_range(
    calib_path: str | Path | None = None,
    d_min: int | None = None,
    d_max: int | None = None,
    convention: str = "negative",
) -> DisparityRange:
    """Resolve the disparity search range from explicit bounds or a calib file.

    Explicit bounds win. Otherwise the calib file's ndisp entry is mapped to
    [-(ndisp-1), 0] under the default "negative" convention (left image pixel
    matches right image pixel at column j + d), or [0, ndisp-1] under
    "positive".
    """
    if (d_min is None) != (d_max is None):
        raise ValueError("give both d_min and d_max or neither")
    if d_min is not None and d_max is not None:
        return DisparityRange(int(d_min), int(d_max))
    if calib_path is None:
        raise ValueError("disparity range needs explicit bounds or a calib file")
    entries = parse_calib(calib_path)
    if "ndisp" not in entries:
        raise ValueError(f"{calib_path}: no ndisp entry")
    ndisp = int(entries["ndisp"])
    if ndisp < 2:
        raise ValueError(f"ndisp must be >= 2, got {ndisp}")
    if convention == "negative":
        return DisparityRange(-(ndisp - 1), 0)
    if convention == "positive":
        return DisparityRange(0, ndisp - 1)
    raise ValueError(f"unknown disparity convention {convention!r}")


def load_truth(
    path: str | Path,
    scale: float = 1.0,
    zero_invalid: bool = False,
    sign: float = 1.0,
) -> np.ndarray:
    """Load a ground-truth disparity plane as float32 with NaN marking unknowns.

    PFM input is read directly; PGM/PNG input is interpreted as quantized
    disparities (stored value = scale * true value, 0 often meaning unknown).
    `sign` converts file values into the matching convention in use.
    """
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        data = read_pfm(path)
    else:
        data = load_gray_image(path).data.astype(np.float32)
    if zero_invalid:
        data[data == 0] = np.nan
    if scale <= 0:
        raise ValueError(f"truth scale must be positive, got {scale}")
    return (data / np.float32(scale)) * np.float32(sign)
