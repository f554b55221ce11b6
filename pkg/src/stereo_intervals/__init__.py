"""Stereo disparity estimation with per-pixel confidence intervals.

The pipeline matches a rectified pair with a census / Hamming cost volume,
aggregates it along scanline paths, converts the aggregated costs into a
possibility distribution per pixel, and cuts that distribution at a chosen
level to obtain a disparity interval for every pixel. Interval bounds in
areas flagged as low confidence are pooled over small neighbourhoods to
absorb matching failures. Evaluation compares the intervals against ground
truth (interval accuracy, relative size, overestimation).
"""

__version__ = "0.1.0"
