"""Possibility conversion, alpha-cuts, intervals, and the naive reference."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stereo_intervals.costvolume import CostVolume
from stereo_intervals.dataio import DisparityRange
from stereo_intervals.disparity import wta
from stereo_intervals.possibility import (
    IntervalMap,
    alpha_cut,
    baseline_intervals,
    compute_intervals,
    interval_from_cut,
    normalize_volume,
    to_possibility,
    to_possibility_volume,
)


def volume_from(costs, d_min=0) -> CostVolume:
    costs = np.asarray(costs, dtype=np.float32)
    valid = np.isfinite(costs)
    return CostVolume.from_costs(
        np.where(valid, costs, np.nan).astype(np.float32),
        valid,
        DisparityRange(d_min, d_min + costs.shape[2] - 1),
    )


def random_volume(rng, height=8, width=8, depth=16, d_min=-8, invalid_frac=0.2):
    costs = rng.integers(0, 40, size=(height, width, depth)).astype(np.float32)
    drop = rng.random(costs.shape) < invalid_frac
    keep = rng.integers(0, depth, size=(height, width))
    drop[np.arange(height)[:, None], np.arange(width)[None, :], keep] = False
    costs[drop] = np.nan
    return volume_from(costs, d_min=d_min)


def test_normalize_known_curve():
    # global extrema 1 and 9; curve [2, 5, 3] -> [0.875, 0.5, 0.75]
    costs = np.zeros((1, 2, 3), dtype=np.float32)
    costs[0, 0] = [2.0, 5.0, 3.0]
    costs[0, 1] = [1.0, 9.0, 4.0]
    vol = volume_from(costs)
    f = normalize_volume(vol)
    assert np.allclose(f[0, 0], [0.875, 0.5, 0.75])
    assert f[0, 1, 0] == 1.0  # global minimum maps to 1
    assert f[0, 1, 1] == 0.0  # global maximum maps to 0


def test_normalize_constant_volume_rejected():
    vol = volume_from(np.full((2, 2, 3), 4.0))
    with pytest.raises(ValueError, match="constant"):
        normalize_volume(vol)


def test_to_possibility_known_shift():
    f = np.array([0.875, 0.5, 0.75])
    pi = to_possibility(f, np.ones(3, dtype=bool))
    assert np.allclose(pi, [1.0, 0.625, 0.875])
    assert pi.max() == 1.0


def test_to_possibility_max_already_one_unchanged():
    f = np.array([1.0, 0.3, 0.0])
    pi = to_possibility(f, np.ones(3, dtype=bool))
    assert np.allclose(pi, f)


def test_to_possibility_single_valid_entry():
    f = np.array([np.nan, 0.3, np.nan])
    valid = np.array([False, True, False])
    pi = to_possibility(f, valid)
    assert pi.tolist() == [0.0, 1.0, 0.0]


def test_possibility_volume_max_exactly_one():
    rng = np.random.default_rng(21)
    for _ in range(20):
        vol = random_volume(rng)
        pvol = to_possibility_volume(vol)
        has_valid = vol.valid.any(axis=2)
        vmax = pvol.values.max(axis=2)
        assert (vmax[has_valid] == 1.0).all()
        assert (pvol.values >= 0).all() and (pvol.values <= 1).all()
        assert (pvol.values[~vol.valid] == 0).all()


def test_alpha_cut_example():
    # pi = [1.0, 0.625, 0.875] over D = [-1, 0, 1]: cut at 0.9 = {-1}
    pi = np.array([1.0, 0.625, 0.875])
    cut = alpha_cut(pi, 0.9, disp_range=DisparityRange(-1, 1))
    assert cut.tolist() == [-1]
    cut = alpha_cut(pi, 0.8, disp_range=DisparityRange(-1, 1))
    assert cut.tolist() == [-1, 1]
    cut = alpha_cut(pi, 1e-9, disp_range=DisparityRange(-1, 1))
    assert cut.tolist() == [-1, 0, 1]


def test_alpha_cut_rejects_bad_alpha():
    with pytest.raises(ValueError):
        alpha_cut(np.array([1.0]), 0.0)
    with pytest.raises(ValueError):
        alpha_cut(np.array([1.0]), 1.5)


def test_interval_from_cut_extension_rules():
    assert interval_from_cut(np.array([-1]), -1.0) == (-2.0, 0.0)
    assert interval_from_cut(np.array([2, 3, 5]), 3.0) == (2.0, 5.0)
    assert interval_from_cut(np.array([0, 1, 2, 3, 4]), 4.0) == (0.0, 5.0)
    assert interval_from_cut(np.array([0, 1, 2, 3, 4]), 0.0) == (-1.0, 4.0)


def test_compute_intervals_matches_per_pixel_reference():
    rng = np.random.default_rng(33)
    for alpha in (0.5, 0.8, 0.9, 0.98):
        vol = random_volume(rng)
        pvol = to_possibility_volume(vol)
        winners = wta(vol)
        intervals = compute_intervals(pvol, winners, alpha)
        for i in range(vol.height):
            for j in range(vol.width):
                if not vol.valid[i, j].any():
                    assert np.isnan(intervals.lower[i, j])
                    assert np.isnan(intervals.upper[i, j])
                    continue
                cut = alpha_cut(
                    pvol.values[i, j], alpha, valid=vol.valid[i, j], disp_range=vol.disp_range
                )
                lo, hi = interval_from_cut(cut, float(winners[i, j]))
                assert intervals.lower[i, j] == lo, (i, j, alpha)
                assert intervals.upper[i, j] == hi, (i, j, alpha)


def test_intervals_full_range_when_possibility_uniform():
    vol = volume_from(np.zeros((2, 3, 4)) + np.arange(4)[None, None, :] * 0.0 + [[[1, 1, 1, 9]]])
    # curves [1,1,1,9]: normalized [1,1,1,0] -> pi [1,1,1,0]; cut at 0.5 = first 3
    pvol = to_possibility_volume(vol)
    winners = wta(vol)
    intervals = compute_intervals(pvol, winners, 0.5)
    # winner 0 == lower end -> extend left; upper end 2 != winner
    assert intervals.lower[0, 0] == -1.0
    assert intervals.upper[0, 0] == 2.0


def test_interval_bounds_stay_in_extended_range():
    rng = np.random.default_rng(44)
    vol = random_volume(rng, depth=10, d_min=-5)
    pvol = to_possibility_volume(vol)
    winners = wta(vol)
    for alpha in (0.5, 0.9):
        intervals = compute_intervals(pvol, winners, alpha)
        ok = intervals.valid
        assert (intervals.lower[ok] >= vol.disp_range.d_min - 1).all()
        assert (intervals.upper[ok] <= vol.disp_range.d_max + 1).all()
        assert (intervals.lower[ok] <= intervals.upper[ok]).all()


def test_winner_contained_for_all_alphas():
    rng = np.random.default_rng(55)
    vol = random_volume(rng)
    pvol = to_possibility_volume(vol)
    winners = wta(vol)
    for alpha in (0.5, 0.8, 0.9, 0.98, 1.0):
        intervals = compute_intervals(pvol, winners, alpha)
        ok = intervals.valid & np.isfinite(winners)
        assert (intervals.lower[ok] <= winners[ok]).all()
        assert (winners[ok] <= intervals.upper[ok]).all()


def test_cuts_nest_before_extension():
    rng = np.random.default_rng(66)
    vol = random_volume(rng)
    pvol = to_possibility_volume(vol)
    alphas = [0.3, 0.5, 0.8, 0.9, 0.98]
    for i in range(vol.height):
        for j in range(vol.width):
            if not vol.valid[i, j].any():
                continue
            previous = None
            for alpha in alphas:
                cut = set(
                    alpha_cut(
                        pvol.values[i, j], alpha, valid=vol.valid[i, j], disp_range=vol.disp_range
                    ).tolist()
                )
                if previous is not None:
                    assert cut.issubset(previous)
                previous = cut


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.integers(0, 60), min_size=2, max_size=24),
    st.floats(0.05, 1.0),
    st.integers(0, 59),
)
def test_single_curve_cut_properties(curve, alpha, shift):
    values = np.asarray(curve, dtype=np.float32)[None, None, :]
    if values.max() == values.min():
        values = values + np.arange(values.shape[2], dtype=np.float32)[None, None, :]
    vol = volume_from(values, d_min=-shift)
    pvol = to_possibility_volume(vol)
    winners = wta(vol)
    intervals = compute_intervals(pvol, winners, alpha)
    # winner strictly inside the interval (extension guarantees slack)
    assert intervals.lower[0, 0] <= winners[0, 0] <= intervals.upper[0, 0]
    cut = alpha_cut(pvol.values[0, 0], alpha, valid=vol.valid[0, 0], disp_range=vol.disp_range)
    assert intervals.lower[0, 0] <= cut.min()
    assert intervals.upper[0, 0] >= cut.max()


def test_baseline_known_curve():
    # curve [2, 5, 3]: per-curve value = (c-5)/(2-5) -> [1, 0, 2/3]
    # threshold 0.9 keeps only the minimum; no widening
    vol = volume_from(np.array([[[2.0, 5.0, 3.0]]]), d_min=-1)
    intervals = baseline_intervals(vol, 0.9)
    assert intervals.lower[0, 0] == -1.0
    assert intervals.upper[0, 0] == -1.0


def test_baseline_constant_curve_full_range():
    costs = np.zeros((1, 2, 4), dtype=np.float32)
    costs[0, 0] = [3.0, 3.0, 3.0, 3.0]
    costs[0, 1] = [0.0, 9.0, 9.0, 9.0]
    vol = volume_from(costs, d_min=-3)
    intervals = baseline_intervals(vol, 0.9)
    assert intervals.lower[0, 0] == -3.0
    assert intervals.upper[0, 0] == 0.0


def test_baseline_hull_spans_threshold_entries():
    vol = volume_from(np.array([[[0.0, 10.0, 0.5, 10.0, 0.0]]]), d_min=0)
    intervals = baseline_intervals(vol, 0.9)
    # entries at value >= 0.9: disparities 0, 2, 4 -> hull [0, 4]
    assert (intervals.lower[0, 0], intervals.upper[0, 0]) == (0.0, 4.0)


def test_baseline_invalid_pixel_nan():
    costs = np.full((1, 2, 3), np.nan, dtype=np.float32)
    costs[0, 1] = [0.0, 5.0, 9.0]
    vol = CostVolume.from_costs(costs, np.isfinite(costs), DisparityRange(0, 2))
    intervals = baseline_intervals(vol)
    assert np.isnan(intervals.lower[0, 0]) and intervals.lower[0, 1] == 0.0


def test_interval_map_shape_check():
    with pytest.raises(ValueError):
        IntervalMap(np.zeros((2, 2)), np.zeros((3, 2)))
