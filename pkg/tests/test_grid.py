import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grid import (RE_OVERHEAD_60_OF_84, GridConstructionError, Slice, build_fixed_grid, build_grid,
                  build_mixed_grid, make_numerology, tile_duration_and_bits_capacity)


@pytest.mark.parametrize("mu, scs, slot, rb_bw", [
    (0, 15.0, 1.0, 180.0),
    (2, 60.0, 0.25, 720.0),
    (3, 120.0, 0.125, 1440.0),
])
def test_numerology_table(mu, scs, slot, rb_bw):
    num = make_numerology(mu)
    assert num.scs_khz == scs
    assert num.slot_ms == slot
    assert num.rb_bw_khz == rb_bw


@pytest.mark.parametrize("mu", [-1, 5, 2.5])
def test_numerology_rejects_out_of_range(mu):
    with pytest.raises(ValueError):
        make_numerology(mu)


def test_fixed_grids_match_table_sizes():
    g60 = build_fixed_grid(2, 50000.0)
    g120 = build_fixed_grid(3, 50000.0)
    assert len(g60) == 528 and g60.count_by_mu() == {2: 528}
    assert len(g120) == 528 and g120.count_by_mu() == {3: 528}
    assert max(t.freq_index for t in g60.tiles) == 65
    assert max(t.tti_index for t in g60.tiles) == 7
    assert max(t.freq_index for t in g120.tiles) == 32
    assert max(t.tti_index for t in g120.tiles) == 15


def test_fixed_grid_single_rb():
    grid = build_fixed_grid(2, 720.0)
    assert len(grid) == 8
    assert all(t.slice is Slice.SLICE1_EMBB for t in grid.tiles)


def test_fixed_grid_too_narrow():
    with pytest.raises(GridConstructionError):
        build_fixed_grid(2, 500.0)


def test_fixed_grid_slice_split_rounds_slice2_down():
    grid = build_fixed_grid(2, 7000.0)  # 9 RB
    per_tti = [t for t in grid.tiles if t.tti_index == 0]
    assert sum(t.slice is Slice.SLICE2_URLLC for t in per_tti) == 4
    # Slice1 은 낮은 주파수
    s1 = [t.start_freq_khz for t in per_tti if t.slice is Slice.SLICE1_EMBB]
    s2 = [t.start_freq_khz for t in per_tti if t.slice is Slice.SLICE2_URLLC]
    assert max(s1) < min(s2)


def test_mixed_grid_defaults():
    grid = build_mixed_grid(50000.0, 1910.0, 7)
    assert len(grid) == 504
    assert grid.count_by_mu() == {2: 264, 3: 240}
    assert grid.occupied_bw_khz == pytest.approx(47270.0)
    assert all((t.numerology.mu == 2) == (t.slice is Slice.SLICE1_EMBB) for t in grid.tiles)


def test_mixed_grid_minimal_two_bwp():
    grid = build_mixed_grid(3600.0, 0.0, 7)
    assert grid.count_by_mu() == {2: 24, 3: 16}


def test_mixed_grid_guard_too_wide():
    with pytest.raises(GridConstructionError):
        build_mixed_grid(5000.0, 1910.0)


def test_tile_time_bandwidth_product():
    t60 = build_fixed_grid(2, 50000.0).tiles[0]
    t60_14 = build_fixed_grid(2, 50000.0, symbols_per_rb=14).tiles[0]
    t120 = build_fixed_grid(3, 50000.0).tiles[0]
    assert tile_duration_and_bits_capacity(t60) == pytest.approx((0.125, 90.0))
    assert tile_duration_and_bits_capacity(t60_14) == pytest.approx((0.25, 180.0))
    assert tile_duration_and_bits_capacity(t120) == pytest.approx((0.0625, 90.0))
    assert tile_duration_and_bits_capacity(t60, re_overhead=RE_OVERHEAD_60_OF_84)[1] == pytest.approx(90.0 * 60 / 84)


def test_area_conservation_between_fixed_grids():
    g60 = build_fixed_grid(2, 50000.0)
    g120 = build_fixed_grid(3, 50000.0)
    assert g60.wt.sum() == pytest.approx(g120.wt.sum())


def test_mixed_deficit_is_guard_area():
    fixed = build_fixed_grid(2, 50000.0)
    mixed = build_mixed_grid(50000.0)
    deficit = fixed.wt.sum() - mixed.wt.sum()   # Hz·s per sub-frame
    guard_area = 1910e3 * 1e-3
    assert len(mixed) < len(fixed)
    assert abs(deficit - guard_area) <= 720e3 * 1e-3


def test_build_grid_unknown_layout():
    with pytest.raises(ValueError):
        build_grid("fixed-30")


def test_invalid_symbols_per_rb():
    with pytest.raises(ValueError):
        build_fixed_grid(2, 50000.0, symbols_per_rb=5)


@settings(max_examples=25, deadline=None)
@given(layout=st.sampled_from(["fixed-60", "fixed-120", "mixed"]),
       bandwidth=st.sampled_from([7000.0, 10000.0, 20000.0, 50000.0]),
       symbols=st.sampled_from([2, 4, 7, 14]))
def test_tiles_are_disjoint_and_fit(layout, bandwidth, symbols):
    grid = build_grid(layout, bandwidth, symbols_per_rb=symbols)
    assert grid.occupied_bw_khz <= bandwidth + 1e-9
    keys = {(t.numerology.mu, t.tti_index, t.freq_index) for t in grid.tiles}
    assert len(keys) == len(grid)
    t0, t1 = grid.start_ms, grid.start_ms + grid.duration_ms
    f0 = np.array([t.start_freq_khz for t in grid.tiles])
    f1 = np.array([t.end_freq_khz for t in grid.tiles])
    overlap = ((t0[:, None] < t1[None, :] - 1e-9) & (t0[None, :] < t1[:, None] - 1e-9)
               & (f0[:, None] < f1[None, :] - 1e-9) & (f0[None, :] < f1[:, None] - 1e-9))
    np.fill_diagonal(overlap, False)
    assert not overlap.any()
    # sub-frame 전체 면적 = 점유 RB 대역폭 × 1 ms
    assert grid.wt.sum() == pytest.approx((grid.occupied_bw_khz - grid.guard_band_khz) * 1e3 * 1e-3)


def test_split_rounds_halves_subframe():
    grid = build_mixed_grid(50000.0)
    first, second = grid.split_rounds(2)
    assert len(first) + len(second) == len(grid)
    assert len(first) == len(second)
    assert first.subframe_ms == 0.5
    assert second.time_origin_ms == 0.5
    assert np.all(second.start_ms >= -1e-12) and np.all(second.start_ms < 0.5)
    assert np.all(first.start_ms + first.duration_ms <= 0.5 + 1e-12)


def test_round_indices_partition():
    grid = build_fixed_grid(3, 10000.0)
    idx = grid.round_indices(2)
    assert sorted(idx[0] + idx[1]) == list(range(len(grid)))


def test_split_rounds_rejects_straddling_tti():
    grid = build_fixed_grid(2, 10000.0, symbols_per_rb=14)  # 0.25 ms TTI
    with pytest.raises(GridConstructionError):
        grid.split_rounds(8)


def test_noise_per_tile_scales_with_rb_bandwidth():
    grid = build_mixed_grid(50000.0)
    noise = grid.noise_w()
    mu3 = np.array([t.numerology.mu == 3 for t in grid.tiles])
    assert noise[mu3][0] == pytest.approx(2 * noise[~mu3][0])
    assert noise[~mu3][0] == pytest.approx(10 ** ((-174 + 7 - 30) / 10) * 720e3)
