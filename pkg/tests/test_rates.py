import numpy as np
import pytest

from grid import build_fixed_grid, build_mixed_grid
from optimizer import AllocationPolicy
from rates import (RateTable, SinrGap, build_rate_table, constraint_slacks, network_rate, sinr_gap,
                   slice_rates, spectral_efficiency, tile_bits, user_rate)
from traffic import Service, embb_qos, urllc_qos


def test_sinr_gaps():
    gaps = SinrGap.from_blep()
    assert gaps.gamma_e == pytest.approx(3.5322, abs=1e-3)
    assert gaps.gamma_u == pytest.approx(22.0077, abs=1e-3)
    np.testing.assert_allclose(gaps.per_user([Service.URLLC, Service.EMBB]), [gaps.gamma_u, gaps.gamma_e])


@pytest.mark.parametrize("blep", [0.0, 0.2, 0.5])
def test_sinr_gap_rejects_blep(blep):
    with pytest.raises(ValueError):
        sinr_gap(blep, Service.EMBB)


def test_spectral_efficiency_validation():
    assert spectral_efficiency(3.0, 1.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        spectral_efficiency(-1.0, 1.0)


def test_tile_bits_examples():
    gaps = SinrGap.from_blep()
    mixed = build_mixed_grid(50000.0)
    t60 = next(t for t in mixed.tiles if t.numerology.mu == 2)
    t120 = next(t for t in mixed.tiles if t.numerology.mu == 3)
    assert tile_bits(t60, gaps.gamma_e, Service.EMBB, gaps) == pytest.approx(90.0)
    assert tile_bits(t120, 3 * gaps.gamma_u, Service.URLLC, gaps) == pytest.approx(180.0)
    assert tile_bits(t60, 0.0, Service.EMBB, gaps) == 0.0


def _alloc(x, assoc, p=None):
    x = np.asarray(x, dtype=float)
    return AllocationPolicy(x=x, p=np.zeros_like(x) if p is None else np.asarray(p, dtype=float),
                            assoc=np.asarray(assoc))


def test_user_and_network_rate_are_linear_in_x():
    table = RateTable(bits=np.full((1, 1, 1), 90.0))
    assert user_rate(_alloc([[1.0]], [[1]]), table, 0) == pytest.approx(90.0)

    table2 = RateTable(bits=np.full((1, 2, 1), 90.0))
    assert user_rate(_alloc([[0.5, 0.5]], [[1]]), table2, 0) == pytest.approx(90.0)

    both = RateTable(bits=np.array([[[90.0]], [[180.0]]]))
    assert network_rate(_alloc([[1.0], [1.0]], [[1, 1]]), both) == pytest.approx(270.0)


def test_unassociated_user_has_zero_rate():
    table = RateTable(bits=np.full((1, 1, 2), 90.0))
    assert user_rate(_alloc([[1.0]], [[0], [0]]), table, 0) == 0.0


def test_rate_table_uses_candidate_beam():
    rng = np.random.default_rng(0)
    from radio import ChannelState
    grid = build_fixed_grid(2, 1440.0)  # 2 RB × 8 TTI
    n_tiles = len(grid)
    channel = ChannelState(small_scale=rng.exponential(1.0, (2, 2, n_tiles)),
                           antenna_gain=np.array([[2.5e6, 1.0], [1.0, 2.5e6]]),
                           path_loss=np.full(2, 1e-10), los=np.ones(2, dtype=bool), aligned=np.array([0, 1]))
    p = np.zeros((2, n_tiles))
    p[0, 0], p[1, 0] = 1.0, 2.0
    alloc = _alloc((p > 0).astype(float), [[1, 0], [0, 1]], p)
    gaps = SinrGap.from_blep()
    noise = grid.noise_w()
    table = build_rate_table(alloc, channel, grid, [Service.EMBB, Service.EMBB], gaps, noise)
    g = channel.gains
    # 사용자 0 이 빔 0: 간섭은 빔 1 의 사용자 1 전력
    expected = 90.0 * np.log2(1 + 1.0 * g[0, 0, 0] / (gaps.gamma_e * (noise[0] + g[0, 1, 0] * 2.0)))
    assert table.bits[0, 0, 0] == pytest.approx(expected)
    # 사용자 0 이 빔 1 로 옮긴다면: 자기 전력은 간섭에서 빠지고 빔 1 에는 사용자 1 만 남음
    moved = 90.0 * np.log2(1 + 1.0 * g[0, 1, 0] / (gaps.gamma_e * (noise[0] + g[0, 0, 0] * 0.0)))
    assert table.bits[0, 0, 1] == pytest.approx(moved)
    assert table.bits[0, 1, 0] == 0.0


def test_constraint_slacks_signs():
    grid = build_fixed_grid(2, 7000.0)  # 9 RB: Slice1 5, Slice2 4
    s2 = grid.is_slice2
    n_tiles = len(grid)
    bits = np.zeros((2, n_tiles, 1))
    bits[:, :, 0] = 100.0
    table = RateTable(bits=bits)
    x = np.zeros((2, n_tiles))
    x[0, np.flatnonzero(~s2)[:3]] = 1.0     # eMBB: 300 bits on Slice1
    x[1, np.flatnonzero(s2)[:2]] = 1.0      # URLLC: 200 bits on Slice2
    p = x * 10.0
    alloc = _alloc(x, [[1, 1]], p)
    qos = [embb_qos(250.0, zeta_bits=50.0), urllc_qos()]

    r1, r2 = slice_rates(alloc, table, grid)
    assert r1.tolist() == [300.0, 0.0] and r2.tolist() == [0.0, 200.0]

    slacks = constraint_slacks(alloc, table, qos, grid, p_max=100.0, tau=np.array([0.0, 256.0]))
    assert slacks.c5[0] == pytest.approx(50.0) and np.isnan(slacks.c5[1])
    assert slacks.c6[1] == pytest.approx(-56.0) and np.isnan(slacks.c6[0])
    assert slacks.c7[0] == pytest.approx(-50.0)
    assert slacks.c6_rel[1] == pytest.approx(-56.0 / 256.0)
    assert slacks.c9[0] == pytest.approx(50.0)
    assert slacks.qos_violated()
    assert set(slacks.violated()) == {"c6_rel", "c7_rel"}


def test_target_scale_halves_embb_targets():
    grid = build_fixed_grid(2, 720.0)
    table = RateTable(bits=np.full((1, 8, 1), 10.0))
    x = np.zeros((1, 8))
    x[0, :5] = 1.0
    alloc = _alloc(x, [[1]], x)
    slacks = constraint_slacks(alloc, table, [embb_qos(80.0)], grid, 100.0, target_scale=0.5)
    assert slacks.c5[0] == pytest.approx(10.0)
    assert not slacks.violated()
