#!/usr/bin/env python3
# grid.py - 5G NR numerology 기반 시간-주파수 RB 그리드 (fixed / mixed)

import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property

import numpy as np

SUBFRAME_MS = 1.0
SC_PER_RB = 12
SYMBOLS_PER_SLOT = 14
VALID_SYMBOLS_PER_RB = (2, 4, 7, 14)

# 표준 채널 대역폭별 전송 대역폭 (kHz) - 대역 양 끝 guard 제외
# 50 MHz → 66 RB @ 60 kHz, 33 RB @ 120 kHz (둘 다 47,520 kHz)
TRANSMISSION_BW_KHZ = {
    50000.0: 47520.0,
    100000.0: 95040.0,
    200000.0: 190080.0,
    400000.0: 380160.0,
}

# mixed 그리드의 BWP 대역폭 비율 (33·720 : 15·1440)
DEFAULT_SLICE_SPLIT = (33 * 720.0) / (33 * 720.0 + 15 * 1440.0)

# RB 당 데이터 RE 60 개 (12 SC × 7 심볼 = 84 RE 중)
RE_OVERHEAD_60_OF_84 = 60.0 / 84.0


class GridConstructionError(ValueError):
    """대역폭에 요청한 RB / BWP 가 들어가지 않을 때"""


class Slice(Enum):
    SLICE1_EMBB = 1
    SLICE2_URLLC = 2


@dataclass(frozen=True)
class Numerology:
    mu: int
    scs_khz: float
    slot_ms: float
    rb_bw_khz: float


def make_numerology(mu):
    """μ → (SCS, slot 길이, RB 대역폭)"""
    if not isinstance(mu, (int, np.integer)) or not 0 <= mu <= 4:
        raise ValueError(f"numerology μ 는 0~4 정수여야 함: {mu!r}")
    scs = 15.0 * 2 ** int(mu)
    return Numerology(mu=int(mu), scs_khz=scs, slot_ms=1.0 / 2 ** int(mu), rb_bw_khz=SC_PER_RB * scs)


@dataclass(frozen=True)
class RbTile:
    numerology: Numerology
    tti_index: int
    freq_index: int
    slice: Slice
    tti_duration_ms: float
    start_freq_khz: float

    @property
    def start_time_ms(self):
        return self.tti_index * self.tti_duration_ms

    @property
    def end_time_ms(self):
        return (self.tti_index + 1) * self.tti_duration_ms

    @property
    def end_freq_khz(self):
        return self.start_freq_khz + self.numerology.rb_bw_khz


def tti_duration_ms(numerology, symbols_per_rb):
    return (symbols_per_rb / SYMBOLS_PER_SLOT) * numerology.slot_ms


def tile_duration_and_bits_capacity(tile, re_overhead=1.0):
    """타일 길이(ms)와 W_RB·T_RB (Hz·s) 반환"""
    wt = tile.numerology.rb_bw_khz * 1e3 * tile.tti_duration_ms * 1e-3
    return tile.tti_duration_ms, wt * re_overhead


@dataclass(frozen=True)
class ResourceGrid:
    layout: str
    tiles: tuple
    guard_band_khz: float
    total_bw_khz: float
    subframe_ms: float = SUBFRAME_MS
    re_overhead: float = 1.0
    time_origin_ms: float = 0.0
    symbols_per_rb: int = 7

    def __len__(self):
        return len(self.tiles)

    # ---- 벡터화된 타일 속성 (optimizer / rates 에서 사용) ----
    @cached_property
    def wt(self):
        return np.array([tile_duration_and_bits_capacity(t, self.re_overhead)[1] for t in self.tiles])

    @cached_property
    def is_slice2(self):
        return np.array([t.slice is Slice.SLICE2_URLLC for t in self.tiles], dtype=bool)

    @cached_property
    def start_ms(self):
        return np.array([t.start_time_ms for t in self.tiles]) - self.time_origin_ms

    @cached_property
    def duration_ms(self):
        return np.array([t.tti_duration_ms for t in self.tiles])

    @cached_property
    def rb_bw_hz(self):
        return np.array([t.numerology.rb_bw_khz * 1e3 for t in self.tiles])

    @cached_property
    def center_freq_hz(self):
        return np.array([(t.start_freq_khz + t.numerology.rb_bw_khz / 2) * 1e3 for t in self.tiles])

    @property
    def occupied_bw_khz(self):
        # 서로 다른 주파수 RB 들의 대역폭 합 + guard
        distinct = {(t.start_freq_khz, t.numerology.rb_bw_khz) for t in self.tiles}
        return sum(bw for _, bw in distinct) + self.guard_band_khz

    def noise_w(self, noise_figure_db=7.0, thermal_dbm_hz=-174.0):
        """타일별 잡음 전력 N_o (W) = kT·NF·W_RB"""
        dbm_per_hz = thermal_dbm_hz + noise_figure_db
        return 10 ** ((dbm_per_hz - 30.0) / 10.0) * self.rb_bw_hz

    def count_by_mu(self):
        counts = {}
        for t in self.tiles:
            counts[t.numerology.mu] = counts.get(t.numerology.mu, 0) + 1
        return counts

    def validate(self):
        """점유 대역폭과 타일 중첩 여부 검사"""
        if self.occupied_bw_khz > self.total_bw_khz + 1e-9:
            raise GridConstructionError(
                f"점유 대역폭 {self.occupied_bw_khz:.1f} kHz > 전체 {self.total_bw_khz:.1f} kHz")
        if len(self.tiles) < 2:
            return self
        t0 = np.array([t.start_time_ms for t in self.tiles])
        t1 = np.array([t.end_time_ms for t in self.tiles])
        f0 = np.array([t.start_freq_khz for t in self.tiles])
        f1 = np.array([t.end_freq_khz for t in self.tiles])
        eps = 1e-9
        overlap = ((t0[:, None] < t1[None, :] - eps) & (t0[None, :] < t1[:, None] - eps)
                   & (f0[:, None] < f1[None, :] - eps) & (f0[None, :] < f1[:, None] - eps))
        np.fill_diagonal(overlap, False)
        if overlap.any():
            i, j = np.argwhere(overlap)[0]
            raise GridConstructionError(f"타일 {i} 와 {j} 가 시간-주파수 평면에서 겹침")
        return self

    def take(self, indices):
        """지정한 타일만 포함하는 서브 그리드"""
        return replace(self, tiles=tuple(self.tiles[i] for i in indices))

    def round_indices(self, n_rounds):
        """라운드별 타일 인덱스 (시작 시각 기준)"""
        if n_rounds < 1:
            raise ValueError(f"라운드 수는 1 이상이어야 함: {n_rounds}")
        round_ms = self.subframe_ms / n_rounds
        out = []
        for r in range(n_rounds):
            lo, hi = r * round_ms, (r + 1) * round_ms
            idx = [i for i, t in enumerate(self.tiles) if lo - 1e-9 <= t.start_time_ms < hi - 1e-9]
            if any(self.tiles[i].end_time_ms > hi + 1e-9 for i in idx):
                raise GridConstructionError(f"TTI 가 라운드 경계 {hi} ms 를 넘음")
            out.append(idx)
        return out

    def split_rounds(self, n_rounds):
        """sub-frame 을 n 개 스케줄링 라운드로 분할 (T_f = subframe / n)"""
        indices = self.round_indices(n_rounds)
        if n_rounds == 1:
            return [self]
        round_ms = self.subframe_ms / n_rounds
        return [replace(self, tiles=tuple(self.tiles[i] for i in idx), subframe_ms=round_ms,
                        time_origin_ms=r * round_ms)
                for r, idx in enumerate(indices)]


def _check_symbols(symbols_per_rb):
    if symbols_per_rb not in VALID_SYMBOLS_PER_RB:
        raise ValueError(f"symbols_per_rb 는 {VALID_SYMBOLS_PER_RB} 중 하나: {symbols_per_rb}")


def transmission_bw_khz(total_bw_khz):
    return TRANSMISSION_BW_KHZ.get(float(total_bw_khz), float(total_bw_khz))


def _n_tti(numerology, symbols_per_rb, subframe_ms):
    return int(round(subframe_ms / tti_duration_ms(numerology, symbols_per_rb)))


def _make_tiles(numerology, n_freq, symbols_per_rb, slice_of, f_start_khz, subframe_ms):
    dur = tti_duration_ms(numerology, symbols_per_rb)
    tiles = []
    for tti in range(_n_tti(numerology, symbols_per_rb, subframe_ms)):
        for f in range(n_freq):
            tiles.append(RbTile(numerology=numerology, tti_index=tti, freq_index=f,
                                slice=slice_of(f), tti_duration_ms=dur,
                                start_freq_khz=f_start_khz + f * numerology.rb_bw_khz))
    return tiles


def build_fixed_grid(mu, total_bw_khz, symbols_per_rb=7, slice_split=DEFAULT_SLICE_SPLIT,
                     re_overhead=1.0, subframe_ms=SUBFRAME_MS):
    """단일 numerology 그리드. 주파수 RB 를 slice_split 비율로 Slice1/Slice2 분할"""
    if mu not in (2, 3):
        raise ValueError(f"mmWave 데이터 그리드는 μ=2 또는 μ=3 만 허용: {mu}")
    _check_symbols(symbols_per_rb)
    if not 0.0 < slice_split < 1.0:
        raise ValueError(f"slice_split 는 (0,1) 범위: {slice_split}")
    num = make_numerology(mu)
    usable = transmission_bw_khz(total_bw_khz)
    n_freq = int(math.floor(usable / num.rb_bw_khz + 1e-9))
    if n_freq < 1:
        raise GridConstructionError(
            f"대역폭 {total_bw_khz} kHz 에 μ={mu} RB ({num.rb_bw_khz} kHz) 가 하나도 들어가지 않음")
    # Slice2 RB 수는 내림, 나머지는 Slice1 (낮은 주파수 쪽)
    n_slice2 = int(math.floor((1.0 - slice_split) * n_freq))
    n_slice1 = n_freq - n_slice2
    f_start = (total_bw_khz - usable) / 2.0

    def slice_of(f):
        return Slice.SLICE1_EMBB if f < n_slice1 else Slice.SLICE2_URLLC

    tiles = _make_tiles(num, n_freq, symbols_per_rb, slice_of, f_start, subframe_ms)
    layout = {2: "fixed-60", 3: "fixed-120"}[mu]
    grid = ResourceGrid(layout=layout, tiles=tuple(tiles), guard_band_khz=0.0,
                        total_bw_khz=float(total_bw_khz), subframe_ms=subframe_ms,
                        re_overhead=re_overhead, symbols_per_rb=symbols_per_rb)
    return grid.validate()


def build_mixed_grid(total_bw_khz, guard_band_khz=1910.0, symbols_per_rb=7,
                     re_overhead=1.0, subframe_ms=SUBFRAME_MS):
    """BWP1 (μ=2, eMBB) + guard + BWP2 (μ=3, URLLC) 두 개의 연속 대역"""
    if guard_band_khz < 0:
        raise ValueError(f"guard band 는 0 이상: {guard_band_khz}")
    _check_symbols(symbols_per_rb)
    num1, num2 = make_numerology(2), make_numerology(3)
    usable = transmission_bw_khz(total_bw_khz)

    # BWP1 은 전송 대역의 절반을 μ=2 RB 로 (올림), BWP2 는 guard 이후 남은 대역
    n1 = int(math.ceil(usable / 2.0 / num1.rb_bw_khz - 1e-9))
    remaining = usable - n1 * num1.rb_bw_khz - guard_band_khz
    n2 = int(math.floor(remaining / num2.rb_bw_khz + 1e-9)) if remaining > 0 else 0
    if n1 < 1 or n2 < 1:
        raise GridConstructionError(
            f"BWP 두 개 + guard {guard_band_khz} kHz 가 {total_bw_khz} kHz 에 들어가지 않음 (n1={n1}, n2={n2})")

    f_start = (total_bw_khz - usable) / 2.0
    tiles = _make_tiles(num1, n1, symbols_per_rb, lambda f: Slice.SLICE1_EMBB, f_start, subframe_ms)
    bwp2_start = f_start + n1 * num1.rb_bw_khz + guard_band_khz
    tiles += _make_tiles(num2, n2, symbols_per_rb, lambda f: Slice.SLICE2_URLLC, bwp2_start, subframe_ms)

    grid = ResourceGrid(layout="mixed", tiles=tuple(tiles), guard_band_khz=float(guard_band_khz),
                        total_bw_khz=float(total_bw_khz), subframe_ms=subframe_ms,
                        re_overhead=re_overhead, symbols_per_rb=symbols_per_rb)
    return grid.validate()


def build_grid(layout, bandwidth_khz=50000.0, guard_band_khz=1910.0, symbols_per_rb=7,
               slice_split=DEFAULT_SLICE_SPLIT, re_overhead=1.0):
    """config 의 grid.layout 문자열로 그리드 생성"""
    if layout == "fixed-60":
        return build_fixed_grid(2, bandwidth_khz, symbols_per_rb, slice_split, re_overhead)
    if layout == "fixed-120":
        return build_fixed_grid(3, bandwidth_khz, symbols_per_rb, slice_split, re_overhead)
    if layout == "mixed":
        return build_mixed_grid(bandwidth_khz, guard_band_khz, symbols_per_rb, re_overhead)
    raise ValueError(f"알 수 없는 grid.layout: {layout!r} (fixed-60 | fixed-120 | mixed)")
