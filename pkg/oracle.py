#!/usr/bin/env python3
# oracle.py - 작은 인스턴스용 전수 탐색 기준해 (이진 I, 이진 X, 양자화 P)
#
# 빔 배치마다 타일별 결합 선택지 (빔 슬롯당 없음 또는 (사용자, 전력 레벨>0)) 를 만들고,
# 앞쪽 타일들은 numpy 외적 합 배열로, 나머지는 itertools.product 로 조합한다.

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from optimizer import AllocationPolicy, assoc_from_beams, evaluate, slacks_for
from scenario import Scenario
from sim_config import ScenarioConfig, with_override
from sim_runner import build_drop

logger = logging.getLogger("mmwave_ee.oracle")

DEFAULT_LEVELS = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_CAP = 10 ** 8
PREFIX_LIMIT = 200_000
MAX_USERS, MAX_BEAMS, MAX_TILES = 4, 2, 8


class EnumerationTooLargeError(ValueError):
    def __init__(self, size, cap):
        super().__init__(f"전수 탐색 크기 {size:,} 가 한도 {cap:,} 를 넘음")
        self.size = size
        self.cap = cap


@dataclass
class TinyInstance:
    scenario: object
    power_levels: tuple = DEFAULT_LEVELS   # P_max 대비 비율
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        sc = self.scenario
        if sc.n_users > MAX_USERS or sc.n_beams > MAX_BEAMS or sc.n_tiles > MAX_TILES:
            raise ValueError(f"작은 인스턴스 한도 초과: 사용자 {sc.n_users}/{MAX_USERS}, "
                             f"빔 {sc.n_beams}/{MAX_BEAMS}, 타일 {sc.n_tiles}/{MAX_TILES}")
        levels = np.asarray(self.power_levels, dtype=float)
        if levels.size == 0 or np.any(levels < 0) or np.any(levels > 1):
            raise ValueError(f"전력 레벨은 [0, 1] 범위의 P_max 비율: {self.power_levels}")

    @property
    def levels_w(self):
        """0 을 뺀 레벨 (W) - 0 은 '할당 없음' 선택지로 표현"""
        levels = np.unique(np.asarray(self.power_levels, dtype=float)) * self.scenario.power.p_max
        return levels[levels > 0]


@dataclass
class OracleResult:
    ee: float                 # 실행 가능점이 없으면 nan
    alloc: AllocationPolicy   # 실행 가능점이 없으면 None
    rate_bits: float
    power_w: float
    n_points: int
    n_feasible: int
    n_assignments: int
    mean_feasible_ee: float

    @property
    def feasible(self):
        return self.alloc is not None


@dataclass
class _Best:
    ee: float = -math.inf
    beam: tuple = None
    choice: list = None
    n_feasible: int = 0
    ee_sum: float = 0.0
    extra: dict = field(default_factory=dict)

    def merge(self, other):
        self.n_feasible += other.n_feasible
        self.ee_sum += other.ee_sum
        if other.ee > self.ee:
            self.ee, self.beam, self.choice = other.ee, other.beam, other.choice


def _slot_options(beam, eligible, k, b, levels):
    users = [u for u in range(len(beam)) if beam[u] == b and eligible[u, k]]
    return [None] + [(u, lv) for u in users for lv in levels]


def _tile_options(scenario, beam, k, levels):
    """타일 k 의 결합 선택지와 (Slice 비트 (n, U), 빔 전력 (n, M), x 개수 (n,))"""
    eligible = scenario.eligible()
    n_users, n_beams = scenario.n_users, scenario.n_beams
    g = scenario.channel.gains[:, :, k]
    noise = scenario.noise_w[k]
    wt = scenario.grid.wt[k]
    gamma = scenario.gamma

    combos = list(itertools.product(*[_slot_options(beam, eligible, k, b, levels) for b in range(n_beams)]))
    bits = np.zeros((len(combos), n_users))
    power = np.zeros((len(combos), n_beams))
    count = np.zeros(len(combos))
    for i, combo in enumerate(combos):
        for b, slot in enumerate(combo):
            if slot is not None:
                power[i, b] = slot[1]
                count[i] += 1
        for b, slot in enumerate(combo):
            if slot is None:
                continue
            u, lv = slot
            others = [t for t in range(n_beams) if t != b]
            if scenario.self_interference:
                interference = lv * g[u, others].sum()
            else:
                interference = float(np.dot(g[u, others], power[i, others]))
            bits[i, u] = wt * np.log2(1.0 + lv * g[u, b] / (gamma[u] * (noise + interference)))
    return combos, bits, power, count


def _assignments(n_users, n_beams):
    return list(itertools.product(range(-1, n_beams), repeat=n_users))


def enumeration_size(instance):
    """실제로 조합하는 축소 격자 크기: Σ_배치 Π_타일 Π_빔 (1 + 후보 사용자 수 × 레벨 수)"""
    sc = instance.scenario
    eligible = sc.eligible()
    n_levels = len(instance.levels_w)
    total = 0
    for beam in _assignments(sc.n_users, sc.n_beams):
        size = 1
        for k in range(sc.n_tiles):
            for b in range(sc.n_beams):
                n = sum(1 for u in range(sc.n_users) if beam[u] == b and eligible[u, k])
                size *= 1 + n * n_levels
        total += size
    return total


def _search_assignment(instance, beam):
    """빔 배치 하나에 대한 최적점 - 이 배치 안에서는 타일 선택이 서로 독립"""
    sc = instance.scenario
    levels = instance.levels_w
    pm = sc.power
    s2 = sc.grid.is_slice2
    need1 = sc.e_bits
    need2 = np.where(sc.is_urllc, sc.tau_bits, sc.zeta_bits)
    best = _Best()

    # 빔이 없는 사용자는 목표가 있으면 불가능
    unserved = np.array([b < 0 for b in beam])
    if np.any(unserved & ((need1 > 0) | (need2 > 0))):
        return best

    tiles = [_tile_options(sc, beam, k, levels) for k in range(sc.n_tiles)]
    sizes = [len(t[0]) for t in tiles]

    # 앞쪽 타일은 외적 합으로 한 배열에
    n_prefix = 0
    prefix = 1
    while n_prefix < len(tiles) and prefix * sizes[n_prefix] <= PREFIX_LIMIT:
        prefix *= sizes[n_prefix]
        n_prefix += 1

    n_users, n_beams = sc.n_users, sc.n_beams
    r1 = np.zeros((1, n_users))
    r2 = np.zeros((1, n_users))
    bp = np.zeros((1, n_beams))
    cnt = np.zeros(1)
    for k in range(n_prefix):
        _, bits, power, count = tiles[k]
        add1 = bits if not s2[k] else np.zeros_like(bits)
        add2 = bits if s2[k] else np.zeros_like(bits)
        r1 = (r1[:, None, :] + add1[None, :, :]).reshape(-1, n_users)
        r2 = (r2[:, None, :] + add2[None, :, :]).reshape(-1, n_users)
        bp = (bp[:, None, :] + power[None, :, :]).reshape(-1, n_beams)
        cnt = (cnt[:, None] + count[None, :]).reshape(-1)

    # 빔 예산을 넘는 접두 조합은 뒤에서 전력을 더해도 계속 초과
    budget = pm.p_max * (1.0 + 1e-12)
    keep = np.flatnonzero(np.all(bp <= budget, axis=1))
    r1, r2, bp, cnt = r1[keep], r2[keep], bp[keep], cnt[keep]
    prefix_shape = sizes[:n_prefix]

    suffix_tiles = list(range(n_prefix, len(tiles)))
    for combo in itertools.product(*[range(sizes[k]) for k in suffix_tiles]):
        s1 = np.zeros(n_users)
        s2b = np.zeros(n_users)
        sp = np.zeros(n_beams)
        sc_cnt = 0.0
        for k, i in zip(suffix_tiles, combo):
            _, bits, power, count = tiles[k]
            if s2[k]:
                s2b += bits[i]
            else:
                s1 += bits[i]
            sp += power[i]
            sc_cnt += count[i]

        tot_p = bp + sp
        ok = np.all(tot_p <= budget, axis=1)
        ok &= np.all(r1 + s1 >= need1 - 1e-9, axis=1)
        ok &= np.all(r2 + s2b >= need2 - 1e-9, axis=1)
        if not ok.any():
            continue
        rate = (r1[ok] + s1).sum(axis=1) + (r2[ok] + s2b).sum(axis=1)
        pc = tot_p[ok].sum(axis=1) / pm.zeta + pm.n_tx * pm.p_c * (cnt[ok] + sc_cnt) + pm.p_s
        ee = rate / (sc.t_f_s * pc)
        best.n_feasible += int(ok.sum())
        best.ee_sum += float(ee.sum())
        i_best = int(np.argmax(ee))
        if ee[i_best] > best.ee:
            flat = int(keep[np.flatnonzero(ok)[i_best]])
            head = list(np.unravel_index(flat, prefix_shape)) if prefix_shape else []
            best.ee = float(ee[i_best])
            best.beam = beam
            best.choice = [int(i) for i in head] + list(combo)

    # 선택지 목록은 복원에 필요
    best.extra = {"tiles": [t[0] for t in tiles]}
    return best


def _rebuild(instance, beam, choice, options):
    sc = instance.scenario
    x = np.zeros((sc.n_users, sc.n_tiles))
    p = np.zeros((sc.n_users, sc.n_tiles))
    for k, i in enumerate(choice):
        for slot in options[k][i]:
            if slot is not None:
                u, lv = slot
                x[u, k], p[u, k] = 1.0, lv
    return AllocationPolicy(x=x, p=p, assoc=assoc_from_beams(np.asarray(beam), sc.n_beams))


def enumerate_optimum(instance, workers=1):
    """축소 격자 전수 탐색으로 EE 최대 실행 가능점. 빔 배치 단위로 워커에 나눠 max 로 병합"""
    size = enumeration_size(instance)
    if size > instance.cap:
        raise EnumerationTooLargeError(size, instance.cap)
    sc = instance.scenario
    beams = _assignments(sc.n_users, sc.n_beams)
    logger.info(f"🔍 전수 탐색: 빔 배치 {len(beams)}개, 격자 {size:,}점")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(lambda b: _search_assignment(instance, b), beams))
    else:
        parts = [_search_assignment(instance, b) for b in beams]

    total = _Best()
    options = None
    # 배치 순서대로 병합 (동률이면 먼저 나온 배치)
    for part in parts:
        before = total.ee
        total.merge(part)
        if total.ee > before:
            options = part.extra["tiles"]

    if total.beam is None:
        logger.warning("⚠️ 실행 가능점 없음")
        return OracleResult(ee=float("nan"), alloc=None, rate_bits=0.0, power_w=0.0, n_points=size,
                            n_feasible=0, n_assignments=len(beams), mean_feasible_ee=float("nan"))

    alloc = _rebuild(instance, total.beam, total.choice, options)
    rate, pc, ee = evaluate(sc, alloc)
    logger.info(f"✅ 최적 EE={ee:.6g} bits/J (실행 가능 {total.n_feasible:,}점)")
    return OracleResult(ee=ee, alloc=alloc, rate_bits=rate, power_w=pc, n_points=size,
                        n_feasible=total.n_feasible, n_assignments=len(beams),
                        mean_feasible_ee=total.ee_sum / total.n_feasible)


def project_to_lattice(instance, alloc):
    """각 전력을 그 이하의 가장 가까운 레벨로 내림 (레벨 0 이 되면 x 도 0)"""
    levels = np.concatenate([[0.0], instance.levels_w])
    p = np.asarray(alloc.p, dtype=float)
    idx = np.searchsorted(levels, p * (1.0 + 1e-12), side="right") - 1
    q = levels[np.clip(idx, 0, len(levels) - 1)]
    x = np.where((np.asarray(alloc.x) > 0.5) & (q > 0), 1.0, 0.0)
    return AllocationPolicy(x=x, p=np.where(x > 0, q, 0.0), assoc=np.asarray(alloc.assoc).copy())


def lattice_feasible(instance, alloc, tol=1e-9):
    slacks = slacks_for(instance.scenario, alloc)
    return not slacks.violated(tol)


def make_tiny_instance(n_users=3, n_beams=2, n_tiles=4, n_levels=5, seed=0, n_urllc=None,
                       embb_bits=200.0, urllc_packets=1, config=None, cap=DEFAULT_CAP):
    """시드 하나로 작은 시나리오 생성. 타일은 Slice1 / Slice2 에서 반씩 고름"""
    config = config or ScenarioConfig(n_beams=n_beams)
    n_urllc = n_users // 2 if n_urllc is None else n_urllc
    for key, value in (("n_beams", n_beams), ("n_embb", n_users - n_urllc), ("n_urllc", n_urllc),
                       ("qos.embb_rate_bits", embb_bits), ("grid.bandwidth_khz", 10000.0),
                       ("grid.layout", "mixed")):
        config = with_override(config, key, value)

    ctx = build_drop(config, seed, 0)
    s2 = ctx.grid.is_slice2
    n2 = n_tiles // 2
    pick = sorted(np.flatnonzero(~s2)[: n_tiles - n2].tolist() + np.flatnonzero(s2)[:n2].tolist())
    grid = ctx.grid.take(pick)
    tau = np.array([urllc_packets * 8 * config.traffic.packet_bytes if u.is_urllc else 0.0
                    for u in ctx.users])
    scenario = Scenario(grid=grid, channel=ctx.channel.take_tiles(pick), users=ctx.users, beams=ctx.beams,
                        power=ctx.power, gaps=ctx.gaps, noise_w=ctx.noise_w[pick], tau_bits=tau,
                        t_f_ms=config.run.t_f_ms, self_interference=config.opt.self_interference_form)
    levels = tuple(np.linspace(0.0, 1.0, n_levels).tolist()) if n_levels > 1 else (1.0,)
    return TinyInstance(scenario=scenario, power_levels=levels, cap=cap)
