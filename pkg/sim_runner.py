#!/usr/bin/env python3
# sim_runner.py - 시드 고정 Monte-Carlo 드롭 실행 (10 ms 프레임, 라운드별 최적화)

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from baselines import solve_subframe
from grid import build_grid
from optimizer import true_tile_bits
from power import PowerModel
from radio import PathLossModel, draw_channel, make_beam_set
from rates import SinrGap
from scenario import Scenario, make_users, place_users
from sim_config import with_override
from traffic import effective_bandwidth, embb_qos, poisson_arrivals, qos_exponent, urllc_qos, urllc_rate_target

logger = logging.getLogger("mmwave_ee.sim_runner")

SWEEP_AXES = ("n_urllc", "n_embb", "run.t_f_ms", "grid.layout", "seed", "radio.beta", "run.method")
AXIS_ALIASES = {"t_f_ms": "run.t_f_ms", "layout": "grid.layout", "beta": "radio.beta", "method": "run.method"}

TRACE_COLUMNS = ["seed", "drop", "subframe", "round", "j", "q", "R_bits", "PC_w", "EE", "Y", "binary_residual",
                 "sca_iters"]
PACKET_COLUMNS = ["seed", "drop", "user", "arrival_ms", "delivered_ms", "latency_ms"]
ROUND_COLUMNS = ["seed", "drop", "subframe", "round", "method", "R_bits", "PC_w", "EE", "beams_utilized",
                 "dinkelbach_iters", "sca_iters", "converged", "infeasible", "qos_violated", "binary_deviation",
                 "solve_s"]
RATE_COLUMNS = ["seed", "drop", "subframe", "round", "user", "rate_bits"]


@dataclass
class DropContext:
    """드롭 하나 동안 고정되는 상태 (배치, 대규모 채널, 큐)"""
    seed: int
    drop_index: int
    grid: object
    beams: object
    users: list
    channel: object
    power: PowerModel
    gaps: SinrGap
    noise_w: np.ndarray
    fading_rng: np.random.Generator
    traffic_rng: np.random.Generator


@dataclass
class MetricsRecord:
    seed: int
    drop_index: int
    method: str
    layout: str
    n_embb: int
    n_urllc: int
    t_f_ms: float
    trace: list = field(default_factory=list)
    packets: list = field(default_factory=list)
    rounds: list = field(default_factory=list)
    embb_rates: list = field(default_factory=list)
    arrived_packets: int = 0
    delivered_packets: int = 0
    packet_bits: int = 256

    @property
    def latencies(self):
        return [row["latency_ms"] for row in self.packets]

    def summary(self):
        """드롭 단위 집계 (summary.csv 한 행)"""
        rounds = pd.DataFrame(self.rounds, columns=ROUND_COLUMNS)
        total_bits = float(rounds["R_bits"].sum()) if len(rounds) else 0.0
        energy_j = float((rounds["PC_w"] * self.t_f_ms * 1e-3).sum()) if len(rounds) else 0.0
        lat = np.asarray(self.latencies, dtype=float)
        return {
            "seed": self.seed,
            "drop": self.drop_index,
            "method": self.method,
            "layout": self.layout,
            "n_embb": self.n_embb,
            "n_urllc": self.n_urllc,
            "t_f_ms": self.t_f_ms,
            "rounds": len(rounds),
            "sum_rate_bits": total_bits,
            "mean_power_w": float(rounds["PC_w"].mean()) if len(rounds) else 0.0,
            "ee_bits_per_j": total_bits / energy_j if energy_j > 0 else 0.0,
            "beams_utilized": float(rounds["beams_utilized"].mean()) if len(rounds) else 0.0,
            "packets_arrived": self.arrived_packets,
            "packets_delivered": self.delivered_packets,
            "arrived_bits": self.arrived_packets * self.packet_bits,
            "delivered_bits": self.delivered_packets * self.packet_bits,
            "latency_median_ms": float(np.median(lat)) if lat.size else float("nan"),
            "latency_max_ms": float(lat.max()) if lat.size else float("nan"),
            "within_1ms": float(np.mean(lat <= 1.0 + 1e-9)) if lat.size else float("nan"),
            "infeasible_subframes": int(rounds["infeasible"].sum()) if len(rounds) else 0,
            "qos_violations": int(rounds["qos_violated"].sum()) if len(rounds) else 0,
            "mean_dinkelbach_iters": float(rounds["dinkelbach_iters"].mean()) if len(rounds) else 0.0,
            "solve_s": float(rounds["solve_s"].sum()) if len(rounds) else 0.0,
        }


def drop_streams(seed, drop_index):
    """(배치·채널, 페이딩, 트래픽) 독립 난수열 - 기법과 무관하게 같은 트래픽"""
    root = np.random.SeedSequence([int(seed), int(drop_index)])
    return [np.random.default_rng(s) for s in root.spawn(3)]


def build_drop(config, seed, drop_index=0, layout=None):
    """사용자 배치와 채널을 뽑아 DropContext 생성"""
    place_rng, fading_rng, traffic_rng = drop_streams(seed, drop_index)
    g = config.grid
    grid = build_grid(layout or g.layout, g.bandwidth_khz, g.guard_band_khz, g.symbols_per_rb,
                      g.slice_split, g.re_overhead)
    r = config.radio
    beams = make_beam_set(config.n_beams, n_tx=r.n_tx, hpbw_rad=r.hpbw_rad, major_gain_db=r.major_gain_db)
    q = config.qos
    placements = place_users(config.n_embb, config.n_urllc, config.cell_radius_m, place_rng,
                             config.min_distance_m)
    users = make_users(placements,
                       embb_qos(q.embb_rate_bits, q.zeta_bits, q.blep_embb),
                       urllc_qos(q.urllc_delay_ms, q.urllc_eps, q.blep_urllc),
                       config.traffic.lambda_per_ms, config.traffic.packet_bytes)
    channel = draw_channel(users, beams, grid, PathLossModel(beta=r.beta), place_rng, r.fading)
    pw = config.power
    power = PowerModel.from_dbm(pw.p_max_dbm, zeta=pw.zeta, p_c=pw.p_c_w, p_s=pw.p_s_w, n_tx=r.n_tx)
    return DropContext(seed=seed, drop_index=drop_index, grid=grid, beams=beams, users=users,
                       channel=channel, power=power, gaps=SinrGap.from_blep(q.blep_embb, q.blep_urllc),
                       noise_w=grid.noise_w(r.noise_figure_db), fading_rng=fading_rng,
                       traffic_rng=traffic_rng)


def _last_scheduled_tile(grid, tiles):
    """라운드 안에서 가장 늦게 끝나는 타일 (스케줄 지연 + 전송 시간 계산용)"""
    end = grid.start_ms[tiles] + grid.duration_ms[tiles]
    order = np.lexsort((grid.start_ms[tiles], end))
    return tiles[order[-1]]


def run_drop(config, seed, drop_index=0, method=None):
    """드롭 하나: 첫 sub-frame 에서 빔 페어링 후 T_ssb 동안 고정, 라운드마다 큐 갱신 → 최적화 → 전달"""
    method = method or config.run.method
    layout = "fixed-60" if method == "baseline1" else config.grid.layout
    ctx = build_drop(config, seed, drop_index, layout=layout)
    t_f = config.run.t_f_ms
    n_sub = int(round(config.frame_ms / config.subframe_ms))
    round_idx = ctx.grid.round_indices(int(round(config.subframe_ms / t_f)))
    round_grids = ctx.grid.split_rounds(len(round_idx))
    target_scale = t_f / config.subframe_ms

    q = config.qos
    lam = config.traffic.lambda_per_ms
    eff_bw = effective_bandwidth(lam, t_f, qos_exponent(t_f, q.urllc_eps, lam, q.urllc_delay_ms))
    record = MetricsRecord(seed=seed, drop_index=drop_index, method=method, layout=layout,
                           n_embb=config.n_embb, n_urllc=config.n_urllc, t_f_ms=t_f,
                           packet_bits=8 * config.traffic.packet_bytes)
    logger.info(f"🚀 드롭 시작: seed={seed}, drop={drop_index}, method={method}, grid={layout}, "
                f"사용자 {len(ctx.users)}, 타일 {ctx.grid.count_by_mu()} (μ별)")

    channel = ctx.channel
    assoc = None
    for s in range(n_sub):
        if s > 0:
            channel = channel.redraw_fading(ctx.grid, ctx.fading_rng, config.radio.fading)
        for r, (idx, rgrid) in enumerate(zip(round_idx, round_grids)):
            t0 = s * config.subframe_ms + r * t_f
            tau = np.zeros(len(ctx.users))
            for u in ctx.users:
                if u.is_urllc:
                    u.queue.push(poisson_arrivals(lam, t_f, ctx.traffic_rng, start_ms=t0 - t_f))
                    tau[u.uid] = urllc_rate_target(u.queue, t_f, eff_bw)

            scenario = Scenario(grid=rgrid, channel=channel.take_tiles(idx), users=ctx.users, beams=ctx.beams,
                                power=ctx.power, gaps=ctx.gaps, noise_w=ctx.noise_w[idx], tau_bits=tau,
                                target_scale=target_scale, t_f_ms=t_f,
                                self_interference=config.opt.self_interference_form)
            pairing = abs(t0 % config.t_ssb_ms) < 1e-9 or assoc is None
            sol = solve_subframe(scenario, method, config.opt, assoc=None if pairing else assoc,
                                 beam_selection=pairing, verbose=config.run.verbose)
            if method != "baseline2":
                assoc = sol.alloc.assoc

            target = scenario.omnidirectional() if method == "baseline2" else scenario
            served = (np.asarray(sol.alloc.assoc).sum(axis=0) > 0)[:, None]
            bits = true_tile_bits(target, sol.alloc) * sol.alloc.x * served
            _deliver(record, ctx, rgrid, bits, sol.alloc.x, t0)
            for u in ctx.users:
                if not u.is_urllc:
                    record.embb_rates.append({"seed": seed, "drop": drop_index, "subframe": s, "round": r,
                                              "user": u.uid, "rate_bits": float(bits[u.uid].sum())})

            for rec in sol.state.history:
                record.trace.append({
                    "seed": seed, "drop": drop_index, "subframe": s, "round": r, "j": rec.j, "q": rec.q,
                    "R_bits": rec.rate_bits, "PC_w": rec.power_w,
                    "EE": rec.ee(scenario.t_f_s), "Y": rec.y_value,
                    "binary_residual": rec.binary_residual, "sca_iters": rec.sca_iters,
                })
            record.rounds.append({
                "seed": seed, "drop": drop_index, "subframe": s, "round": r, "method": method,
                "R_bits": sol.rate_bits, "PC_w": sol.power_w, "EE": sol.ee,
                "beams_utilized": sol.alloc.beams_utilized(), "dinkelbach_iters": len(sol.state.history),
                "sca_iters": sum(rec.sca_iters for rec in sol.state.history),
                "converged": bool(sol.state.converged),
                "infeasible": bool(sol.infeasible), "qos_violated": bool(sol.qos_violated),
                "binary_deviation": sol.binary_deviation, "solve_s": sol.solve_s,
            })

    urllc = [u for u in ctx.users if u.is_urllc]
    record.arrived_packets = sum(u.queue.arrived for u in urllc)
    record.delivered_packets = sum(u.queue.delivered for u in urllc)
    summary = record.summary()
    logger.info(f"✅ 드롭 완료: seed={seed}, drop={drop_index}, EE={summary['ee_bits_per_j']:.4g} bits/J, "
                f"패킷 {record.delivered_packets}/{record.arrived_packets}")
    return record


def _deliver(record, ctx, rgrid, bits, x, t0):
    """URLLC 사용자별로 받은 비트만큼 큐에서 FIFO 전달하고 지연 기록"""
    for u in ctx.users:
        if not u.is_urllc:
            continue
        tiles = np.flatnonzero((x[u.uid] > 0.5) & (bits[u.uid] > 0))
        served_bits = float(bits[u.uid].sum())
        if tiles.size:
            last = _last_scheduled_tile(rgrid, tiles)
            sched_delay, tx = float(rgrid.start_ms[last]), float(rgrid.duration_ms[last])
        else:
            sched_delay, tx = 0.0, 0.0
        for pkt in u.queue.serve(served_bits, t0, tx, sched_delay):
            record.packets.append({"seed": record.seed, "drop": record.drop_index, "user": u.uid,
                                   "arrival_ms": pkt.arrival_ms, "delivered_ms": pkt.delivered_ms,
                                   "latency_ms": pkt.latency_ms})


def latency_ecdf(latencies):
    """[(지연, 누적 비율)] - 서로 다른 값마다 한 점, 우연속"""
    arr = np.asarray(list(latencies), dtype=float)
    if arr.size == 0:
        return []
    values, counts = np.unique(arr, return_counts=True)
    cum = np.cumsum(counts) / arr.size
    cum[-1] = 1.0
    return list(zip(values.tolist(), cum.tolist()))


def run_battery(config, seeds=None, drops=None, workers=None, method=None):
    """(seed, drop) 조합을 병렬 실행하고 (seed, drop) 순으로 정렬해 반환"""
    seeds = list(config.seeds if seeds is None else seeds)
    drops = config.drops if drops is None else drops
    workers = max(1, workers or config.run.workers)
    tasks = [(seed, d) for seed in seeds for d in range(drops)]
    if not tasks:
        return []

    started = time.perf_counter()
    records = []
    with ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_task = {executor.submit(run_drop, config, seed, d, method): (seed, d) for seed, d in tasks}
        for i, future in enumerate(as_completed(future_to_task)):
            seed, d = future_to_task[future]
            try:
                records.append(future.result())
            except Exception as e:
                logger.error(f"❌ 드롭 실패: seed={seed}, drop={d} ({e})")
                raise
            if (i + 1) % 10 == 0 or (i + 1) == len(tasks):
                logger.info(f"📊 진행: {i + 1}/{len(tasks)} 드롭")

    records.sort(key=lambda rec: (rec.seed, rec.drop_index))
    logger.info(f"✅ 배터리 완료: {len(records)}개 드롭, {time.perf_counter() - started:.1f}s")
    return records


@dataclass
class SweepResult:
    axis: str
    table: pd.DataFrame
    records: dict


def _axis_key(axis):
    key = AXIS_ALIASES.get(axis, axis)
    if key not in SWEEP_AXES:
        raise ValueError(f"sweep 축은 {SWEEP_AXES} 중 하나: {axis!r}")
    return key


def sweep(config, axis, values, seeds=None, drops=None, workers=None):
    """축 값마다 같은 시드 배터리를 돌려 (value, seed, drop) 당 한 행"""
    key = _axis_key(axis)
    rows = []
    records = {}
    for value in values:
        if key == "seed":
            cfg, run_seeds = config, [int(value)]
        else:
            cfg, run_seeds = with_override(config, key, value), seeds
        logger.info(f"🔄 sweep {key}={value}")
        batch = run_battery(cfg, seeds=run_seeds, drops=drops, workers=workers)
        records[value] = batch
        for rec in batch:
            rows.append({"axis": key, "value": value, **rec.summary()})
    table = pd.DataFrame(rows)
    return SweepResult(axis=key, table=table, records=records)
