#!/usr/bin/env python3
# optimizer.py - Dinkelbach 외부 루프 + 빔 선택 + SCA (MM) 내부 루프 + 이진화
#
# 내부 부문제는 barrier_solver 로 푼다. 목적함수는 평균 타일 W·T 로 정규화한 비트 단위.

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from barrier_solver import BarrierSolver, InnerInfeasibleError, InnerProblem
from power import energy_efficiency, relaxed_total_power, total_power
from radio import beam_of_users, coupling_matrices, sinr_matrix
from rates import build_rate_table, constraint_slacks, network_rate
from sim_config import OptSettings

logger = logging.getLogger("mmwave_ee.optimizer")

LN2 = math.log(2.0)
SNAP_W = 1e-12
# 내부 시작점 당김 비율 (큰 것부터)
START_BLENDS = (0.1, 0.01, 1e-3, 1e-4, 1e-5)


class InfeasibleScenarioError(RuntimeError):
    """초기화 단계에서 e_u / τ_u 를 맞출 수 없음"""

    def __init__(self, message, shortfall=None, allocation=None):
        super().__init__(message)
        self.shortfall = shortfall or {}
        self.allocation = allocation


@dataclass
class AllocationPolicy:
    x: np.ndarray      # (U, K)
    p: np.ndarray      # (U, K) W
    assoc: np.ndarray  # (M, U) 0/1

    def __post_init__(self):
        if np.any(np.asarray(self.assoc).sum(axis=0) > 1):
            raise ValueError("사용자는 최대 한 개의 빔에만 연결 가능")

    @classmethod
    def empty(cls, n_users, n_tiles, n_beams):
        return cls(x=np.zeros((n_users, n_tiles)), p=np.zeros((n_users, n_tiles)),
                   assoc=np.zeros((n_beams, n_users), dtype=int))

    @property
    def beam_of(self):
        return beam_of_users(self.assoc)

    def copy(self):
        return AllocationPolicy(x=self.x.copy(), p=self.p.copy(), assoc=self.assoc.copy())

    def binary_residual(self):
        """max x(1−x)"""
        if self.x.size == 0:
            return 0.0
        return float(np.max(self.x * (1.0 - self.x)))

    def is_binary(self, tol=0.0):
        return bool(np.all(np.minimum(np.abs(self.x), np.abs(1.0 - self.x)) <= tol))

    def beams_utilized(self):
        return int(np.count_nonzero(np.asarray(self.assoc).sum(axis=1)))


def assoc_from_beams(beam_of, n_beams):
    n_users = len(beam_of)
    assoc = np.zeros((n_beams, n_users), dtype=int)
    on = np.asarray(beam_of) >= 0
    assoc[np.asarray(beam_of)[on], np.flatnonzero(on)] = 1
    return assoc


@dataclass
class ScaState:
    expansion_x: np.ndarray
    expansion_p: np.ndarray
    lambda_1: float
    inner_tol: float = 1e-6
    max_sca_iters: int = 20


@dataclass
class TraceRecord:
    j: int
    q: float
    rate_bits: float
    power_w: float
    y_value: float
    binary_residual: float
    sca_iters: int = 0
    solve_s: float = 0.0
    ee_value: float = 0.0

    def ee(self, t_f_s):
        return energy_efficiency(self.rate_bits, self.power_w, t_f_s)


@dataclass
class DinkelbachState:
    q: float = 0.0
    j: int = 0
    y_value: float = math.inf
    history: list = field(default_factory=list)
    sigma: float = 1e-4
    t_max: int = 10
    converged: bool = False
    stalled: bool = False  # q 감소 또는 내부 문제 실패로 멈춤 (수렴 아님)

    @property
    def q_history(self):
        return [0.0] + [rec.ee_value for rec in self.history]


@dataclass
class ScaResult:
    alloc: AllocationPolicy
    objective_history: list
    iterations: int
    lambda_stage: int
    binary_residual: float
    t_final: float


@dataclass
class DinkelbachResult:
    alloc: AllocationPolicy
    q: float
    state: DinkelbachState


@dataclass
class FinalizeResult:
    alloc: AllocationPolicy
    max_deviation: float
    qos_violated: bool
    violated: list


# ---- 전송률 / 전력 평가 ----

def true_tile_bits(scenario, alloc):
    """현재 (p, I) 에서 연결 빔 기준 실제 비트 (U, K)"""
    sinr = sinr_matrix(alloc.p, alloc.assoc, scenario.channel, scenario.noise_w,
                       scenario.self_interference)
    return scenario.grid.wt[None, :] * np.log2(1.0 + sinr / scenario.gamma[:, None])


def relaxed_rate(scenario, alloc):
    """완화 문제의 R: 전력이 실린 (연결된) 타일의 실제 비트 합"""
    served = np.asarray(alloc.assoc).sum(axis=0) > 0
    return float(true_tile_bits(scenario, alloc)[served].sum())


def evaluate(scenario, alloc):
    """(R bits, PC W, EE bits/J) - 이진 할당 기준"""
    table = build_rate_table(alloc, scenario.channel, scenario.grid, scenario.services,
                             scenario.gaps, scenario.noise_w, scenario.self_interference)
    rate = network_rate(alloc, table)
    pc = total_power(alloc, scenario.power)
    return rate, pc, energy_efficiency(rate, pc, scenario.t_f_s)


def slacks_for(scenario, alloc):
    table = build_rate_table(alloc, scenario.channel, scenario.grid, scenario.services,
                             scenario.gaps, scenario.noise_w, scenario.self_interference)
    return constraint_slacks(alloc, table, scenario.qos, scenario.grid, scenario.power.p_max,
                             tau=scenario.tau_bits, target_scale=scenario.target_scale)


# ---- 빔 선택 ----

def select_beams(scenario, alloc):
    """사용자별로 R_u(θ) 를 최대화하는 빔 하나 (동률이면 낮은 인덱스)"""
    n_beams = scenario.n_beams
    if n_beams == 1:
        return np.ones((1, scenario.n_users), dtype=int)
    table = build_rate_table(alloc, scenario.channel, scenario.grid, scenario.services,
                             scenario.gaps, scenario.noise_w, scenario.self_interference)
    cand = np.einsum("uk,ukm->um", alloc.x, table.bits)  # (U, M)
    best = np.argmax(cand, axis=1)
    prev = alloc.beam_of
    fallback = np.where(prev >= 0, prev, scenario.channel.aligned)
    # 전송률이 0 인 사용자 (할당 없음) 는 이전 빔 유지
    beam = np.where(cand.max(axis=1) > 0, best, fallback)
    return assoc_from_beams(beam, n_beams)


def highest_sinr_beams(scenario):
    """평균 SINR (간섭 무시) 이 가장 큰 빔"""
    g = scenario.channel.gains
    avg = (g / scenario.noise_w[None, None, :]).mean(axis=2)
    return np.argmax(avg, axis=1)


# ---- 초기 실행 가능점 ----

def _gain_and_interference(scenario, p, beam, u, tiles, p_tile):
    """사용자 u 가 tiles 에 p_tile 을 쓸 때의 신호 이득과 간섭 (현재 배치 기준)"""
    g = scenario.channel.gains
    b = beam[u]
    others = [t for t in range(scenario.n_beams) if t != b]
    if scenario.self_interference:
        interference = p_tile * g[u, others][:, tiles].sum(axis=0)
    else:
        beam_power = assoc_from_beams(beam, scenario.n_beams) @ p  # (M, K)
        interference = (g[u, others][:, tiles] * beam_power[others][:, tiles]).sum(axis=0)
    return g[u, b, tiles], interference


def initialize_feasible(scenario, assoc=None, p_tile=None, margin=1.25, strict=True):
    """슬라이스별 탐욕 할당: URLLC → Slice2, eMBB → Slice1, eMBB ζ → Slice2

    타일당 전력은 P_max / (빔당 타일 수). 목표의 margin 배까지 채운 뒤 실제 간섭으로 재검사한다.
    """
    n_users, n_tiles, n_beams = scenario.n_users, scenario.n_tiles, scenario.n_beams
    beam = highest_sinr_beams(scenario) if assoc is None else beam_of_users(assoc)
    p_tile = scenario.power.p_max / n_tiles if p_tile is None else p_tile
    elig = scenario.eligible()
    s2 = scenario.grid.is_slice2
    wt = scenario.grid.wt
    gamma = scenario.gamma
    noise = scenario.noise_w
    urllc = scenario.is_urllc

    x = np.zeros((n_users, n_tiles))
    p = np.zeros((n_users, n_tiles))
    taken = np.zeros((n_tiles, n_beams), dtype=bool)

    phases = [
        (np.flatnonzero(urllc), s2, scenario.tau_bits),
        (np.flatnonzero(~urllc), ~s2, scenario.e_bits),
        (np.flatnonzero(~urllc), s2, scenario.zeta_bits),
    ]

    def current_bits(users, tiles_mask):
        bits = true_tile_bits(scenario, AllocationPolicy(x=x, p=p, assoc=assoc_from_beams(beam, n_beams)))
        return (bits * x)[:, tiles_mask].sum(axis=1)

    def fill(users, tiles_mask, goal):
        active = [u for u in users if beam[u] >= 0 and goal[u] > 0]
        have = current_bits(users, tiles_mask)
        active = [u for u in active if have[u] < goal[u]]
        while active:
            for u in list(active):
                cand = np.flatnonzero(tiles_mask & elig[u] & ~taken[:, beam[u]] & (x[u] == 0))
                if cand.size == 0:
                    active.remove(u)
                    continue
                gain, interference = _gain_and_interference(scenario, p, beam, u, cand, p_tile)
                bits = wt[cand] * np.log2(1.0 + p_tile * gain / (gamma[u] * (noise[cand] + interference)))
                k = cand[int(np.argmax(bits))]
                x[u, k], p[u, k] = 1.0, p_tile
                taken[k, beam[u]] = True
                have[u] += bits.max()
                if have[u] >= goal[u]:
                    active.remove(u)

    # 간섭이 늘면 앞서 채운 사용자가 부족해질 수 있어 몇 번 반복
    for _ in range(3):
        for users, tiles_mask, target in phases:
            fill(users, tiles_mask, margin * target)
        short = {}
        for users, tiles_mask, target in phases:
            have = current_bits(users, tiles_mask)
            for u in users:
                if have[u] < target[u] * (1 - 1e-9):
                    short[int(u)] = float(target[u] - have[u])
        if not short:
            break

    # 목표가 없는 사용자에게는 최소 할당 (최선 타일 하나)
    for u in range(n_users):
        if beam[u] < 0 or x[u].any():
            continue
        cand = np.flatnonzero(elig[u] & ~taken[:, beam[u]])
        if cand.size == 0:
            continue
        gain, interference = _gain_and_interference(scenario, p, beam, u, cand, p_tile)
        k = cand[int(np.argmax(gain / (noise[cand] + interference)))]
        x[u, k], p[u, k] = 1.0, p_tile
        taken[k, beam[u]] = True

    alloc = AllocationPolicy(x=x, p=p, assoc=assoc_from_beams(beam, n_beams))
    if short:
        msg = f"초기 실행 가능점 없음 - 목표 미달 사용자 {sorted(short)}"
        if strict:
            raise InfeasibleScenarioError(msg, shortfall=short, allocation=alloc)
        logger.warning(f"⚠️ {msg} (best-effort 할당 사용)")
    return alloc


# ---- 대리 함수 / 패널티 ----

@dataclass
class SurrogateTerms:
    w: np.ndarray        # (U, K) log2(signal + (interference + N_o)·Γ)
    q: np.ndarray        # (U, K) log2((interference + N_o)·Γ)
    q_tilde: np.ndarray  # (U, K) 전개점에서 1차 근사한 Q
    grad_q: np.ndarray   # (K, U, U) 전개점에서 ∂Q/∂p

    @property
    def surrogate_rate(self):
        return self.w - self.q_tilde

    @property
    def true_rate(self):
        return self.w - self.q


def _coupling(scenario, assoc):
    beam = beam_of_users(assoc)
    a, A = coupling_matrices(scenario.channel, beam, scenario.self_interference)
    return beam, a, A


def surrogate_terms(alloc, scenario, expansion):
    """W, Q, Q̃ (연결 빔 기준, 스펙트럼 효율 단위)"""
    _, a, A = _coupling(scenario, alloc.assoc)
    gamma = scenario.gamma
    n0 = scenario.noise_w
    p = alloc.p.T
    p0 = expansion.expansion_p.T
    v = gamma[None, :] * (np.einsum("kuv,kv->ku", A, p) + n0[:, None])
    v0 = gamma[None, :] * (np.einsum("kuv,kv->ku", A, p0) + n0[:, None])
    grad = gamma[None, :, None] * A / (v0[:, :, None] * LN2)
    w = np.log2(a * p + v)
    q = np.log2(v)
    q_tilde = np.log2(v0) + np.einsum("kuv,kv->ku", grad, p - p0)
    return SurrogateTerms(w=w.T, q=q.T, q_tilde=q_tilde.T, grad_q=grad)


def penalty_terms(x, expansion_x, lambda_1):
    """λ·(μ(X) + Z(X)), μ = Σx, Z = ν 의 선형화 (ν = −Σx²)

    반환: (값, x 에 대한 기울기)
    """
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(expansion_x, dtype=float)
    mu = x.sum()
    z = (x0 ** 2).sum() - 2.0 * (x0 * x).sum()
    return lambda_1 * (mu + z), lambda_1 * (1.0 - 2.0 * x0)


# ---- 내부 볼록 부문제 ----

def _variable_mask(scenario, assoc, mode, support=None):
    beam = beam_of_users(assoc)
    mask = scenario.eligible() & (beam >= 0)[:, None]
    if mode == "power_only":
        mask &= support
    return mask.T  # (K, U)


def _rate_constraints(scenario, mask, wt_ref, drop_users=()):
    """(사용자, 타일 집합, 정규화 목표) 목록 - 목표가 양수인 것만"""
    s2 = scenario.grid.is_slice2
    users, tiles, targets = [], [], []
    urllc = scenario.is_urllc
    for u in range(scenario.n_users):
        if u in drop_users or not mask[:, u].any():
            continue
        if urllc[u]:
            items = [(s2, scenario.tau_bits[u])]
        else:
            items = [(~s2, scenario.e_bits[u]), (s2, scenario.zeta_bits[u])]
        for tile_set, target in items:
            if target > 0:
                users.append(u)
                tiles.append(tile_set)
                targets.append(target / wt_ref)
    n_tiles = scenario.n_tiles
    return (np.array(users, dtype=int), np.array(tiles, dtype=bool).reshape(len(users), n_tiles),
            np.array(targets, dtype=float))


def build_inner_problem(q, assoc, state, scenario, mode="joint", support=None, p_equal=0.0,
                        drop_users=()):
    mask = _variable_mask(scenario, assoc, mode, support)
    beam, a, A = _coupling(scenario, assoc)
    gamma = scenario.gamma
    n0 = scenario.noise_w
    n_users = scenario.n_users

    C = gamma[None, :, None] * A
    C[:, np.arange(n_users), np.arange(n_users)] += a
    p0 = state.expansion_p.T * mask
    v0 = gamma[None, :] * (np.einsum("kuv,kv->ku", A, p0) + n0[:, None])
    D = gamma[None, :, None] * A / (v0[:, :, None] * LN2)

    wt_ref = float(np.mean(scenario.grid.wt))
    t_f = scenario.t_f_s
    pm = scenario.power
    _, pen_grad = penalty_terms(state.expansion_x.T, state.expansion_x.T, state.lambda_1)
    users, tiles, targets = _rate_constraints(scenario, mask, wt_ref, drop_users)
    return InnerProblem(
        mode=mode, mask=mask, beam=beam, n_beams=scenario.n_beams, C=C,
        gamma_noise=gamma[None, :] * n0[:, None], D=D, q0=np.log2(v0), p0=p0,
        wn=scenario.grid.wt / wt_ref, p_max=pm.p_max,
        q_dyn=q * t_f / (pm.zeta * wt_ref), q_circ=q * t_f * pm.n_tx * pm.p_c / wt_ref,
        pen=pen_grad if mode != "power_only" else np.zeros_like(pen_grad),
        rate_users=users, rate_tiles=tiles, rate_targets=targets,
        x_fixed=(support.T.astype(float) if mode == "power_only" else None), p_equal=p_equal,
    )


def solve_inner_convex(q, assoc, expansion, scenario, tol=1e-6, mode="joint", support=None,
                       p_equal=0.0, t0=None, mu=10.0, verbose=False, drop_users=()):
    """전개점에서 만든 대리 문제를 전개점부터 풀어 (X, P) 반환"""
    problem = build_inner_problem(q, assoc, expansion, scenario, mode, support, p_equal, drop_users)
    solver = BarrierSolver(problem, tol=tol, mu=mu, verbose=verbose)
    z0 = problem.join(expansion.expansion_x.T * problem.mask, expansion.expansion_p.T * problem.mask)
    result = solver.solve(z0, t0=t0)
    x = result.x.T
    if mode == "power_only":
        x = support.astype(float)
    return AllocationPolicy(x=x, p=result.p.T, assoc=np.asarray(assoc).copy()), result


def start_rate_slacks(scenario, alloc, mode, support=None, drop_users=()):
    """시작점에서 내부 문제 전송률 제약의 여유 (전개점에서는 대리 전송률 = 실제 전송률)"""
    mask = _variable_mask(scenario, alloc.assoc, mode, support)  # (K, U)
    wt_ref = float(np.mean(scenario.grid.wt))
    users, tiles, targets = _rate_constraints(scenario, mask, wt_ref, drop_users)
    if not len(users):
        return np.zeros(0)
    bits = true_tile_bits(scenario, alloc) * mask.T / wt_ref  # (U, K)
    return (bits[users] * tiles).sum(axis=1) - targets


def _blend_start(scenario, alloc, mask, onehot, n_ku, v_u, mode, b, p_equal):
    """비율 b 만큼 내부로 당긴 시작점. p 는 상한에 닿은 곳만 줄인다"""
    p_max = scenario.power.p_max
    x = np.where(mask, np.clip(alloc.x, 0.0, 1.0), 0.0)
    p = np.where(mask, np.maximum(alloc.p, 0.0), 0.0)

    if mode == "power_only":
        x_new = mask.astype(float)
    else:
        scale = 1.0 / np.maximum(onehot @ x, 1.0)  # (M, K) 타일·빔 합 ≤ 1
        x = x * (onehot.T @ scale)
        x_new = np.where(mask, (1.0 - b) * x + b / (n_ku + 1.0), 0.0)

    if mode == "rb_only":
        return AllocationPolicy(x=x_new, p=p_equal * x_new, assoc=np.asarray(alloc.assoc).copy())

    if mode == "joint":
        p = np.minimum(p, (1.0 - b) * x * p_max)
        delta = 0.05 * b * p_max / ((n_ku + 1.0) * v_u[:, None])
    else:
        p = np.minimum(p, (1.0 - b) * p_max)
        delta = 0.05 * b * p_max / v_u[:, None]
    beam_sum = onehot @ p.sum(axis=1)               # (M,)
    p = p * (onehot.T @ np.minimum(1.0, (1.0 - b) * p_max / np.maximum(beam_sum, 1e-300)))[:, None]
    p = np.where(mask, p + delta, 0.0)
    return AllocationPolicy(x=x_new, p=p, assoc=np.asarray(alloc.assoc).copy())


def interior_start(scenario, alloc, mode="joint", support=None, p_equal=0.0, drop_users=()):
    """선형 제약 내부로 당긴 시작점 (x' = (1−b)x + b/(n+1), p' = p + δ)

    b 를 줄여 가며 전송률 목표를 지키는 첫 시작점을 고른다. 원래 할당이 목표를 못 맞추면
    가장 작은 b 의 점을 돌려주고, 내부 솔버가 InnerInfeasibleError 로 알린다.
    """
    mask = _variable_mask(scenario, alloc.assoc, mode, support).T  # (U, K)
    beam = beam_of_users(alloc.assoc)
    onehot = assoc_from_beams(beam, scenario.n_beams).astype(float)  # (M, U)
    mf = mask.astype(float)
    per_tile_beam = onehot @ mf                         # (M, K) 변수 개수
    n_ku = onehot.T @ per_tile_beam                     # (U, K)
    v_u = np.maximum(onehot.T @ per_tile_beam.sum(axis=1), 1.0)  # (U,)

    start = None
    for b in START_BLENDS:
        start = _blend_start(scenario, alloc, mask, onehot, n_ku, v_u, mode, b, p_equal)
        if np.all(start_rate_slacks(scenario, start, mode, support, drop_users) > 0):
            return start
    return start


def _strictly_interior(scenario, alloc, mode, support=None, p_equal=0.0):
    mask = _variable_mask(scenario, alloc.assoc, mode, support).T
    x, p = alloc.x, alloc.p
    if np.any(~mask & ((x != 0) | (p != 0))):
        return False
    onehot = assoc_from_beams(alloc.beam_of, scenario.n_beams)
    p_max = scenario.power.p_max
    if np.any((onehot @ p).sum(axis=1) >= p_max):
        return False
    xm, pm = x[mask], p[mask]
    if mode == "power_only":
        return bool(np.all(pm > 0) and np.all(pm < p_max))
    if np.any(xm <= 0) or np.any(xm >= 1) or np.any((onehot @ x) >= 1):
        return False
    if mode == "joint":
        return bool(np.all(pm > 0) and np.all(pm < xm * p_max))
    return bool(np.allclose(pm, p_equal * xm))


# ---- SCA (MM) 루프 ----

def true_objective(scenario, alloc, q, lambda_1, wt_ref):
    """정규화된 실제 벌점 목적함수 R/wt − q·T_f·PC″/wt − λ·Σx(1−x)"""
    served = np.asarray(alloc.assoc).sum(axis=0) > 0
    mask = scenario.eligible() & served[:, None]
    rate = float(true_tile_bits(scenario, alloc)[mask].sum())
    pm = scenario.power
    dyn = alloc.p[mask].sum() / pm.zeta
    circ = pm.n_tx * pm.p_c * alloc.x[mask].sum()
    pen = float((alloc.x * (1.0 - alloc.x))[mask].sum())
    return (rate - q * scenario.t_f_s * (dyn + circ)) / wt_ref - lambda_1 * pen


def objective_scale(scenario, alloc, q, wt_ref):
    """λ 스케줄의 기준 크기: 활성 타일당 (R + q·T_f·PC_동적) 정규값"""
    served = np.asarray(alloc.assoc).sum(axis=0) > 0
    mask = scenario.eligible() & served[:, None]
    rate = float(true_tile_bits(scenario, alloc)[mask].sum())
    pm = scenario.power
    cost = q * scenario.t_f_s * (alloc.p[mask].sum() / pm.zeta + pm.n_tx * pm.p_c * alloc.x[mask].sum())
    n_active = max(1, int(np.count_nonzero(alloc.x[mask] > 0.5)))
    return max(1e-6, (rate + cost) / wt_ref / n_active)


def sca_loop(q, assoc, init, scenario, settings=None, mode="joint", support=None, p_equal=0.0,
             start_stage=0, verbose=False, drop_users=()):
    """대리 문제 풀이 → 전개점 갱신 반복. 같은 λ 단계 안에서 목적함수는 감소하지 않음"""
    settings = settings or OptSettings()
    wt_ref = float(np.mean(scenario.grid.wt))
    alloc = AllocationPolicy(x=init.x.copy(), p=init.p.copy(), assoc=np.asarray(assoc).copy())
    if not _strictly_interior(scenario, alloc, mode, support, p_equal):
        alloc = interior_start(scenario, alloc, mode, support, p_equal, drop_users)

    schedule = list(settings.lambda1_schedule) if mode != "power_only" else [0.0]
    stage = min(start_stage, len(schedule) - 1)
    scale = objective_scale(scenario, alloc, q, wt_ref)
    lam = schedule[stage] * scale
    f_prev = true_objective(scenario, alloc, q, lam, wt_ref)
    history = [(lam, f_prev)]
    t_prev = None
    it = 0

    for it in range(1, settings.max_sca_iters + 1):
        state = ScaState(expansion_x=alloc.x, expansion_p=alloc.p, lambda_1=lam,
                         inner_tol=settings.inner_tol, max_sca_iters=settings.max_sca_iters)
        try:
            cand, result = solve_inner_convex(
                q, assoc, state, scenario, tol=settings.inner_tol, mode=mode, support=support,
                p_equal=p_equal, t0=(t_prev / 100.0 if t_prev else None), mu=settings.barrier_mu,
                verbose=verbose, drop_users=drop_users)
        except InnerInfeasibleError:
            if it == 1:
                raise
            logger.debug("SCA: 내부 문제 실행 불가 - 마지막 실행 가능점 반환")
            break
        t_prev = result.t
        f_new = true_objective(scenario, cand, q, lam, wt_ref)
        if verbose:
            logger.debug(f"SCA {it}: λ={lam:.3g}, f={f_new:.8g}, newton={result.newton_steps}")
        improved = f_new - f_prev
        if improved >= 0:
            alloc = cand
            history.append((lam, f_new))
        if improved < settings.sca_tol * max(1.0, abs(f_prev)):
            resid = _masked_residual(scenario, alloc)
            if resid <= settings.binary_tol or stage == len(schedule) - 1:
                break
            stage += 1
            lam = schedule[stage] * scale
            f_prev = true_objective(scenario, alloc, q, lam, wt_ref)
            history.append((lam, f_prev))
            continue
        f_prev = f_new

    return ScaResult(alloc=alloc, objective_history=history, iterations=it, lambda_stage=stage,
                     binary_residual=_masked_residual(scenario, alloc), t_final=t_prev or 0.0)


def _masked_residual(scenario, alloc):
    served = np.asarray(alloc.assoc).sum(axis=0) > 0
    mask = scenario.eligible() & served[:, None]
    if not mask.any():
        return 0.0
    return float(np.max((alloc.x * (1.0 - alloc.x))[mask]))


# ---- Dinkelbach ----

def dinkelbach_residual(y, q_new, pc, t_f):
    """|Y(q_j)| 를 새 비율의 전력 항 q_{j+1}·T_f·PC 로 나눈 상대 잔차 (= |Y| / R)"""
    scale = q_new * t_f * pc
    return abs(y) / scale if scale > 0 else 0.0


def dinkelbach(scenario, settings=None, mode="joint", assoc=None, beam_selection=True, init=None,
               p_equal=0.0, verbose=False):
    """q_0 = 0 에서 시작해 |Y(q_j)| ≤ σ (상대) 또는 j = T_max 까지 반복"""
    settings = settings or OptSettings()
    if init is None:
        init = initialize_feasible(scenario, assoc=assoc, p_tile=(p_equal or None),
                                   margin=settings.init_margin, strict=True)
    state = DinkelbachState(sigma=settings.sigma, t_max=settings.t_max)
    alloc = init
    stage = 0
    t_f = scenario.t_f_s

    for j in range(settings.t_max):
        started = time.perf_counter()
        current = alloc.assoc
        sca = None
        if beam_selection and scenario.n_beams > 1:
            proposal = select_beams(scenario, alloc)
            if not np.array_equal(proposal, current):
                try:
                    moved = AllocationPolicy(x=alloc.x, p=alloc.p, assoc=proposal)
                    sca = sca_loop(state.q, proposal, moved, scenario, settings, mode,
                                   p_equal=p_equal, start_stage=stage, verbose=verbose)
                except InnerInfeasibleError:
                    logger.debug(f"Dinkelbach {j}: 새 빔 배치가 QoS 를 깨뜨려 기존 빔 유지")
                    sca = None
        if sca is None:
            try:
                sca = sca_loop(state.q, current, alloc, scenario, settings, mode, p_equal=p_equal,
                               start_stage=stage, verbose=verbose)
            except InnerInfeasibleError as exc:
                if not state.history:
                    raise InfeasibleScenarioError(
                        f"내부 솔버 시작점이 실행 불가능 - 전송률 위반 사용자 {list(exc.users)}",
                        shortfall={int(u): float("nan") for u in exc.users}, allocation=init) from exc
                logger.warning(f"⚠️ Dinkelbach {j}: 내부 문제 실행 불가 - 직전 반복점 유지")
                state.stalled = True
                break

        cand = sca.alloc
        rate = relaxed_rate(scenario, cand)
        pc = relaxed_total_power(cand, scenario.power)
        y = rate - state.q * t_f * pc
        q_new = energy_efficiency(rate, pc, t_f)
        rec = TraceRecord(j=j, q=state.q, rate_bits=rate, power_w=pc, y_value=y,
                          binary_residual=sca.binary_residual, sca_iters=sca.iterations,
                          solve_s=time.perf_counter() - started, ee_value=q_new)

        if q_new < state.q - 1e-9 * max(1.0, state.q):
            # 단조성 보호 - 이전 반복점 유지
            logger.debug(f"Dinkelbach {j}: q 감소 ({q_new:.6g} < {state.q:.6g}) - 중단")
            state.stalled = True
            break

        state.history.append(rec)
        alloc, stage = cand, sca.lambda_stage
        state.j, state.y_value = j, y
        normalized = dinkelbach_residual(y, q_new, pc, t_f)
        state.q = q_new
        logger.info(f"Dinkelbach {j}: q={q_new:.6g} bits/J, R={rate:.1f} bits, PC={pc:.4g} W, |Y|/R={normalized:.2e}")
        if normalized <= settings.sigma:
            state.converged = True
            break

    return DinkelbachResult(alloc=alloc, q=state.q, state=state)


# ---- 이진화 ----

def _repair_tile_conflicts(scenario, alloc, xb):
    """타일·빔마다 두 명 이상이면 실제 전송률이 가장 큰 사용자만 남김"""
    bits = true_tile_bits(scenario, alloc)
    beam = alloc.beam_of
    for b in range(scenario.n_beams):
        users = np.flatnonzero(beam == b)
        if users.size < 2:
            continue
        sub = xb[users]                            # (n, K)
        for k in np.flatnonzero(sub.sum(axis=0) > 1):
            on = users[sub[:, k] > 0]
            keep = on[int(np.argmax(bits[on, k]))]
            xb[on, k] = 0.0
            xb[keep, k] = 1.0
    return xb


def finalize_binary(alloc, scenario, q=0.0, settings=None, mode="joint", p_equal=0.0, resolve_power=True):
    """0.5 반올림 → C4 보정 → 고정 지지집합에서 전력만 다시 최적화"""
    settings = settings or OptSettings()
    served = (np.asarray(alloc.assoc).sum(axis=0) > 0)[:, None]
    eligible = scenario.eligible() & served
    deviation = float(np.max(np.minimum(alloc.x, 1.0 - alloc.x)[eligible])) if eligible.any() else 0.0

    xb = np.where(eligible & (alloc.x >= 0.5), 1.0, 0.0)
    xb = _repair_tile_conflicts(scenario, alloc, xb)

    if mode == "rb_only":
        final = AllocationPolicy(x=xb, p=p_equal * xb, assoc=alloc.assoc.copy())
    else:
        p = np.where(xb > 0, np.minimum(alloc.p, scenario.power.p_max), 0.0)
        final = AllocationPolicy(x=xb, p=p, assoc=alloc.assoc.copy())
        if resolve_power and xb.any():
            final = _resolve_power(scenario, final, q, settings)

    # 무시할 만한 전력은 0 으로, 해당 x 도 0
    tiny = final.p < SNAP_W
    if mode != "rb_only" and np.any(tiny & (final.x > 0)):
        final = AllocationPolicy(x=np.where(tiny, 0.0, final.x), p=np.where(tiny, 0.0, final.p),
                                 assoc=final.assoc)

    slacks = slacks_for(scenario, final)
    violated = slacks.violated(1e-6)
    qos = slacks.qos_violated(1e-6)
    if qos:
        logger.warning(f"⚠️ 이진화 후 QoS 위반: {violated}")
    return FinalizeResult(alloc=final, max_deviation=deviation, qos_violated=qos, violated=violated)


def _resolve_power(scenario, alloc, q, settings):
    support = alloc.x > 0
    start = interior_start(scenario, alloc, "power_only", support)
    try:
        return sca_loop(q, alloc.assoc, start, scenario, settings, "power_only", support=support).alloc
    except InnerInfeasibleError:
        pass

    # 빔 예산을 지지집합에 고르게 나눠 다시 시도
    onehot = assoc_from_beams(alloc.beam_of, scenario.n_beams)
    count = onehot @ support.sum(axis=1)
    share = 0.9 * scenario.power.p_max / np.maximum(onehot.T @ count, 1.0)
    spread = AllocationPolicy(x=alloc.x, p=np.where(support, share[:, None], 0.0), assoc=alloc.assoc)
    try:
        return sca_loop(q, alloc.assoc, spread, scenario, settings, "power_only", support=support).alloc
    except InnerInfeasibleError as exc:
        # 맞출 수 없는 전송률 제약은 빼고 풀고, 위반은 호출자가 보고
        logger.debug(f"전력 재최적화: 전송률 제약 제외 사용자 {list(exc.users)}")
        try:
            return sca_loop(q, alloc.assoc, spread, scenario, settings, "power_only", support=support,
                            drop_users=set(exc.users)).alloc
        except InnerInfeasibleError:
            return spread
