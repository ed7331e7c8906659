#!/usr/bin/env python3
# rates.py - SINR gap, 스펙트럼 효율, 타일 비트, 사용자/네트워크 전송률, 제약 여유도

import math
from dataclasses import dataclass

import numpy as np

from grid import tile_duration_and_bits_capacity
from radio import beam_of_users
from traffic import Service

# Γ = -ln(5B) / c
_GAP_DIVISOR = {Service.EMBB: 1.5, Service.URLLC: 0.45}


def sinr_gap(blep, service):
    if not 0.0 < blep < 0.2:
        raise ValueError(f"BLEP 는 (0, 0.2) 범위여야 함: {blep}")
    return -math.log(5.0 * blep) / _GAP_DIVISOR[service]


@dataclass(frozen=True)
class SinrGap:
    gamma_e: float
    gamma_u: float

    @classmethod
    def from_blep(cls, blep_embb=1e-3, blep_urllc=1e-5):
        return cls(gamma_e=sinr_gap(blep_embb, Service.EMBB), gamma_u=sinr_gap(blep_urllc, Service.URLLC))

    def for_service(self, service):
        return self.gamma_e if service is Service.EMBB else self.gamma_u

    def per_user(self, services):
        return np.array([self.for_service(s) for s in services], dtype=float)


def spectral_efficiency(sinr, gap):
    """Z = log2(1 + Ξ/Γ)"""
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0) or np.any(np.asarray(gap) <= 0):
        raise ValueError("SINR 는 0 이상, gap 은 양수여야 함")
    return np.log2(1.0 + sinr / gap)


def tile_bits(tile, sinr, service, gaps, re_overhead=1.0):
    _, wt = tile_duration_and_bits_capacity(tile, re_overhead)
    return wt * spectral_efficiency(sinr, gaps.for_service(service))


@dataclass(frozen=True)
class RateTable:
    bits: np.ndarray  # (U, K, M) - 사용자 u 가 빔 θ 로 타일 k 를 받을 때의 비트

    @property
    def n_users(self):
        return self.bits.shape[0]


def build_rate_table(alloc, channel, grid, services, gaps, noise_w, self_interference=False):
    """현재 전력 배치에서 모든 (u, k, θ) 의 r 계산"""
    g = channel.gains  # (U, M, K)
    p = np.asarray(alloc.p, dtype=float)  # (U, K)
    n_users, n_beams, _ = g.shape
    gamma = gaps.per_user(services)

    if self_interference:
        interference = p[:, None, :] * (g.sum(axis=1, keepdims=True) - g)
    else:
        beam_power = np.asarray(alloc.assoc, dtype=float) @ p  # (M, K)
        own = np.zeros((n_users, n_beams, p.shape[1]))
        b = beam_of_users(alloc.assoc)
        on = b >= 0
        own[np.flatnonzero(on), b[on], :] = p[on]
        # 다른 빔의 전력에서 자기 전력은 제외
        others = beam_power[None, :, :] - own
        weighted = g * others
        interference = weighted.sum(axis=1, keepdims=True) - weighted

    sinr = p[:, None, :] * g / (np.asarray(noise_w)[None, None, :] + interference)
    bits = grid.wt[None, None, :] * np.log2(1.0 + sinr / gamma[:, None, None])
    return RateTable(bits=np.transpose(bits, (0, 2, 1)))


def _served(alloc, table):
    assoc = np.asarray(alloc.assoc, dtype=float)  # (M, U)
    x = np.asarray(alloc.x, dtype=float)
    return x * np.einsum("ukm,mu->uk", table.bits, assoc)


def user_rate(alloc, table, u):
    """R_u = Σ x·I·r"""
    return float(_served(alloc, table)[u].sum())


def network_rate(alloc, table):
    return float(_served(alloc, table).sum())


def slice_rates(alloc, table, grid):
    """사용자별 (Slice1 비트, Slice2 비트)"""
    served = _served(alloc, table)
    s2 = grid.is_slice2
    return served[:, ~s2].sum(axis=1), served[:, s2].sum(axis=1)


@dataclass(frozen=True)
class ConstraintSlacks:
    c3: np.ndarray
    c4: np.ndarray
    c5: np.ndarray
    c6: np.ndarray
    c7: np.ndarray
    c8: np.ndarray
    c9: np.ndarray
    c5_rel: np.ndarray
    c6_rel: np.ndarray
    c7_rel: np.ndarray

    def worst(self):
        """제약별 최소 여유도 (C5~C7 은 상대값)"""
        out = {}
        for name in ("c3", "c4", "c8", "c9", "c5_rel", "c6_rel", "c7_rel"):
            arr = getattr(self, name)
            out[name] = float(np.nanmin(arr)) if arr.size and not np.all(np.isnan(arr)) else 0.0
        return out

    def violated(self, tol=1e-6):
        return [name for name, v in self.worst().items() if v < -tol]

    def qos_violated(self, tol=1e-6):
        return any(name in ("c5_rel", "c6_rel") for name in self.violated(tol))


def constraint_slacks(alloc, table, qos, grid, p_max, tau=None, target_scale=1.0):
    """C3~C9 의 부호 있는 여유도. 음수 = 위반

    qos 는 사용자별 QosSpec, tau 는 URLLC 목표 비트 (U,), target_scale 은 e/ζ 를
    스케줄링 라운드 길이에 맞추는 비율.
    """
    assoc = np.asarray(alloc.assoc, dtype=float)
    x = np.asarray(alloc.x, dtype=float)
    p = np.asarray(alloc.p, dtype=float)
    n_users = x.shape[0]
    tau = np.zeros(n_users) if tau is None else np.asarray(tau, dtype=float)

    c3 = 1.0 - assoc.sum(axis=0)
    c4 = (1.0 - assoc @ x).T  # (K, M)
    c8 = np.minimum(p, x * p_max - p)
    c9 = p_max - (assoc @ p).sum(axis=1)

    r1, r2 = slice_rates(alloc, table, grid)
    is_embb = np.array([q.service is Service.EMBB for q in qos], dtype=bool)
    e = np.array([q.e_bits for q in qos]) * target_scale
    zeta = np.array([q.zeta_bits for q in qos]) * target_scale

    c5 = np.where(is_embb, r1 - e, np.nan)
    c6 = np.where(~is_embb, r2 - tau, np.nan)
    c7 = np.where(is_embb, r2 - zeta, np.nan)
    return ConstraintSlacks(
        c3=c3, c4=c4, c5=c5, c6=c6, c7=c7, c8=c8, c9=c9,
        c5_rel=c5 / np.maximum(e, 1.0),
        c6_rel=c6 / np.maximum(tau, 1.0),
        c7_rel=c7 / np.maximum(zeta, 1.0),
    )
