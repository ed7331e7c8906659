#!/usr/bin/env python3
# traffic.py - URLLC 포아송 큐, QoS exponent / effective bandwidth, 지연 측정

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Service(Enum):
    EMBB = "eMBB"
    URLLC = "URLLC"


@dataclass(frozen=True)
class QosSpec:
    service: Service
    e_bits: float = 0.0          # eMBB Slice1 최소 비트 / sub-frame
    zeta_bits: float = 0.0       # eMBB Slice2 최소 비트 / sub-frame
    d_ms: float = 1.0            # URLLC 지연 한도
    eps: float = 1e-5            # URLLC 지연 위반 확률
    blep_target: float = 1e-3

    def __post_init__(self):
        if self.e_bits < 0 or self.zeta_bits < 0:
            raise ValueError("eMBB 최소 비트는 0 이상이어야 함")
        if self.service is Service.URLLC and not (self.d_ms > 0 and 0 < self.eps < 1):
            raise ValueError(f"URLLC QoS 는 d>0, 0<ε<1 이어야 함 (d={self.d_ms}, ε={self.eps})")


def embb_qos(e_bits, zeta_bits=0.0, blep_target=1e-3):
    return QosSpec(Service.EMBB, e_bits=e_bits, zeta_bits=zeta_bits, blep_target=blep_target)


def urllc_qos(d_ms=1.0, eps=1e-5, blep_target=1e-5):
    return QosSpec(Service.URLLC, d_ms=d_ms, eps=eps, blep_target=blep_target)


@dataclass(frozen=True)
class DeliveredPacket:
    arrival_ms: float
    delivered_ms: float

    @property
    def latency_ms(self):
        return self.delivered_ms - self.arrival_ms


@dataclass
class UrllcQueue:
    """FIFO 패킷 큐 - 도착 시각만 보관, 남은 비트는 다음 라운드로 이월"""
    lambda_per_ms: float = 4.0
    packet_bytes: int = 32
    arrivals: deque = field(default_factory=deque)
    residual_bits: float = 0.0
    arrived: int = 0
    delivered: int = 0

    @property
    def packet_bits(self):
        return 8 * self.packet_bytes

    def __len__(self):
        return len(self.arrivals)

    def push(self, times):
        for t in np.sort(np.asarray(times, dtype=float)):
            self.arrivals.append(float(t))
            self.arrived += 1

    def serve(self, served_bits, now, tx_duration, sched_delay):
        """FIFO 로 완전한 패킷만 전달하고 DeliveredPacket 목록 반환"""
        if served_bits < 0:
            raise ValueError(f"전송 비트는 0 이상: {served_bits}")
        if not self.arrivals:
            self.residual_bits = 0.0
            return []
        total = self.residual_bits + served_bits
        n = min(int(math.floor(total / self.packet_bits + 1e-9)), len(self.arrivals))
        done = now + sched_delay + tx_duration
        out = []
        for _ in range(n):
            out.append(DeliveredPacket(arrival_ms=self.arrivals.popleft(), delivered_ms=done))
        self.delivered += n
        # 큐가 비면 남은 비트는 버려짐
        self.residual_bits = max(total - n * self.packet_bits, 0.0) if self.arrivals else 0.0
        return out


def poisson_arrivals(lambda_per_ms, duration_ms, rng, start_ms=0.0):
    """구간 [start, start+duration) 의 포아송 도착 시각 (정렬됨)"""
    if lambda_per_ms < 0:
        raise ValueError(f"도착률 λ 는 0 이상: {lambda_per_ms}")
    if duration_ms <= 0:
        raise ValueError(f"구간 길이는 양수: {duration_ms}")
    n = rng.poisson(lambda_per_ms * duration_ms)
    return start_ms + np.sort(rng.uniform(0.0, duration_ms, n))


def qos_exponent(t_f_ms, eps, lambda_per_ms, d_ms):
    """ψ = ln(T_f·ln(1/ε) / (λ·D) + 1)"""
    if t_f_ms <= 0 or not (0 < eps < 1) or lambda_per_ms <= 0 or d_ms <= 0:
        raise ValueError(f"QoS exponent 입력 오류 (T_f={t_f_ms}, ε={eps}, λ={lambda_per_ms}, D={d_ms})")
    return math.log1p(t_f_ms * math.log(1.0 / eps) / (lambda_per_ms * d_ms))


def effective_bandwidth(lambda_per_ms, t_f_ms, psi):
    """E = λ·(e^ψ - 1) / (T_f·ψ) [패킷/ms], ψ→0 극한은 λ/T_f"""
    if psi < 0 or t_f_ms <= 0:
        raise ValueError(f"ψ 는 0 이상, T_f 는 양수 (ψ={psi}, T_f={t_f_ms})")
    if psi < 1e-8:
        return lambda_per_ms / t_f_ms
    return lambda_per_ms * math.expm1(psi) / (t_f_ms * psi)


def urllc_rate_target(queue, t_f_ms, eff_bw):
    """τ = min(큐 길이, T_f·E) × 패킷 비트"""
    return min(len(queue), t_f_ms * eff_bw) * queue.packet_bits


def serve_and_record_latency(queue, served_bits, now, tx_duration, sched_delay):
    return [pkt.latency_ms for pkt in queue.serve(served_bits, now, tx_duration, sched_delay)]
