#!/usr/bin/env python3
# power.py - 소비 전력 모델과 에너지 효율

from dataclasses import dataclass

import numpy as np


def dbm_to_w(dbm):
    return 10 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class PowerModel:
    zeta: float = 0.25       # PA 효율
    p_c: float = 0.005       # 안테나·타일당 신호처리 전력 (W)
    p_s: float = 0.05        # 정적 회로 전력 (W)
    n_tx: int = 8
    p_max: float = 100.0     # 빔당 전력 예산 (W), 50 dBm

    def __post_init__(self):
        if not 0.0 < self.zeta < 1.0:
            raise ValueError(f"PA 효율 ζ 는 (0,1) 범위: {self.zeta}")
        if self.p_c < 0 or self.p_s < 0:
            raise ValueError(f"회로 전력은 0 이상: P_c={self.p_c}, P_s={self.p_s}")
        if self.p_max <= 0:
            raise ValueError(f"P_max 는 양수: {self.p_max}")

    @classmethod
    def from_dbm(cls, p_max_dbm=50.0, **kwargs):
        return cls(p_max=dbm_to_w(p_max_dbm), **kwargs)


def power_terms(alloc, model):
    """(동적 전송 전력 Σ x·I·p/ζ, 회로 전력 n_tx·P_c·Σ x·I)"""
    served = np.asarray(alloc.assoc, dtype=float).sum(axis=0)  # (U,) I 합
    x = np.asarray(alloc.x, dtype=float) * served[:, None]
    p = np.asarray(alloc.p, dtype=float)
    return float((x * p).sum()) / model.zeta, model.n_tx * model.p_c * float(x.sum())


def total_power(alloc, model):
    """PC = (1/ζ)·Σ x·I·p + n_tx·P_c·Σ x·I + P_s"""
    dynamic, circuit = power_terms(alloc, model)
    return dynamic + circuit + model.p_s


def relaxed_total_power(alloc, model):
    """big-M 완화 문제의 PC: p ≤ x·P_max 이므로 동적 항은 Σ I·p/ζ"""
    served = np.asarray(alloc.assoc, dtype=float).sum(axis=0)
    dynamic = float((np.asarray(alloc.p, dtype=float) * served[:, None]).sum()) / model.zeta
    circuit = model.n_tx * model.p_c * float((np.asarray(alloc.x, dtype=float) * served[:, None]).sum())
    return dynamic + circuit + model.p_s


def energy_efficiency(rate_bits, power_w, t_f_s):
    """η = (rate / T_f) / PC [bits/J]"""
    if power_w <= 0:
        raise ValueError(f"소비 전력은 양수여야 함: {power_w}")
    return rate_bits / t_f_s / power_w
