#!/usr/bin/env python3
# scenario.py - 한 스케줄링 라운드의 입력 묶음 (그리드, 채널, 사용자, 목표 비트)

from dataclasses import dataclass, field, replace

import numpy as np

from power import PowerModel
from radio import make_beam_set
from rates import SinrGap
from traffic import Service, UrllcQueue


@dataclass
class UserContext:
    uid: int
    service: Service
    distance_m: float
    phase_rad: float
    qos: object
    queue: object = None

    @property
    def is_urllc(self):
        return self.service is Service.URLLC


def place_users(n_embb, n_urllc, radius_m, rng, min_distance_m=1.0):
    """원형 셀에 균등 배치 (반경은 sqrt 샘플링) - eMBB 먼저, URLLC 다음"""
    n = n_embb + n_urllc
    r = np.sqrt(rng.uniform((min_distance_m / radius_m) ** 2, 1.0, n)) * radius_m
    phase = rng.uniform(0.0, 2.0 * np.pi, n)
    services = [Service.EMBB] * n_embb + [Service.URLLC] * n_urllc
    return [(services[i], float(r[i]), float(phase[i])) for i in range(n)]


@dataclass
class Scenario:
    """optimizer 가 푸는 한 라운드의 문제 인스턴스"""
    grid: object
    channel: object
    users: list
    beams: object
    power: PowerModel = field(default_factory=PowerModel)
    gaps: SinrGap = field(default_factory=SinrGap.from_blep)
    noise_w: np.ndarray = None
    tau_bits: np.ndarray = None
    target_scale: float = 1.0
    t_f_ms: float = 1.0
    self_interference: bool = False

    def __post_init__(self):
        if self.noise_w is None:
            self.noise_w = self.grid.noise_w()
        if self.tau_bits is None:
            self.tau_bits = np.zeros(len(self.users))
        self.noise_w = np.asarray(self.noise_w, dtype=float)
        self.tau_bits = np.asarray(self.tau_bits, dtype=float)
        if self.channel.n_users != len(self.users):
            raise ValueError(f"채널 사용자 수 {self.channel.n_users} != 사용자 {len(self.users)}")
        if self.channel.small_scale.shape[2] != len(self.grid):
            raise ValueError("채널 타일 수와 그리드 타일 수가 다름")

    @property
    def n_users(self):
        return len(self.users)

    @property
    def n_tiles(self):
        return len(self.grid)

    @property
    def n_beams(self):
        return self.channel.n_beams

    @property
    def t_f_s(self):
        return self.t_f_ms * 1e-3

    @property
    def services(self):
        return [u.service for u in self.users]

    @property
    def qos(self):
        return [u.qos for u in self.users]

    @property
    def is_urllc(self):
        return np.array([u.is_urllc for u in self.users], dtype=bool)

    @property
    def gamma(self):
        return self.gaps.per_user(self.services)

    @property
    def e_bits(self):
        return np.array([0.0 if u.is_urllc else u.qos.e_bits for u in self.users]) * self.target_scale

    @property
    def zeta_bits(self):
        return np.array([0.0 if u.is_urllc else u.qos.zeta_bits for u in self.users]) * self.target_scale

    def eligible(self):
        """(U, K) 스케줄 가능 마스크 - URLLC 는 Slice2 타일만"""
        s2 = self.grid.is_slice2
        return np.where(self.is_urllc[:, None], s2[None, :], True)

    def omnidirectional(self):
        """baseline2 용 단일 무지향 빔 시나리오"""
        beams = make_beam_set(1, n_tx=self.beams.n_tx)
        beams = replace(beams, major_gain=1.0, minor_gain=1.0)
        return replace(self, channel=self.channel.omnidirectional(), beams=beams)


def make_users(placements, embb, urllc, lambda_per_ms=4.0, packet_bytes=32):
    """place_users 결과 → UserContext 목록 (URLLC 는 빈 큐를 가짐)"""
    users = []
    for uid, (service, distance_m, phase_rad) in enumerate(placements):
        is_urllc = service is Service.URLLC
        queue = UrllcQueue(lambda_per_ms=lambda_per_ms, packet_bytes=packet_bytes) if is_urllc else None
        users.append(UserContext(uid=uid, service=service, distance_m=distance_m, phase_rad=phase_rad,
                                 qos=urllc if is_urllc else embb, queue=queue))
    return users
