#!/usr/bin/env python3
# radio.py - 빔 세트, LoS/NLoS 경로손실, 안테나 이득, 소규모 페이딩, SINR

import logging
from dataclasses import dataclass, replace

import numpy as np

logger = logging.getLogger("mmwave_ee.radio")

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class BeamSet:
    directions: np.ndarray
    n_tx: int
    hpbw_rad: float
    major_gain: float
    minor_gain: float

    @property
    def n_beams(self):
        return len(self.directions)

    def aligned_beam(self, phase_rad):
        """사용자 방위각이 속한 섹터 빔 인덱스"""
        sector = TWO_PI / self.n_beams
        return (np.floor(np.mod(phase_rad, TWO_PI) / sector).astype(int)) % self.n_beams


def make_beam_set(n_beams, n_tx=8, hpbw_rad=None, major_gain_db=None):
    """M 개 고정 빔. 기본 HPBW = 2π/M, major = 10^(0.8·n_tx), minor = 1/sin²(3π/(2√n_tx))"""
    if n_beams < 1:
        raise ValueError(f"빔 수는 1 이상: {n_beams}")
    if n_tx < 1:
        raise ValueError(f"송신 안테나 수는 1 이상: {n_tx}")
    hpbw = TWO_PI / n_beams if hpbw_rad is None else float(hpbw_rad)
    if not 0.0 < hpbw <= TWO_PI:
        raise ValueError(f"HPBW 는 (0, 2π] 범위: {hpbw}")
    major = 10 ** (0.8 * n_tx) if major_gain_db is None else 10 ** (major_gain_db / 10.0)
    minor = 1.0 / np.sin(3 * np.pi / (2 * np.sqrt(n_tx))) ** 2
    if not major > minor > 0:
        raise ValueError(f"major 이득 {major:.3g} 는 minor 이득 {minor:.3g} 보다 커야 함")
    directions = (np.arange(n_beams) + 0.5) * TWO_PI / n_beams
    return BeamSet(directions=directions, n_tx=n_tx, hpbw_rad=hpbw,
                   major_gain=float(major), minor_gain=float(minor))


def antenna_gain(beams, serving, rng):
    """서빙 빔이면 major, 아니면 Φ/2π 확률로 major / 그 외 minor"""
    if serving:
        return beams.major_gain
    return beams.major_gain if rng.random() < beams.hpbw_rad / TWO_PI else beams.minor_gain


@dataclass(frozen=True)
class PathLossModel:
    a_los: float = 10 ** -6.41
    alpha_los: float = 2.0
    a_nlos: float = 10 ** -7.2
    alpha_nlos: float = 2.92
    beta: float = 0.003

    def __post_init__(self):
        if not self.a_los > self.a_nlos:
            raise ValueError("A_los 는 A_nlos 보다 커야 함")
        if not self.alpha_nlos > self.alpha_los:
            raise ValueError("α_nlos 는 α_los 보다 커야 함")
        if self.beta < 0:
            raise ValueError(f"blockage β 는 0 이상: {self.beta}")


def los_probability(d, beta):
    d = np.asarray(d, dtype=float)
    if np.any(d < 0) or beta < 0:
        raise ValueError(f"거리와 β 는 0 이상이어야 함 (d={d}, β={beta})")
    return np.exp(-beta * d)


def path_loss(d, los, model):
    """L = A·d^(-α), LoS/NLoS 별 파라미터"""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError(f"거리는 양수여야 함: {d}")
    los = np.asarray(los, dtype=bool)
    return np.where(los, model.a_los * d ** -model.alpha_los, model.a_nlos * d ** -model.alpha_nlos)


# ---- 소규모 페이딩 ----

SV_CLUSTERS = 5
SV_RAYS = 10
SV_CLUSTER_DECAY = 1.0        # 클러스터 전력 감쇠 (클러스터 인덱스 단위)
SV_CLUSTER_RATE_NS = 20.0     # 클러스터 도착 평균 간격
SV_RAY_RATE_NS = 5.0          # 레이 도착 평균 간격


def _sv_fading(shape, freq_hz, rng):
    """Saleh-Valenzuela 5 클러스터 × 10 레이, 주파수 선택적, E|h|²=1"""
    n_uv = int(np.prod(shape))
    cluster_power = np.exp(-np.arange(SV_CLUSTERS) / SV_CLUSTER_DECAY)
    cluster_power /= cluster_power.sum()
    ray_var = np.repeat(cluster_power / SV_RAYS, SV_RAYS)  # (50,)

    cluster_delay = np.cumsum(rng.exponential(SV_CLUSTER_RATE_NS, (n_uv, SV_CLUSTERS)), axis=1)
    ray_delay = rng.exponential(SV_RAY_RATE_NS, (n_uv, SV_CLUSTERS, SV_RAYS))
    delay_s = (cluster_delay[:, :, None] + ray_delay).reshape(n_uv, -1) * 1e-9
    alpha = (rng.standard_normal((n_uv, ray_var.size)) + 1j * rng.standard_normal((n_uv, ray_var.size)))
    alpha *= np.sqrt(ray_var / 2.0)

    phase = np.exp(-1j * TWO_PI * delay_s[:, :, None] * freq_hz[None, None, :])
    h = np.einsum("nr,nrk->nk", alpha, phase)
    return (np.abs(h) ** 2).reshape(*shape, len(freq_hz))


def _rayleigh_fading(shape, n_tiles, rng):
    return rng.exponential(1.0, (*shape, n_tiles))


def draw_small_scale(n_users, n_beams, grid, rng, fading="sv"):
    if fading == "sv":
        return _sv_fading((n_users, n_beams), grid.center_freq_hz, rng)
    if fading == "rayleigh":
        return _rayleigh_fading((n_users, n_beams), len(grid), rng)
    raise ValueError(f"알 수 없는 페이딩 모델: {fading!r} (sv | rayleigh)")


@dataclass(frozen=True)
class ChannelState:
    small_scale: np.ndarray   # (U, M, K) |h|²
    antenna_gain: np.ndarray  # (U, M)
    path_loss: np.ndarray     # (U,)
    los: np.ndarray           # (U,)
    aligned: np.ndarray       # (U,) 섹터 빔

    @property
    def n_users(self):
        return self.small_scale.shape[0]

    @property
    def n_beams(self):
        return self.small_scale.shape[1]

    @property
    def gains(self):
        """|h|²·G·L → (U, M, K)"""
        return self.small_scale * self.antenna_gain[:, :, None] * self.path_loss[:, None, None]

    def take_tiles(self, indices):
        return replace(self, small_scale=self.small_scale[:, :, indices])

    def redraw_fading(self, grid, rng, fading="sv"):
        """sub-frame 경계에서 소규모 페이딩만 새로 뽑음 (대규모 상태 유지)"""
        return replace(self, small_scale=draw_small_scale(self.n_users, self.n_beams, grid, rng, fading))

    def omnidirectional(self):
        """단일 무지향 빔 (G=1) 채널 - 같은 드롭의 정렬 빔 |h|² 를 사용"""
        u = np.arange(self.n_users)
        return ChannelState(small_scale=self.small_scale[u, self.aligned, :][:, None, :].copy(),
                            antenna_gain=np.ones((self.n_users, 1)),
                            path_loss=self.path_loss.copy(), los=self.los.copy(),
                            aligned=np.zeros(self.n_users, dtype=int))


def draw_channel(users, beams, grid, model, rng, fading="sv"):
    """드롭 하나의 채널: LoS 추첨 → 경로손실 → 안테나 이득 → 소규모 페이딩 순서로 rng 사용

    users 는 distance_m / phase_rad 속성을 가진 객체 목록
    """
    if not users:
        raise ValueError("사용자가 최소 1 명 필요")
    distances = np.array([u.distance_m for u in users], dtype=float)
    phases = np.array([u.phase_rad for u in users], dtype=float)
    n_users = len(distances)
    los = rng.random(n_users) < los_probability(distances, model.beta)
    loss = path_loss(distances, los, model)
    aligned = beams.aligned_beam(phases)

    side_major = rng.random((n_users, beams.n_beams)) < beams.hpbw_rad / TWO_PI
    gain = np.where(side_major, beams.major_gain, beams.minor_gain)
    gain[np.arange(n_users), aligned] = beams.major_gain

    small = draw_small_scale(n_users, beams.n_beams, grid, rng, fading)
    logger.debug(f"채널 생성: 사용자 {n_users}, 빔 {beams.n_beams}, LoS {int(los.sum())}")
    return ChannelState(small_scale=small, antenna_gain=gain, path_loss=loss, los=los, aligned=aligned)


# ---- 간섭 / SINR ----

def beam_of_users(assoc):
    """(M, U) 연결 행렬 → 사용자별 빔 인덱스 (-1 = 미연결)"""
    assoc = np.asarray(assoc)
    beam = np.argmax(assoc, axis=0)
    return np.where(assoc.sum(axis=0) > 0, beam, -1)


def coupling_matrices(channel, beam_of, self_interference=False):
    """타일별 신호 계수 a (K, U) 와 간섭 계수 A (K, U, U)

    A[k, u, v] = 다른 빔 θ_v ≠ θ_u 에 실린 v 의 전력이 u 에 주는 이득.
    self_interference=True 면 사용자 자신의 전력 × 타 빔 이득 합을 대각에 둔다.
    """
    g = channel.gains  # (U, M, K)
    n_users = g.shape[0]
    beam_of = np.asarray(beam_of)
    active = beam_of >= 0
    b = np.where(active, beam_of, 0)
    u = np.arange(n_users)

    a = np.where(active[:, None], g[u, b, :], 0.0).T  # (K, U)
    if self_interference:
        other = g.sum(axis=1) - g[u, b, :]  # (U, K)
        diag = np.where(active[:, None], other, 0.0).T
        A = np.zeros((g.shape[2], n_users, n_users))
        A[:, u, u] = diag
        return a, A

    # g[u, θ_v, k] (K, U, V)
    cross = np.transpose(g[:, b, :], (2, 0, 1))
    mask = (b[:, None] != b[None, :]) & active[:, None] & active[None, :]
    return a, cross * mask[None, :, :]


def sinr_matrix(p, assoc, channel, noise_w, self_interference=False):
    """모든 (사용자, 타일) 의 SINR (U, K) - 연결된 빔 기준"""
    a, A = coupling_matrices(channel, beam_of_users(assoc), self_interference)
    pk = np.asarray(p).T  # (K, U)
    interference = np.einsum("kuv,kv->ku", A, pk)
    return (a * pk / (np.asarray(noise_w)[:, None] + interference)).T


def sinr(alloc, channel, u, tile, theta, noise_w, self_interference=False):
    """사용자 u 가 빔 θ 로 타일 k 를 받을 때의 SINR"""
    g = channel.gains
    p = np.asarray(alloc.p)
    if self_interference:
        others = [t for t in range(channel.n_beams) if t != theta]
        interference = p[u, tile] * g[u, others, tile].sum()
    else:
        beam_power = np.asarray(alloc.assoc, dtype=float) @ p[:, tile]
        interference = sum(g[u, t, tile] * beam_power[t] for t in range(channel.n_beams) if t != theta)
    return p[u, tile] * g[u, theta, tile] / (noise_w[tile] + interference)
