#!/usr/bin/env python3
# barrier_solver.py - 타일 블록 구조를 이용한 log-barrier 내부점 솔버
#
# 변수는 타일별 (x, p) 블록. 헤시안 = 타일 블록 대각 + 빔 예산 / 전송률 제약의 rank-1 항
# 이므로 Woodbury 로 풀고, 작은 capacitance 행렬만 Cholesky 분해한다.

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

logger = logging.getLogger("mmwave_ee.barrier_solver")

LN2 = math.log(2.0)
MODES = ("joint", "power_only", "rb_only")


class InnerInfeasibleError(RuntimeError):
    """시작점이 (대리) 전송률 제약을 만족하지 못함"""

    def __init__(self, message, users=()):
        super().__init__(message)
        self.users = tuple(users)


@dataclass
class InnerProblem:
    """정규화된 볼록 부문제 (비트 / wt_ref 단위)

    maximize Σ wn·(log2 w − Q̃) − q_dyn·Σp − q_circ·Σx − Σ pen·x
    """
    mode: str
    mask: np.ndarray          # (K, U) 변수 존재 여부
    beam: np.ndarray          # (U,) 연결 빔 (-1 = 없음)
    n_beams: int
    C: np.ndarray             # (K, U, U) w = C·p + Γ·N_o 의 계수
    gamma_noise: np.ndarray   # (K, U) Γ·N_o
    D: np.ndarray             # (K, U, U) Q̃ 의 기울기
    q0: np.ndarray            # (K, U) 전개점에서의 Q
    p0: np.ndarray            # (K, U) 전개점 전력
    wn: np.ndarray            # (K,) 정규화된 W·T
    p_max: float
    q_dyn: float
    q_circ: float
    pen: np.ndarray           # (K, U) 패널티 선형 계수 λ(1−2x0)
    rate_users: np.ndarray    # (R,)
    rate_tiles: np.ndarray    # (R, K) bool
    rate_targets: np.ndarray  # (R,)
    x_fixed: np.ndarray = None
    p_equal: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"알 수 없는 모드: {self.mode!r}")
        m = self.mask.astype(float)
        # 고정된 (마스크 밖) 좌표는 미분에서 제외
        self.C = self.C * m[:, None, :]
        self.D = self.D * m[:, None, :]
        self.beam_onehot = np.zeros((self.mask.shape[1], max(self.n_beams, 1)))
        on = self.beam >= 0
        self.beam_onehot[np.flatnonzero(on), self.beam[on]] = 1.0
        self.rate_users = np.asarray(self.rate_users, dtype=int)
        self.rate_targets = np.asarray(self.rate_targets, dtype=float)
        self.rate_tiles = np.asarray(self.rate_tiles, dtype=bool).reshape(len(self.rate_users), self.mask.shape[0])
        self.rate_sets = self.rate_tiles & self.mask[:, self.rate_users].T  # (R, K)
        self.tile_beam_used = (m @ self.beam_onehot) > 0     # (K, M)
        self.beam_used = self.tile_beam_used.any(axis=0)     # (M,)

    @property
    def n_vars_per_tile(self):
        return 2 * self.mask.shape[1] if self.mode == "joint" else self.mask.shape[1]

    def n_barrier_terms(self):
        n = int(self.mask.sum())
        per_var = {"joint": 4, "power_only": 2, "rb_only": 2}[self.mode]
        tb = int(self.tile_beam_used.sum()) if self.mode != "power_only" else 0
        return per_var * n + tb + int(self.beam_used.sum()) + len(self.rate_users)

    def split(self, z):
        u = self.mask.shape[1]
        if self.mode == "joint":
            return z[:, :u], z[:, u:]
        if self.mode == "power_only":
            return self.x_fixed, z
        return z, self.p_equal * z

    def join(self, x, p):
        if self.mode == "joint":
            return np.concatenate([x, p], axis=1)
        if self.mode == "power_only":
            return p.copy()
        return x.copy()


@dataclass
class BarrierResult:
    x: np.ndarray
    p: np.ndarray
    objective: float
    t: float
    gap: float
    newton_steps: int
    stages: int
    converged: bool


class BarrierSolver:
    def __init__(self, problem, tol=1e-6, mu=10.0, newton_tol=1e-8, max_newton=80,
                 max_stages=30, verbose=False):
        self.pr = problem
        self.tol = tol
        self.mu = mu
        self.newton_tol = newton_tol
        self.max_newton = max_newton
        self.max_stages = max_stages
        self.verbose = verbose

    # ---- 값 계산 ----
    def _rate_parts(self, p):
        pr = self.pr
        w = np.einsum("kuv,kv->ku", pr.C, p) + pr.gamma_noise
        if np.any(w[pr.mask] <= 0):
            return None, None
        w = np.where(pr.mask, w, 1.0)
        q_tilde = pr.q0 + np.einsum("kuv,kv->ku", pr.D, p - pr.p0)
        s = np.log2(w) - q_tilde
        return w, s

    def objective(self, x, p):
        pr = self.pr
        _, s = self._rate_parts(p)
        m = pr.mask
        return float((pr.wn[:, None] * s)[m].sum() - pr.q_dyn * p[m].sum()
                     - pr.q_circ * x[m].sum() - (pr.pen * x)[m].sum())

    def rate_slacks(self, s):
        pr = self.pr
        if not len(pr.rate_users):
            return np.zeros(0)
        per_user = (pr.wn[:, None] * s)[:, pr.rate_users].T  # (R, K)
        return (per_user * pr.rate_sets).sum(axis=1) - pr.rate_targets

    def _linear_slacks(self, x, p):
        """모든 선형 barrier 항의 여유도 목록"""
        pr = self.pr
        m = pr.mask
        out = []
        if pr.mode != "power_only":
            out += [x[m], 1.0 - x[m]]
            tile_sum = (np.where(m, x, 0.0) @ pr.beam_onehot)
            out.append((1.0 - tile_sum)[pr.tile_beam_used])
        if pr.mode == "joint":
            out += [p[m], (pr.p_max * x - p)[m]]
        if pr.mode == "power_only":
            out += [p[m], (pr.p_max - p)[m]]
        beam_sum = np.where(m, p, 0.0).sum(axis=0) @ pr.beam_onehot
        out.append((pr.p_max - beam_sum)[pr.beam_used])
        return out

    def barrier_value(self, z, t):
        """F = −t·f + φ, 실행 불가능하면 inf"""
        x, p = self.pr.split(z)
        slacks = self._linear_slacks(x, p)
        if any(np.any(s <= 0) for s in slacks):
            return math.inf
        w, s = self._rate_parts(p)
        if w is None:
            return math.inf
        c = self.rate_slacks(s)
        if np.any(c <= 0):
            return math.inf
        phi = -sum(np.log(sl).sum() for sl in slacks) - np.log(c).sum()
        return -t * self.objective(x, p) + phi

    # ---- 미분 ----
    def _derivatives(self, z, t):
        pr = self.pr
        x, p = pr.split(z)
        mf = pr.mask.astype(float)
        n_u = pr.mask.shape[1]
        w, s = self._rate_parts(p)
        c = self.rate_slacks(s)

        # 목적함수 (−t·f)
        wn = pr.wn[:, None] * mf
        alpha = wn / (w * LN2)
        grad_rate = np.einsum("ku,kuv->kv", alpha, pr.C) - np.einsum("ku,kuv->kv", wn, pr.D)
        gp = -t * (grad_rate - pr.q_dyn * mf)
        gx = -t * (-(pr.q_circ + pr.pen) * mf)
        curv = t * wn / (w ** 2 * LN2)

        hxx = np.zeros((len(pr.wn), n_u, n_u))
        hxp = np.zeros_like(hxx)
        hpp = np.zeros_like(hxx)
        diag = np.arange(n_u)

        # 전송률 제약 barrier
        vecs, weights = [], []
        for r, u in enumerate(pr.rate_users):
            sel = pr.rate_sets[r].astype(float) * pr.wn
            grad_c = sel[:, None] * (pr.C[:, u, :] / (w[:, u:u + 1] * LN2) - pr.D[:, u, :])
            gp -= grad_c / c[r]
            curv[:, u] += sel / (c[r] * w[:, u] ** 2 * LN2)
            vecs.append(grad_c)
            weights.append(1.0 / c[r] ** 2)
        hpp += np.einsum("ku,kuv,kuw->kvw", curv, pr.C, pr.C)

        # 빔 예산 barrier (rank-1)
        beam_sum = (p * mf).sum(axis=0) @ pr.beam_onehot
        for b in np.flatnonzero(pr.beam_used):
            slack = pr.p_max - beam_sum[b]
            e = mf * pr.beam_onehot[:, b][None, :]
            gp += e / slack
            vecs.append(e)
            weights.append(1.0 / slack ** 2)

        if pr.mode != "power_only":
            xs = np.where(pr.mask, x, 0.5)
            gx += mf * (-1.0 / xs + 1.0 / (1.0 - xs))
            hxx[:, diag, diag] += mf * (1.0 / xs ** 2 + 1.0 / (1.0 - xs) ** 2)
            tile_slack = 1.0 - (x * mf) @ pr.beam_onehot  # (K, M)
            inv = np.where(pr.tile_beam_used, 1.0 / np.where(pr.tile_beam_used, tile_slack, 1.0), 0.0)
            gx += mf * (inv @ pr.beam_onehot.T)
            hxx += np.einsum("km,um,vm,ku,kv->kuv", inv ** 2, pr.beam_onehot, pr.beam_onehot, mf, mf)

        ps = np.where(pr.mask, p, 1.0)
        if pr.mode == "joint":
            gm = np.where(pr.mask, pr.p_max * x - p, 1.0)
            gp += mf * (-1.0 / ps + 1.0 / gm)
            gx += mf * (-pr.p_max / gm)
            hpp[:, diag, diag] += mf * (1.0 / ps ** 2 + 1.0 / gm ** 2)
            hxx[:, diag, diag] += mf * (pr.p_max ** 2 / gm ** 2)
            hxp[:, diag, diag] += mf * (-pr.p_max / gm ** 2)
        elif pr.mode == "power_only":
            up = np.where(pr.mask, pr.p_max - p, 1.0)
            gp += mf * (-1.0 / ps + 1.0 / up)
            hpp[:, diag, diag] += mf * (1.0 / ps ** 2 + 1.0 / up ** 2)

        return self._to_z(gx, gp, hxx, hxp, hpp, vecs), np.array(weights)

    def _to_z(self, gx, gp, hxx, hxp, hpp, vecs):
        pr = self.pr
        if pr.mode == "joint":
            g = np.concatenate([gx, gp], axis=1)
            top = np.concatenate([hxx, hxp], axis=2)
            bottom = np.concatenate([np.transpose(hxp, (0, 2, 1)), hpp], axis=2)
            B = np.concatenate([top, bottom], axis=1)
            V = [np.concatenate([np.zeros_like(v), v], axis=1) for v in vecs]
            free = np.concatenate([pr.mask, pr.mask], axis=1)
        elif pr.mode == "power_only":
            g, B, V, free = gp, hpp, list(vecs), pr.mask
        else:
            pe = pr.p_equal
            g = gx + pe * gp
            B = hxx + pe * (hxp + np.transpose(hxp, (0, 2, 1))) + pe ** 2 * hpp
            V = [pe * v for v in vecs]
            free = pr.mask
        # 고정 좌표는 단위 대각으로 두어 step 이 0 이 되게 함
        g = np.where(free, g, 0.0)
        idx = np.arange(B.shape[1])
        B[:, idx, idx] += np.where(free, 0.0, 1.0)
        V = [np.where(free, v, 0.0) for v in V]
        return g, B, V

    # ---- Newton ----
    @staticmethod
    def newton_direction(g, B, V, weights):
        """(B + Σ w_j v_j v_jᵀ) d = −g, B 는 타일 블록 대각"""
        k, n = g.shape
        if V:
            Vs = np.stack(V, axis=2)  # (K, n, J)
            rhs = np.concatenate([g[:, :, None], Vs], axis=2)
        else:
            rhs = g[:, :, None]
        sol = np.linalg.solve(B, rhs)
        y0 = sol[:, :, 0]
        if not V:
            return -y0
        yv = sol[:, :, 1:]
        cap = np.diag(1.0 / weights) + np.einsum("knj,kni->ji", Vs, yv)
        cap = 0.5 * (cap + cap.T)
        try:
            coef = cho_solve(cho_factor(cap), np.einsum("knj,kn->j", Vs, y0))
        except LinAlgError:
            coef = np.linalg.lstsq(cap, np.einsum("knj,kn->j", Vs, y0), rcond=None)[0]
        return -(y0 - np.einsum("knj,j->kn", yv, coef))

    def _max_step(self, z, d):
        """선형 제약에 대한 비율 검사"""
        x, p = self.pr.split(z)
        x2, p2 = self.pr.split(z + d)
        alpha = 1.0
        for s0, s1 in zip(self._linear_slacks(x, p), self._linear_slacks(x2, p2)):
            ds = s1 - s0
            neg = ds < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-s0[neg] / ds[neg])))
        return alpha

    def center(self, z, t):
        steps = 0
        value = self.barrier_value(z, t)
        for _ in range(self.max_newton):
            (g, B, V), weights = self._derivatives(z, t)
            d = self.newton_direction(g, B, V, weights)
            slope = float((g * d).sum())
            if -slope / 2.0 <= self.newton_tol:
                break
            step = min(1.0, 0.99 * self._max_step(z, d))
            while step > 1e-14:
                trial = z + step * d
                v_trial = self.barrier_value(trial, t)
                if v_trial <= value + 0.25 * step * slope:
                    break
                step *= 0.5
            else:
                logger.debug("line search 실패 - 현재 점 유지")
                break
            z, value = trial, v_trial
            steps += 1
        return z, steps

    def solve(self, z0, t0=None):
        pr = self.pr
        x0, p0 = pr.split(z0)
        if not pr.mask.any():
            return BarrierResult(x=np.zeros_like(pr.mask, dtype=float), p=np.zeros_like(pr.mask, dtype=float),
                                 objective=0.0, t=0.0, gap=0.0, newton_steps=0, stages=0, converged=True)
        if math.isinf(self.barrier_value(z0, 1.0)):
            _, s = self._rate_parts(p0)
            bad = []
            if s is not None:
                c = self.rate_slacks(s)
                bad = [int(u) for u, ci in zip(pr.rate_users, c) if ci <= 0]
            raise InnerInfeasibleError(f"내부 솔버 시작점이 실행 불가능 (전송률 위반 사용자: {bad})", bad)

        m = pr.n_barrier_terms()
        if t0 is None:
            t0 = max(1e-3, m / max(1.0, abs(self.objective(x0, p0))))
        t, z, total_steps, stage = t0, z0.copy(), 0, 0
        converged = False
        while stage < self.max_stages:
            z, steps = self.center(z, t)
            total_steps += steps
            stage += 1
            x, p = pr.split(z)
            f = self.objective(x, p)
            gap = m / t
            if self.verbose:
                logger.debug(f"barrier 단계 {stage}: t={t:.3g}, f={f:.6g}, gap={gap:.3g}, newton={steps}")
            if gap <= self.tol * max(1.0, abs(f)):
                converged = True
                break
            t *= self.mu
        x, p = pr.split(z)
        return BarrierResult(x=np.where(pr.mask, x, 0.0) if pr.mode != "power_only" else x.copy(),
                             p=np.where(pr.mask, p, 0.0), objective=self.objective(x, p), t=t,
                             gap=m / t, newton_steps=total_steps, stages=stage, converged=converged)
