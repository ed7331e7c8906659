#!/usr/bin/env python3
# baselines.py - 비교 기법 (균등 전력 / 무지향 단일 빔) 과 라운드 단위 실행 진입점

import logging
import time
from dataclasses import dataclass
from enum import Enum

from barrier_solver import InnerInfeasibleError
from optimizer import (DinkelbachState, InfeasibleScenarioError, dinkelbach, evaluate,
                       finalize_binary, initialize_feasible, slacks_for)
from sim_config import OptSettings

logger = logging.getLogger("mmwave_ee.baselines")


class BaselineKind(Enum):
    EQUAL_POWER_BEAMS_RBS = "baseline1"
    SINGLE_BEAM_RBS_POWER = "baseline2"


@dataclass
class SubframeSolution:
    method: str
    alloc: object
    rate_bits: float
    power_w: float
    ee: float
    state: DinkelbachState
    infeasible: bool = False
    qos_violated: bool = False
    binary_deviation: float = 0.0
    solve_s: float = 0.0


def equal_tile_power(scenario):
    """빔당 타일 수로 P_max 를 나눈 고정 전력"""
    return scenario.power.p_max / scenario.n_tiles


def proposed(scenario, settings=None, assoc=None, beam_selection=True, verbose=False):
    settings = settings or OptSettings()
    res = dinkelbach(scenario, settings, mode="joint", assoc=assoc, beam_selection=beam_selection,
                     verbose=verbose)
    fin = finalize_binary(res.alloc, scenario, q=res.q, settings=settings, mode="joint")
    return res, fin


def baseline1(scenario, settings=None, assoc=None, beam_selection=True, verbose=False):
    """균등 고정 전력 + 빔 / RB 최적화 (μ=2 고정 그리드)"""
    if scenario.grid.layout != "fixed-60":
        raise ValueError(f"baseline1 은 fixed-60 그리드 전용: {scenario.grid.layout}")
    settings = settings or OptSettings()
    p_eq = equal_tile_power(scenario)
    res = dinkelbach(scenario, settings, mode="rb_only", assoc=assoc, beam_selection=beam_selection,
                     p_equal=p_eq, verbose=verbose)
    fin = finalize_binary(res.alloc, scenario, q=res.q, settings=settings, mode="rb_only", p_equal=p_eq)
    return res, fin


def baseline2(scenario, settings=None, verbose=False):
    """무지향 단일 빔 (G=1) + RB / 전력 최적화"""
    settings = settings or OptSettings()
    omni = scenario.omnidirectional()
    res = dinkelbach(omni, settings, mode="joint", beam_selection=False, verbose=verbose)
    fin = finalize_binary(res.alloc, omni, q=res.q, settings=settings, mode="joint")
    return res, fin


def solve_subframe(scenario, method="proposed", settings=None, assoc=None, beam_selection=True,
                   verbose=False):
    """한 라운드 실행. 실행 불가능하면 best-effort 초기 할당으로 대체하고 표시"""
    settings = settings or OptSettings()
    started = time.perf_counter()
    target = scenario.omnidirectional() if method == "baseline2" else scenario
    try:
        if method == "proposed":
            res, fin = proposed(scenario, settings, assoc, beam_selection, verbose)
        elif method == "baseline1":
            res, fin = baseline1(scenario, settings, assoc, beam_selection, verbose)
        elif method == "baseline2":
            res, fin = baseline2(scenario, settings, verbose)
        else:
            raise ValueError(f"알 수 없는 기법: {method!r}")
    except (InfeasibleScenarioError, InnerInfeasibleError) as exc:
        logger.warning(f"⚠️ 실행 불가능 라운드 ({method}): {exc}")
        p_tile = (scenario.power.p_max / scenario.n_tiles) if method == "baseline1" else None
        fallback_assoc = None if method == "baseline2" else assoc
        alloc = getattr(exc, "allocation", None)
        if alloc is None:
            alloc = initialize_feasible(target, assoc=fallback_assoc, p_tile=p_tile,
                                        margin=settings.init_margin, strict=False)
        rate, pc, ee = evaluate(target, alloc)
        return SubframeSolution(method=method, alloc=alloc, rate_bits=rate, power_w=pc, ee=ee,
                                state=DinkelbachState(sigma=settings.sigma, t_max=settings.t_max),
                                infeasible=True, qos_violated=slacks_for(target, alloc).qos_violated(),
                                solve_s=time.perf_counter() - started)

    rate, pc, ee = evaluate(target, fin.alloc)
    return SubframeSolution(method=method, alloc=fin.alloc, rate_bits=rate, power_w=pc, ee=ee,
                            state=res.state, qos_violated=fin.qos_violated,
                            binary_deviation=fin.max_deviation, solve_s=time.perf_counter() - started)
