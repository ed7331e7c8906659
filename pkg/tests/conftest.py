# conftest.py - 저장소 루트를 import 경로에 추가하고 작은 시드 시나리오 제공

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from scenario import Scenario  # noqa: E402
from sim_config import ScenarioConfig, with_override  # noqa: E402
from sim_runner import build_drop  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 오래 걸리는 배터리 테스트")


def desk_config(**overrides):
    """7 MHz mixed 그리드 (5×8 + 1×16 타일), 2 빔, 2 ms 프레임"""
    config = ScenarioConfig()
    base = {
        "n_embb": 2, "n_urllc": 2, "n_beams": 2, "frame_ms": 2.0,
        "grid.bandwidth_khz": 7000.0, "qos.embb_rate_bits": 500.0,
        "opt.max_sca_iters": 10, "run.plots": False,
    }
    base.update(overrides)
    for key, value in base.items():
        config = with_override(config, key, value)
    return config


def small_scenario(seed=0, layout="mixed", n_embb=2, n_urllc=1, n_beams=2, n_slice1=4, n_slice2=4,
                   embb_bits=300.0, tau_bits=256.0, self_interference=False):
    """Slice1 / Slice2 에서 몇 개씩 고른 작은 라운드 시나리오"""
    config = desk_config(**{"n_embb": n_embb, "n_urllc": n_urllc, "n_beams": n_beams,
                            "grid.layout": layout, "qos.embb_rate_bits": embb_bits})
    ctx = build_drop(config, seed, 0)
    s2 = ctx.grid.is_slice2
    pick = sorted(np.flatnonzero(~s2)[:n_slice1].tolist() + np.flatnonzero(s2)[:n_slice2].tolist())
    tau = np.array([tau_bits if u.is_urllc else 0.0 for u in ctx.users])
    return Scenario(grid=ctx.grid.take(pick), channel=ctx.channel.take_tiles(pick), users=ctx.users,
                    beams=ctx.beams, power=ctx.power, gaps=ctx.gaps, noise_w=ctx.noise_w[pick],
                    tau_bits=tau, t_f_ms=1.0, self_interference=self_interference)


@pytest.fixture
def scenario():
    return small_scenario(seed=1)


@pytest.fixture
def fixed_scenario():
    return small_scenario(seed=2, layout="fixed-60")
