import math
from dataclasses import replace

import numpy as np
import pytest

from baselines import solve_subframe
from optimizer import evaluate
from oracle import (EnumerationTooLargeError, TinyInstance, enumerate_optimum, enumeration_size,
                    lattice_feasible, make_tiny_instance, project_to_lattice)
from sim_config import OptSettings


def _single_link(levels=2):
    return make_tiny_instance(n_users=1, n_beams=1, n_tiles=1, n_levels=levels, n_urllc=0, embb_bits=0.0,
                              seed=3)


def test_single_link_picks_full_power():
    instance = _single_link()
    result = enumerate_optimum(instance)
    sc = instance.scenario
    assert result.feasible
    assert result.alloc.p[0, 0] == pytest.approx(sc.power.p_max)
    # 빔 없음 1 + 빔 0 에서 (없음, P_max) 2
    assert result.n_points == enumeration_size(instance) == 3
    assert result.n_feasible == 3
    rate, pc, ee = evaluate(sc, result.alloc)
    assert result.ee == pytest.approx(ee)
    pm = sc.power
    assert pc == pytest.approx(pm.p_max / pm.zeta + pm.n_tx * pm.p_c + pm.p_s)


def test_unreachable_target_has_no_feasible_point():
    instance = make_tiny_instance(n_users=2, n_beams=1, n_tiles=2, n_levels=2, n_urllc=1, urllc_packets=10 ** 6)
    result = enumerate_optimum(instance)
    assert not result.feasible
    assert result.n_feasible == 0
    assert math.isnan(result.ee)


def test_enumeration_cap():
    instance = make_tiny_instance(n_users=3, n_beams=2, n_tiles=4, n_levels=5, cap=10)
    with pytest.raises(EnumerationTooLargeError) as info:
        enumerate_optimum(instance)
    assert info.value.size == enumeration_size(instance)
    assert info.value.size > 10


def test_instance_limits():
    with pytest.raises(ValueError):
        make_tiny_instance(n_users=5)
    sc = make_tiny_instance(n_users=1, n_beams=1, n_tiles=1).scenario
    with pytest.raises(ValueError):
        TinyInstance(scenario=sc, power_levels=(0.0, 1.5))


def _permuted(instance, perm):
    sc = instance.scenario
    ch = sc.channel
    perm = np.asarray(perm)
    channel = replace(ch, small_scale=ch.small_scale[perm], antenna_gain=ch.antenna_gain[perm],
                      path_loss=ch.path_loss[perm], los=ch.los[perm], aligned=ch.aligned[perm])
    scenario = replace(sc, channel=channel, users=[sc.users[i] for i in perm], tau_bits=sc.tau_bits[perm])
    return replace(instance, scenario=scenario)


def test_optimum_is_invariant_under_user_relabeling():
    instance = make_tiny_instance(n_users=3, n_beams=2, n_tiles=2, n_levels=3, seed=4)
    base = enumerate_optimum(instance)
    swapped = enumerate_optimum(_permuted(instance, [2, 0, 1]))
    assert base.feasible == swapped.feasible
    if base.feasible:
        assert swapped.ee == pytest.approx(base.ee, rel=1e-9)
    assert swapped.n_feasible == base.n_feasible


def test_finer_lattice_never_lowers_optimum():
    coarse = make_tiny_instance(n_users=2, n_beams=2, n_tiles=2, n_levels=3, seed=6)
    fine = replace(coarse, power_levels=(0.0, 0.25, 0.5, 0.75, 1.0))
    a, b = enumerate_optimum(coarse), enumerate_optimum(fine)
    if a.feasible:
        assert b.feasible
        assert b.ee >= a.ee * (1 - 1e-12)


def test_parallel_search_matches_serial():
    instance = make_tiny_instance(n_users=2, n_beams=2, n_tiles=2, n_levels=5, seed=8)
    serial = enumerate_optimum(instance, workers=1)
    parallel = enumerate_optimum(instance, workers=2)
    assert serial.n_feasible == parallel.n_feasible
    assert serial.n_points == parallel.n_points
    if serial.feasible:
        assert parallel.ee == serial.ee
        np.testing.assert_array_equal(parallel.alloc.p, serial.alloc.p)


def test_oracle_bounds_projected_algorithm_output():
    instance = make_tiny_instance(n_users=2, n_beams=2, n_tiles=2, n_levels=5, seed=1)
    best = enumerate_optimum(instance)
    sol = solve_subframe(instance.scenario, "proposed", OptSettings(t_max=4, max_sca_iters=10))
    projected = project_to_lattice(instance, sol.alloc)
    assert np.all(np.isin(projected.p, np.concatenate([[0.0], instance.levels_w])))
    if lattice_feasible(instance, projected):
        assert best.feasible
        _, _, ee = evaluate(instance.scenario, projected)
        assert best.ee >= ee * (1 - 1e-9)


@pytest.mark.slow
def test_algorithm_reaches_most_of_quantized_optimum():
    hits, counted = 0, 0
    for seed in range(20):
        instance = make_tiny_instance(n_users=3, n_beams=2, n_tiles=4, n_levels=5, seed=seed)
        best = enumerate_optimum(instance, workers=2)
        if not best.feasible:
            continue
        sol = solve_subframe(instance.scenario, "proposed", OptSettings())
        counted += 1
        hits += int(not sol.infeasible and sol.ee >= 0.8 * best.ee)
    assert counted > 0
    assert hits >= 0.9 * counted
