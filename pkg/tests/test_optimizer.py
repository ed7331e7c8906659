import numpy as np
import pytest
from conftest import desk_config, small_scenario
from hypothesis import given, settings
from hypothesis import strategies as st

from baselines import solve_subframe
from optimizer import (AllocationPolicy, InfeasibleScenarioError, ScaState, assoc_from_beams, dinkelbach,
                       dinkelbach_residual, evaluate, finalize_binary, initialize_feasible, interior_start,
                       penalty_terms, sca_loop, select_beams, slacks_for, start_rate_slacks, surrogate_terms,
                       true_tile_bits)
from oracle import make_tiny_instance
from power import total_power
from scenario import Scenario
from sim_config import OptSettings
from sim_runner import build_drop


def _random_alloc(scenario, seed=0, beams=(0, 1, 0)):
    rng = np.random.default_rng(seed)
    shape = (scenario.n_users, scenario.n_tiles)
    return AllocationPolicy(x=rng.uniform(0.1, 0.9, shape), p=rng.uniform(0.5, 1.5, shape),
                            assoc=assoc_from_beams(np.array(beams), scenario.n_beams))


def test_allocation_policy_rejects_double_association():
    with pytest.raises(ValueError):
        AllocationPolicy(x=np.zeros((1, 1)), p=np.zeros((1, 1)), assoc=np.array([[1], [1]]))


def test_binary_residual_and_beams_utilized():
    alloc = AllocationPolicy(x=np.array([[0.5, 1.0], [0.0, 0.0]]), p=np.zeros((2, 2)),
                             assoc=np.array([[1, 1], [0, 0]]))
    assert alloc.binary_residual() == pytest.approx(0.25)
    assert alloc.beams_utilized() == 1
    assert not alloc.is_binary()
    assert alloc.beam_of.tolist() == [0, 0]


def test_surrogate_is_a_minorant_and_tight_at_expansion_point(scenario):
    base = _random_alloc(scenario, seed=1)
    expansion = ScaState(expansion_x=base.x, expansion_p=base.p, lambda_1=1.0)
    at_point = surrogate_terms(base, scenario, expansion)
    np.testing.assert_allclose(at_point.surrogate_rate, at_point.true_rate, rtol=0, atol=1e-12)

    for seed in range(2, 52):
        other = _random_alloc(scenario, seed=seed)
        terms = surrogate_terms(other, scenario, expansion)
        assert np.all(terms.surrogate_rate <= terms.true_rate + 1e-9)


def test_interference_gradient_matches_central_differences(scenario):
    base = _random_alloc(scenario, seed=3)
    expansion = ScaState(expansion_x=base.x, expansion_p=base.p, lambda_1=1.0)
    grad = surrogate_terms(base, scenario, expansion).grad_q  # (K, U, V)
    h = 1e-5
    numeric = np.zeros_like(grad)
    for v in range(scenario.n_users):
        for k in range(scenario.n_tiles):
            up, down = base.p.copy(), base.p.copy()
            up[v, k] += h
            down[v, k] -= h
            q_up = surrogate_terms(AllocationPolicy(x=base.x, p=up, assoc=base.assoc), scenario, expansion).q
            q_dn = surrogate_terms(AllocationPolicy(x=base.x, p=down, assoc=base.assoc), scenario, expansion).q
            numeric[k, :, v] = (q_up[:, k] - q_dn[:, k]) / (2 * h)
    assert np.abs(grad).max() > 0
    np.testing.assert_allclose(numeric, grad, rtol=1e-5, atol=1e-8 * np.abs(grad).max())


_unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(x=st.lists(_unit, min_size=6, max_size=6), x0=st.lists(_unit, min_size=6, max_size=6),
       lam=st.floats(min_value=0.0, max_value=10.0))
def test_penalty_majorizes_binary_residual(x, x0, lam):
    x, x0 = np.array(x), np.array(x0)
    value, grad = penalty_terms(x, x0, lam)
    assert value >= lam * np.sum(x * (1 - x)) - 1e-9
    same, _ = penalty_terms(x0, x0, lam)
    assert same == pytest.approx(lam * np.sum(x0 * (1 - x0)), abs=1e-9)
    np.testing.assert_allclose(grad, lam * (1 - 2 * x0))


def test_evaluate_is_consistent_with_tile_bits(scenario):
    init = initialize_feasible(scenario, strict=False)
    rate, pc, ee = evaluate(scenario, init)
    assert ee == pytest.approx(rate / (pc * scenario.t_f_s), rel=1e-12)
    assert pc == pytest.approx(total_power(init, scenario.power))
    assert rate == pytest.approx(float((true_tile_bits(scenario, init) * init.x).sum()), rel=1e-9)


def test_select_beams_falls_back_to_aligned_beam_without_rate(scenario):
    empty = AllocationPolicy.empty(scenario.n_users, scenario.n_tiles, scenario.n_beams)
    assoc = select_beams(scenario, empty)
    assert assoc.sum(axis=0).tolist() == [1] * scenario.n_users
    np.testing.assert_array_equal(np.argmax(assoc, axis=0), scenario.channel.aligned)


@pytest.fixture
def single_beam():
    return small_scenario(seed=1, n_beams=1)


def test_initializer_meets_qos_on_single_beam(single_beam):
    init = initialize_feasible(single_beam)
    slacks = slacks_for(single_beam, init)
    assert not slacks.qos_violated()
    assert not {"c3", "c4", "c8", "c9"} & set(slacks.violated())
    assert init.is_binary()


def test_initializer_reports_shortfall():
    hopeless = small_scenario(seed=1, n_beams=1, tau_bits=1e7)
    with pytest.raises(InfeasibleScenarioError) as info:
        initialize_feasible(hopeless)
    urllc = int(np.flatnonzero(hopeless.is_urllc)[0])
    assert urllc in info.value.shortfall
    assert info.value.allocation is not None
    # strict=False 면 경고만 남기고 best-effort 할당 반환
    assert initialize_feasible(hopeless, strict=False).x.any()


def test_dinkelbach_ratio_never_decreases_and_finalizes(single_beam):
    opt = OptSettings(t_max=5, max_sca_iters=10)
    result = dinkelbach(single_beam, opt)
    history = result.state.q_history
    assert history[0] == 0.0
    assert all(b >= a - 1e-9 * max(1.0, a) for a, b in zip(history, history[1:]))
    for rec in result.state.history:
        assert rec.ee(single_beam.t_f_s) == pytest.approx(rec.ee_value)

    fin = finalize_binary(result.alloc, single_beam, q=result.q, settings=opt)
    assert fin.alloc.is_binary()
    assert not {"c4", "c8", "c9"} & set(fin.violated)
    assert 0.0 <= fin.max_deviation <= 0.5


def test_two_beam_round_keeps_structural_constraints(scenario):
    sol = solve_subframe(scenario, "proposed", OptSettings(t_max=4, max_sca_iters=10))
    assert sol.alloc.is_binary()
    assert sol.ee == pytest.approx(sol.rate_bits / (sol.power_w * scenario.t_f_s))
    slacks = slacks_for(scenario, sol.alloc)
    assert not {"c3", "c4", "c9"} & set(slacks.violated())
    if not sol.infeasible:
        assert sol.qos_violated == slacks.qos_violated()


def test_single_link_matches_line_search():
    instance = make_tiny_instance(n_users=1, n_beams=1, n_tiles=1, n_urllc=0, embb_bits=0.0, seed=5)
    sc = instance.scenario
    pm = sc.power
    g = sc.channel.gains[0, 0, 0]
    wt = sc.grid.wt[0]
    p = np.linspace(1e-4, pm.p_max, 200001)
    rate = wt * np.log2(1 + p * g / (sc.gamma[0] * sc.noise_w[0]))
    ee = rate / (sc.t_f_s * (p / pm.zeta + pm.n_tx * pm.p_c + pm.p_s))
    best = float(ee.max())

    sol = solve_subframe(sc, "proposed", OptSettings())
    assert not sol.infeasible
    assert sol.ee >= 0.9 * best
    assert sol.ee <= best * (1 + 1e-6)


def test_dinkelbach_residual_is_relative_to_rate():
    # R = q·T_f·PC = 10 · 0.5 · 4 = 20
    assert dinkelbach_residual(-2.0, 10.0, 4.0, 0.5) == pytest.approx(0.1)
    assert dinkelbach_residual(3.0, 0.0, 4.0, 0.5) == 0.0


@pytest.mark.parametrize("seed", range(8))
def test_converged_means_residual_below_sigma(seed):
    sc = small_scenario(seed=seed, n_embb=2, n_urllc=2, tau_bits=256.0)
    opt = OptSettings(t_max=5, max_sca_iters=10)
    try:
        result = dinkelbach(sc, opt)
    except InfeasibleScenarioError:
        return
    state = result.state
    assert not (state.converged and state.stalled)
    if state.converged:
        last = state.history[-1]
        residual = dinkelbach_residual(last.y_value, last.ee_value, last.power_w, sc.t_f_s)
        assert residual <= opt.sigma
        assert residual == pytest.approx(abs(last.y_value) / last.rate_bits, rel=1e-9)
    elif not state.stalled:
        assert len(state.history) == opt.t_max


@pytest.mark.parametrize("seed", range(10))
def test_interior_start_keeps_rate_targets(seed):
    sc = small_scenario(seed=seed, n_urllc=2, tau_bits=512.0)
    init = initialize_feasible(sc, strict=False)
    start = interior_start(sc, init)
    eligible = sc.eligible() & (init.assoc.sum(axis=0) > 0)[:, None]
    assert np.all(start.x[eligible] > 0) and np.all(start.x[eligible] < 1)
    assert np.all(start.p[eligible] > 0)
    assert np.all(start.p[eligible] < start.x[eligible] * sc.power.p_max)
    if np.all(start_rate_slacks(sc, init, "joint") > 1e-3):
        assert np.all(start_rate_slacks(sc, start, "joint") > 0)


def test_sca_objective_never_decreases_within_a_penalty_stage(single_beam):
    init = initialize_feasible(single_beam)
    _, _, ee = evaluate(single_beam, init)
    for q in (0.0, 0.5 * ee):
        res = sca_loop(q, init.assoc, init, single_beam, OptSettings(max_sca_iters=10))
        history = res.objective_history
        assert res.iterations >= 1
        for (lam_a, f_a), (lam_b, f_b) in zip(history, history[1:]):
            if lam_a == lam_b:
                assert f_b >= f_a - 1e-9 * max(1.0, abs(f_a))


def _desk_battery_scenario(seed):
    """4 빔, eMBB 4 + URLLC 4, mixed 12×8 + 6×16 타일"""
    config = desk_config(n_embb=4, n_urllc=4, n_beams=4, **{"grid.bandwidth_khz": 17280.0,
                                                           "grid.guard_band_khz": 0.0})
    ctx = build_drop(config, seed, 0)
    tau = np.array([512.0 if u.is_urllc else 0.0 for u in ctx.users])
    return Scenario(grid=ctx.grid, channel=ctx.channel, users=ctx.users, beams=ctx.beams, power=ctx.power,
                    gaps=ctx.gaps, noise_w=ctx.noise_w, tau_bits=tau, t_f_ms=1.0)


@pytest.mark.slow
def test_dinkelbach_battery_converges_monotonically():
    iterations, converged, solved = [], 0, 0
    for seed in range(50):
        sc = _desk_battery_scenario(seed)
        assert sc.grid.count_by_mu() == {2: 96, 3: 96}
        sol = solve_subframe(sc, "proposed", OptSettings(t_max=10))
        if sol.infeasible:
            continue
        solved += 1
        history = sol.state.q_history
        assert all(b >= a - 1e-9 * max(1.0, a) for a, b in zip(history, history[1:]))
        converged += int(sol.state.converged)
        iterations.append(len(sol.state.history))
    assert solved > 0
    assert converged >= 0.95 * solved
    assert np.median(iterations) <= 6
